use thiserror::Error;

/// Errors raised by the solver, simulator and verification battery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MertonError {
    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid preferences: {0}")]
    InvalidPreferences(String),

    #[error("ill-posed model: finiteness margin {margin} is not positive")]
    IllPosed { margin: f64 },

    #[error("wealth must be positive, got {0}")]
    NonPositiveWealth(f64),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("invalid derivatives: {0}")]
    InvalidDerivs(String),

    #[error("Hamiltonian is unbounded at p={p}, P={pp}")]
    UnboundedHamiltonian { p: f64, pp: f64 },

    #[error("objective diverges: growth exponent {growth} >= discount rate {rho}")]
    Divergent { growth: f64, rho: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("concavity guard violated at node {node} (x={x}, p={p}, P={pp})")]
    GuardViolation {
        node: usize,
        x: f64,
        p: f64,
        pp: f64,
    },

    #[error("no convergence after {iterations} iterations (last step {last_step})")]
    NonConvergence { iterations: usize, last_step: f64 },
}

pub type Result<T> = std::result::Result<T, MertonError>;
