//! Explicit solution of the infinite-horizon problem: the Merton constant,
//! the value function and its derivatives, the optimal feedback fractions,
//! the law of optimal wealth, and the objective of any proportional strategy.
//!
//! Powers of wealth are computed as `exp((1 - gamma) ln x)` so non-integer
//! risk aversion is handled uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{MertonError, Result};
use crate::model::ModelSpec;

/// Feedback strategy `c = kappa * x`, `pi = theta * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalStrategy {
    pub kappa: f64,
    pub theta: f64,
}

impl ProportionalStrategy {
    pub fn new(kappa: f64, theta: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(MertonError::InvalidStrategy(format!(
                "consumption fraction must be finite and >= 0, got {kappa}"
            )));
        }
        if !theta.is_finite() {
            return Err(MertonError::InvalidStrategy(format!(
                "risky fraction must be finite, got {theta}"
            )));
        }
        Ok(Self { kappa, theta })
    }
}

/// Closed-form solution bundle, as written to CLI reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSolution {
    pub a: f64,
    pub kappa_hat: f64,
    pub theta_hat: f64,
    pub drift_opt: f64,
    pub vol_opt: f64,
}

impl ClosedFormSolution {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let a = merton_constant(spec)?;
        let strat = optimal_strategy(spec)?;
        let (drift_opt, vol_opt) = optimal_wealth_law(spec)?;
        Ok(Self {
            a,
            kappa_hat: strat.kappa,
            theta_hat: strat.theta,
            drift_opt,
            vol_opt,
        })
    }
}

/// `x^(1-gamma)` for `x > 0`.
pub(crate) fn wealth_power(spec: &ModelSpec, x: f64) -> f64 {
    ((1.0 - spec.gamma()) * x.ln()).exp()
}

fn check_wealth(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(MertonError::NonPositiveWealth(x))
    }
}

/// Optimal consumption fraction `margin / gamma`, which equals `a^(-1/gamma)`.
fn kappa_hat(spec: &ModelSpec) -> Result<f64> {
    spec.require_well_posed()?;
    Ok(spec.margin() / spec.gamma())
}

/// `a = ((rho - (1-gamma)(r + lambda^2/(2 gamma))) / gamma)^(-gamma)`.
pub fn merton_constant(spec: &ModelSpec) -> Result<f64> {
    let k = kappa_hat(spec)?;
    Ok((-spec.gamma() * k.ln()).exp())
}

/// Value `V(x) = a x^(1-gamma) / (1-gamma)`.
pub fn value(spec: &ModelSpec, x: f64) -> Result<f64> {
    check_wealth(x)?;
    Ok(merton_constant(spec)? * wealth_power(spec, x) / (1.0 - spec.gamma()))
}

/// `V'(x) = a x^(-gamma)`.
pub fn value_d1(spec: &ModelSpec, x: f64) -> Result<f64> {
    check_wealth(x)?;
    Ok(merton_constant(spec)? * (-spec.gamma() * x.ln()).exp())
}

/// `V''(x) = -gamma a x^(-gamma-1)`.
pub fn value_d2(spec: &ModelSpec, x: f64) -> Result<f64> {
    check_wealth(x)?;
    Ok(-spec.gamma() * merton_constant(spec)? * (-(spec.gamma() + 1.0) * x.ln()).exp())
}

/// Optimal fractions `(a^(-1/gamma), lambda / (sigma gamma))`.
pub fn optimal_strategy(spec: &ModelSpec) -> Result<ProportionalStrategy> {
    Ok(ProportionalStrategy {
        kappa: kappa_hat(spec)?,
        theta: spec.lambda() / (spec.sigma() * spec.gamma()),
    })
}

/// Drift and volatility of `log X` under the optimal feedback:
/// `((r - rho)/gamma + lambda^2/(2 gamma), lambda / gamma)`.
pub fn optimal_wealth_law(spec: &ModelSpec) -> Result<(f64, f64)> {
    spec.require_well_posed()?;
    let g = spec.gamma();
    let lam = spec.lambda();
    Ok(((spec.r() - spec.rho()) / g + lam * lam / (2.0 * g), lam / g))
}

/// Exponential growth rate of `E[X_t^(1-gamma)]` under a proportional strategy:
/// `(1-gamma)(r + sigma lambda theta - kappa) - gamma (1-gamma) sigma^2 theta^2 / 2`.
pub fn growth_exponent(spec: &ModelSpec, strat: &ProportionalStrategy) -> f64 {
    let g = spec.gamma();
    let s = spec.sigma();
    let th = strat.theta;
    (1.0 - g) * (spec.r() + s * spec.lambda() * th - strat.kappa)
        - 0.5 * g * (1.0 - g) * s * s * th * th
}

/// Objective of a proportional strategy started at `x`:
/// `x^(1-gamma) kappa^(1-gamma) / ((1-gamma)(rho - g))`, or `-inf` when
/// `rho <= g` or `kappa = 0`.
pub fn proportional_objective(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    x: f64,
) -> Result<f64> {
    check_wealth(x)?;
    ProportionalStrategy::new(strat.kappa, strat.theta)?;
    if strat.kappa == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let rate = spec.rho() - growth_exponent(spec, strat);
    if rate <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let scale = wealth_power(spec, x * strat.kappa);
    Ok(scale / ((1.0 - spec.gamma()) * rate))
}

/// Exponent of `e^(-rho t) V(X_t)` along the deterministic path of
/// `c = alpha x`, `pi = 0`: `-rho + (1-gamma)(r - alpha)`.
pub fn transversality_exponent(spec: &ModelSpec, alpha: f64) -> f64 {
    -spec.rho() + (1.0 - spec.gamma()) * (spec.r() - alpha)
}

/// Consumption fraction at which the transversality exponent changes sign:
/// `rho / (gamma - 1) + r`.
pub fn transversality_threshold(spec: &ModelSpec) -> f64 {
    spec.rho() / (spec.gamma() - 1.0) + spec.r()
}
