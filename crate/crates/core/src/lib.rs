//! Verified solver for the infinite-horizon Merton consumption-investment
//! problem with CRRA risk aversion above one.
//!
//! The crate computes the closed-form optimum, recovers it independently by
//! finite-difference policy iteration on the stationary HJB equation, and
//! checks the remaining structural claims by seeded Monte-Carlo simulation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod hamiltonian;
pub mod hjb_numeric;
pub mod model;
pub mod output;
pub mod sde;
pub mod stats;
pub mod verify;

pub use closed_form::{ClosedFormSolution, ProportionalStrategy};
pub use error::{MertonError, Result};
pub use model::{MarketParams, ModelSpec, Preferences};
