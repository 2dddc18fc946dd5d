//! End-to-end checks that tie the eigensolver and the simulator together:
//! optimality of the extracted policy, agreement of the eigenvalue with the
//! simulated risk-sensitive rate, and the bounded-coefficient
//! (near-monotone) regime.

mod montecarlo;
mod nearmono;
mod optimality;

use thiserror::Error;

use crate::discretize::DiscretizeError;
use crate::eigensolve::EigenError;
use crate::simulate::SimError;

pub use montecarlo::{lambda_equals_optimal_value, PolicyRate, ValueReport};
pub use nearmono::{
    growth_bound, near_monotone_suite, validate_near_monotone, GrowthBound, NearMonotoneOptions,
    NearMonotoneReport, NearMonotoneValidation, SublevelCheck,
};
pub use optimality::{random_policies, verify_optimality, AlternativeResult, OptimalityReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
