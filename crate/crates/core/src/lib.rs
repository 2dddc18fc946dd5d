//! Ergodic risk-sensitive control of regime-switching diffusions.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod discretize;
pub mod eigensolve;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod simulate;
pub mod verify;
