//! Principal eigenpairs of assembled operators and the semilinear
//! (min over controls) eigenproblem.
//!
//! The principal eigenvalue is the rightmost one. For an irreducible Metzler
//! matrix it is real and simple, with a strictly positive eigenvector, which
//! is normalized so that `min_k psi_k(0) = 1`.

mod checks;
mod policy;
mod principal;
mod sweep;

use thiserror::Error;

use crate::discretize::DiscretizeError;

pub use checks::{
    potential_monotonicity_check, uniqueness_check, PotentialReport, UniquenessReport,
};
pub use policy::{
    minimizing_selector, selector_gap, solve_semilinear, SemilinearSolution, SolveOptions,
    StopReason,
};
pub use principal::{
    principal_eigenpair, principal_eigenpair_from, relative_sup_distance, EigenPair, Normalization,
};
pub use sweep::{
    domain_sweep, domain_sweep_with, geometric_extrapolation, SweepEntry, SweepResult,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("operator is not irreducible: its regime/node graph is not strongly connected")]
    NotIrreducible,
    #[error("no convergence after {max_iter} iterations (last residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("iterate lost positivity at iteration {iteration}")]
    NotPositive { iteration: usize },
    #[error("factorization of the shifted operator failed at shift {shift}: pivot {pivot:e} in row {row}")]
    Factorization { shift: f64, row: usize, pivot: f64 },
    #[error(
        "policy iteration did not settle within {max_policy_iters} iterations (trace {trace:?})"
    )]
    PolicyIterationLimit {
        max_policy_iters: usize,
        trace: Vec<f64>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::discretize::{assemble, GridSpec, MarkovPolicy};
    use crate::model::{lq, lq_eigenvalue, ou2, Ou2Params, SwitchingModel};

    fn laplacian() -> SwitchingModel {
        // a = 1, b = 0, c = 0
        lq(0.0, &[0.0])
    }

    #[test]
    fn dirichlet_laplacian() {
        let g = GridSpec::new(1.0, 201, 1).unwrap();
        let op = assemble(&laplacian(), &g, &MarkovPolicy::constant(199, 1, 0)).unwrap();
        let ep = principal_eigenpair(&op, 1e-10, 10_000).unwrap();
        assert!((ep.lambda + PI * PI / 4.0).abs() < 5e-3, "{}", ep.lambda);
        assert!(ep.psi.iter().all(|&v| v > 0.0));
        assert_eq!(ep.value(g.interior_origin(), 0), 1.0);
        assert!(ep.lower_bound <= ep.lambda + 1e-9 && ep.lambda <= ep.upper_bound + 1e-9);
    }

    #[test]
    fn symmetric_regimes_collapse() {
        let p = Ou2Params {
            rho: 1.0,
            theta: [1.0, 1.0],
            sigma: [1.2, 1.2],
            q: [0.1, 0.1],
            control_cost: 0.0,
        };
        let g = GridSpec::new(3.0, 61, 1).unwrap();
        let two = assemble(&ou2(p, &[1.0]), &g, &MarkovPolicy::constant(59, 2, 0)).unwrap();
        let single =
            lq(0.1, &[1.0]).with_diffusion(Arc::new(|_x: &[f64], _k: usize, out: &mut [f64]| {
                out[0] = 1.2
            }));
        let one = assemble(&single, &g, &MarkovPolicy::constant(59, 1, 0)).unwrap();
        let a = principal_eigenpair(&two, 1e-12, 10_000).unwrap();
        let b = principal_eigenpair(&one, 1e-12, 10_000).unwrap();
        assert!((a.lambda - b.lambda).abs() < 1e-10);
        for p in 0..59 {
            assert!((a.value(p, 0) - a.value(p, 1)).abs() < 1e-10);
        }
    }

    #[test]
    fn reducible_operator_is_rejected() {
        let m = ou2(Ou2Params::default(), &[1.0]).with_rates(Arc::new(
            |_x: &[f64], _u: &[f64], out: &mut [f64]| out.fill(0.0),
        ));
        let g = GridSpec::new(2.0, 21, 1).unwrap();
        let op = assemble(&m, &g, &MarkovPolicy::constant(19, 2, 0)).unwrap();
        assert_eq!(
            principal_eigenpair(&op, 1e-10, 100).unwrap_err(),
            EigenError::NotIrreducible
        );
    }

    #[test]
    fn zero_cost_gives_negative_eigenvalue() {
        let g = GridSpec::new(2.0, 41, 1).unwrap();
        let sol = solve_semilinear(&lq(0.0, &[1.0]), &g, &SolveOptions::default()).unwrap();
        assert!(sol.eigenpair.lambda < 0.0);
        assert_eq!(sol.policy_iterations(), 1);
    }

    #[test]
    fn lq_policy_iteration_picks_stronger_reversion() {
        let q = 3.0 / 16.0;
        let g = GridSpec::from_density(8.0, 20, 1).unwrap();
        let sol = solve_semilinear(&lq(q, &[1.0, 2.0]), &g, &SolveOptions::default()).unwrap();
        assert!((sol.eigenpair.lambda - lq_eigenvalue(q, 2.0)).abs() < 2e-2);
        assert!(sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let hist = sol.policy.histogram(2);
        assert!(hist[1] > 0.95, "{hist:?}");
    }

    #[test]
    fn selector_ties_and_singletons() {
        let g = GridSpec::new(2.0, 11, 1).unwrap();
        let psi = vec![1.0; 9];
        let single = minimizing_selector(&lq(0.2, &[1.5]), &g, &psi).unwrap();
        assert!(single.as_slice().iter().all(|&u| u == 0));
        // drift and cost independent of the control
        let flat = lq(0.2, &[1.0, 1.0, 1.0]);
        let sel = minimizing_selector(&flat, &g, &psi).unwrap();
        assert!(sel.as_slice().iter().all(|&u| u == 0));
    }

    #[test]
    fn sweep_rejects_non_increasing_radii() {
        let m = lq(0.1, &[1.0]);
        assert!(matches!(
            domain_sweep(&m, &[1.0, 1.0], 10, &SolveOptions::default()),
            Err(EigenError::InvalidInput(_))
        ));
    }

    #[test]
    fn homogeneous_in_the_start_vector() {
        let m = ou2(Ou2Params::default(), &[1.0]);
        let g = GridSpec::new(3.0, 31, 1).unwrap();
        let op = assemble(&m, &g, &MarkovPolicy::constant(29, 2, 0)).unwrap();
        let base: Vec<f64> = (0..op.size()).map(|i| (1 + i % 7) as f64).collect();
        let scaled: Vec<f64> = base.iter().map(|v| 10.0 * v).collect();
        let a = principal_eigenpair_from(&op, 1e-11, 10_000, &base).unwrap();
        let b = principal_eigenpair_from(&op, 1e-11, 10_000, &scaled).unwrap();
        assert_eq!(a, b);
    }
}
