use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::discretize::{assemble, GridSpec, MarkovPolicy};
use crate::eigensolve::{
    principal_eigenpair_from, relative_sup_distance, selector_gap, SemilinearSolution, SolveOptions,
};
use crate::model::SwitchingModel;

/// `count` policies with independently uniform controls per (node, regime).
pub fn random_policies(
    model: &SwitchingModel,
    grid: &GridSpec,
    count: usize,
    seed: u64,
) -> Vec<MarkovPolicy> {
    let nodes = grid.num_interior();
    let n = model.num_regimes();
    let nc = model.num_controls();
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let table: Vec<usize> = (0..nodes * n).map(|_| rng.random_range(0..nc)).collect();
            MarkovPolicy::from_fn(nodes, n, |p, k| table[p * n + k])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeResult {
    pub lambda: f64,
    pub upper_bound: f64,
    /// `lambda - lambda_star`.
    pub excess: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub lambda_star: f64,
    pub tol: f64,
    /// Principal eigenvalue of the operator assembled under the extracted
    /// policy, solved again from the all-ones vector.
    pub lambda_resolved: f64,
    pub psi_distance: f64,
    /// [`selector_gap`] of the extracted policy for `psi_star`.
    pub selector_gap: f64,
    pub alternatives: Vec<AlternativeResult>,
    pub passed: bool,
}

/// Checks that no alternative policy beats the extracted one by more than
/// `tol`, that re-solving under the extracted policy reproduces
/// `(lambda_star, psi_star)`, and that the policy minimizes the discrete
/// Hamiltonian of `psi_star`.
///
/// Eigenvalues are compared through their Collatz-Wielandt brackets: an
/// alternative fails only if its upper bound lies more than `tol` below the
/// optimal lower bound, and the re-solve passes when the two brackets
/// overlap within `tol`.
pub fn verify_optimality(
    model: &SwitchingModel,
    grid: &GridSpec,
    solution: &SemilinearSolution,
    alternatives: &[MarkovPolicy],
    tol: f64,
    opts: &SolveOptions,
) -> Result<OptimalityReport, VerifyError> {
    if !(tol > 0.0) {
        return Err(VerifyError::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let star = &solution.eigenpair;
    let lambda_star = star.lambda;
    let ones = vec![1.0; solution.eigenpair.psi.len()];
    let op = assemble(model, grid, &solution.policy)?;
    let again = principal_eigenpair_from(&op, opts.eig_tol, opts.eig_max_iter, &ones)?;
    let psi_distance = relative_sup_distance(&solution.eigenpair.psi, &again.psi);
    let gap = selector_gap(model, grid, &solution.eigenpair.psi, &solution.policy)?;

    let mut results = Vec::with_capacity(alternatives.len());
    for policy in alternatives {
        let op = assemble(model, grid, policy)?;
        let ep = principal_eigenpair_from(&op, opts.eig_tol, opts.eig_max_iter, &ones)?;
        let excess = ep.lambda - lambda_star;
        results.push(AlternativeResult {
            lambda: ep.lambda,
            upper_bound: ep.upper_bound,
            excess,
            passed: ep.upper_bound >= star.lower_bound - tol,
        });
    }
    let brackets_meet =
        again.lower_bound <= star.upper_bound + tol && star.lower_bound <= again.upper_bound + tol;
    let passed = brackets_meet
        && psi_distance <= 1e-8
        && gap <= tol.max(1e-10)
        && results.iter().all(|r| r.passed);
    Ok(OptimalityReport {
        lambda_star,
        tol,
        lambda_resolved: again.lambda,
        psi_distance,
        selector_gap: gap,
        alternatives: results,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::solve_semilinear;
    use crate::model::{lq, lq_eigenvalue};

    #[test]
    fn lq_constant_policy_is_worse() {
        let q = 3.0 / 16.0;
        let m = lq(q, &[1.0, 2.0]);
        let g = GridSpec::from_density(8.0, 20, 1).unwrap();
        let opts = SolveOptions::default();
        let sol = solve_semilinear(&m, &g, &opts).unwrap();
        let weak = MarkovPolicy::constant(g.num_interior(), 1, 0);
        let mut nudged = sol.policy.clone();
        let p = g.interior_origin();
        nudged.set(p, 0, 1 - nudged.get(p, 0));
        let r = verify_optimality(
            &m,
            &g,
            &sol,
            &[weak, nudged, sol.policy.clone()],
            1e-10,
            &opts,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.alternatives[0].lambda - lq_eigenvalue(q, 1.0)).abs() < 2e-2);
        assert!(r.alternatives[0].excess > 0.1);
        assert!(r.alternatives[1].excess >= -1e-12);
        assert!(r.alternatives[2].excess.abs() <= 1e-10);
        assert!(r.selector_gap <= 1e-10);
    }

    #[test]
    fn random_policies_are_reproducible() {
        let m = lq(0.1, &[1.0, 2.0, 3.0]);
        let g = GridSpec::new(2.0, 21, 1).unwrap();
        let a = random_policies(&m, &g, 3, 4);
        assert_eq!(a, random_policies(&m, &g, 3, 4));
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|p| p.check(19, 1, 3).is_ok()));
    }
}
