use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    principal_eigenpair_from, relative_sup_distance, solve_semilinear, EigenError, SolveOptions,
};
use crate::discretize::{assemble, GridSpec};
use crate::model::SwitchingModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub trials: usize,
    pub lambdas: Vec<f64>,
    /// Largest pairwise relative sup distance between normalized
    /// eigenvectors.
    pub max_psi_distance: f64,
    pub lambda_spread: f64,
    pub passed: bool,
    /// Solver failure, e.g. a reducible operator.
    pub error: Option<String>,
}

/// Solves the semilinear problem, then reruns the principal eigensolver for
/// the optimal policy from `trials` random positive start vectors. Passes
/// when all normalized eigenvectors agree to `1e-8` and eigenvalues to
/// `1e-10`.
pub fn uniqueness_check(
    model: &SwitchingModel,
    grid: &GridSpec,
    trials: usize,
    seed: u64,
    opts: &SolveOptions,
) -> UniquenessReport {
    let failed = |e: String| UniquenessReport {
        trials,
        lambdas: Vec::new(),
        max_psi_distance: f64::NAN,
        lambda_spread: f64::NAN,
        passed: false,
        error: Some(e),
    };
    if trials < 2 {
        return failed("need at least two trials".into());
    }
    let run = || -> Result<(Vec<f64>, Vec<Vec<f64>>), EigenError> {
        let sol = solve_semilinear(model, grid, opts)?;
        let op = assemble(model, grid, &sol.policy)?;
        let mut lambdas = Vec::new();
        let mut psis = Vec::new();
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let init: Vec<f64> = (0..op.size())
                .map(|_| rng.random_range(0.1..10.0))
                .collect();
            let ep = principal_eigenpair_from(&op, opts.eig_tol, opts.eig_max_iter, &init)?;
            lambdas.push(ep.lambda);
            psis.push(ep.psi);
        }
        Ok((lambdas, psis))
    };
    match run() {
        Err(e) => failed(e.to_string()),
        Ok((lambdas, psis)) => {
            let mut dist = 0.0f64;
            let mut spread = 0.0f64;
            for i in 0..trials {
                for j in (i + 1)..trials {
                    dist = dist.max(relative_sup_distance(&psis[i], &psis[j]));
                    spread = spread.max((lambdas[i] - lambdas[j]).abs());
                }
            }
            UniquenessReport {
                trials,
                lambdas,
                max_psi_distance: dist,
                lambda_spread: spread,
                passed: dist <= 1e-8 && spread <= 1e-10,
                error: None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub lambda_base: f64,
    pub lambda_bumped: f64,
    pub margin: f64,
    pub bump_height: f64,
    /// `0 < margin`.
    pub strictly_increased: bool,
    /// `margin <= height`, the bound from adding the bump everywhere.
    pub below_global_shift: bool,
}

/// Compares the semilinear eigenvalue for `c` and `c + height 1{|x - center| <= radius}`.
pub fn potential_monotonicity_check(
    model: &SwitchingModel,
    grid: &GridSpec,
    bump_center: &[f64],
    bump_radius: f64,
    bump_height: f64,
    opts: &SolveOptions,
) -> Result<PotentialReport, EigenError> {
    if bump_center.len() != model.dim() {
        return Err(EigenError::InvalidInput(
            "bump center has the wrong dimension".into(),
        ));
    }
    if bump_center
        .iter()
        .any(|c| c.abs() + bump_radius > grid.radius())
    {
        return Err(EigenError::InvalidInput(
            "bump must lie inside the grid".into(),
        ));
    }
    let base = solve_semilinear(model, grid, opts)?.eigenpair.lambda;
    let bumped_model = model.with_cost_bump(bump_center.to_vec(), bump_radius, bump_height);
    let bumped = solve_semilinear(&bumped_model, grid, opts)?
        .eigenpair
        .lambda;
    let margin = bumped - base;
    Ok(PotentialReport {
        lambda_base: base,
        lambda_bumped: bumped,
        margin,
        bump_height,
        strictly_increased: margin > 0.0,
        below_global_shift: margin <= bump_height + 1e-10,
    })
}
