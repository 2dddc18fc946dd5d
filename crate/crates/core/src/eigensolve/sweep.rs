use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_semilinear, EigenError, SemilinearSolution, SolveOptions};
use crate::discretize::{GridSpec, MarkovPolicy};
use crate::model::SwitchingModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub radius: f64,
    pub nodes_per_axis: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub policy_histogram: Vec<f64>,
    pub residual: f64,
    #[serde(skip)]
    pub policy: Option<MarkovPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// Eigenvalue on the largest box.
    pub lambda_star: f64,
    /// Geometric-tail extrapolation, reported when the last increments are
    /// positive and shrink.
    pub extrapolated: Option<f64>,
    /// Every consecutive pair strictly increases.
    pub monotonicity_certificate: bool,
    /// Indices `i` with `lambda_{i+1} < lambda_i - tol`.
    pub red_flags: Vec<usize>,
}

/// Solves the semilinear problem on boxes of increasing radius at a fixed
/// mesh density, so every grid is a subgrid of the next.
///
/// Radii are solved in parallel; results are collected in input order.
pub fn domain_sweep(
    model: &SwitchingModel,
    radii: &[f64],
    nodes_per_unit: usize,
    opts: &SolveOptions,
) -> Result<SweepResult, EigenError> {
    domain_sweep_with(model, radii, nodes_per_unit, opts).map(|(s, _)| s)
}

/// [`domain_sweep`] that also returns the full solution on each box.
pub fn domain_sweep_with(
    model: &SwitchingModel,
    radii: &[f64],
    nodes_per_unit: usize,
    opts: &SolveOptions,
) -> Result<(SweepResult, Vec<(GridSpec, SemilinearSolution)>), EigenError> {
    if radii.is_empty() {
        return Err(EigenError::InvalidInput("no radii given".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EigenError::InvalidInput(format!(
            "radii must be strictly increasing, got {radii:?}"
        )));
    }
    let grids = radii
        .iter()
        .map(|&r| GridSpec::from_density(r, nodes_per_unit, model.dim()))
        .collect::<Result<Vec<_>, _>>()?;
    let solutions = grids
        .par_iter()
        .map(|g| solve_semilinear(model, g, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let entries: Vec<SweepEntry> = grids
        .iter()
        .zip(&solutions)
        .map(|(g, s)| SweepEntry {
            radius: g.radius(),
            nodes_per_axis: g.nodes_per_axis(),
            lambda: s.eigenpair.lambda,
            iterations: s.policy_iterations(),
            policy_histogram: s.policy.histogram(model.num_controls()),
            residual: s.eigenpair.residual,
            policy: Some(s.policy.clone()),
        })
        .collect();
    let lambdas: Vec<f64> = entries.iter().map(|e| e.lambda).collect();
    let monotonicity_certificate = lambdas.windows(2).all(|w| w[1] > w[0]);
    let red_flags = lambdas
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0] - opts.tol)
        .map(|(i, _)| i)
        .collect();
    let result = SweepResult {
        lambda_star: *lambdas.last().expect("radii is non-empty"),
        extrapolated: geometric_extrapolation(&lambdas),
        monotonicity_certificate,
        red_flags,
        entries,
    };
    Ok((result, grids.into_iter().zip(solutions).collect()))
}

/// `lambda_n + d r / (1 - r)` with `d` the last increment and `r` the ratio
/// of the last two increments, when `0 < r < 1`.
pub fn geometric_extrapolation(lambdas: &[f64]) -> Option<f64> {
    let n = lambdas.len();
    if n < 3 {
        return None;
    }
    let d1 = lambdas[n - 2] - lambdas[n - 3];
    let d2 = lambdas[n - 1] - lambdas[n - 2];
    if !(d1 > 0.0 && d2 > 0.0) {
        return None;
    }
    let r = d2 / d1;
    (r < 1.0).then(|| lambdas[n - 1] + d2 * r / (1.0 - r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_of_geometric_tail() {
        let l: Vec<f64> = (0..5).map(|i| 1.0 - 0.5f64.powi(i)).collect();
        let e = geometric_extrapolation(&l).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        assert_eq!(geometric_extrapolation(&[0.0, 1.0, 3.0]), None);
        assert_eq!(geometric_extrapolation(&[0.0, 1.0]), None);
    }
}
