//! Sampling-based checks of the standing structural hypotheses.
//!
//! Every check evaluates the coefficient closures at points drawn uniformly
//! from the box `[-R, R]^d` with a seeded generator, so a report is a pure
//! function of `(model, options)`.
//!
//! - `A1` local Lipschitz: the largest squared difference quotient
//!   `(|db|^2 + |dsigma|^2 + |dm|^2) / |dx|^2` over near pairs (offset
//!   `1e-3 R`) and far pairs, must stay below `lipschitz_cap`.
//! - `A2` affine growth: `C0 = max (max_xi <b, x>^+ + |sigma|_F^2) / (1 + |x|^2)`,
//!   must stay below `growth_cap`.
//! - `A3` nondegeneracy: smallest eigenvalue of `a = sigma sigma^T / 2` over
//!   the samples, must reach the model's ellipticity floor.
//! - `A4` irreducibility: the regime graph with an edge `i -> j` whenever
//!   `min_xi m_ij(x, xi) > 0` at some sample must be strongly connected.
//!   Positivity is only certified at sample points, not on a set of positive
//!   measure.
//! - `cost`: `c >= 0` at every sample.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{norm, ModelError, SwitchingModel, Witness};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub box_radius: f64,
    pub samples: usize,
    pub seed: u64,
    pub lipschitz_cap: f64,
    pub growth_cap: f64,
}

impl ValidationOptions {
    pub fn new(box_radius: f64, samples: usize) -> Self {
        Self {
            box_radius,
            samples,
            seed: 0x5eed,
            lipschitz_cap: 1e8,
            growth_cap: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub id: String,
    pub passed: bool,
    /// The fitted constant or extreme value the verdict is based on.
    pub statistic: f64,
    pub witness: Option<Witness>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub options: ValidationOptions,
    pub checks: Vec<HypothesisCheck>,
    /// `reachability[i][j]`: regime `j` reachable from `i` in the sampled
    /// regime graph.
    pub reachability: Vec<Vec<bool>>,
}

impl ValidationReport {
    pub fn check(&self, id: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn passed(&self, id: &str) -> bool {
        self.check(id).is_some_and(|c| c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn validate_model(
    model: &SwitchingModel,
    box_radius: f64,
    samples: usize,
) -> Result<ValidationReport, ModelError> {
    validate_model_with(model, &ValidationOptions::new(box_radius, samples))
}

struct Coefficients {
    drift: Vec<Vec<Vec<f64>>>,
    sigma: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

fn evaluate(model: &SwitchingModel, x: &[f64]) -> Coefficients {
    let (d, n, nc) = (model.dim(), model.num_regimes(), model.num_controls());
    let drift = (0..n)
        .map(|k| {
            (0..nc)
                .map(|u| {
                    let mut b = vec![0.0; d];
                    model.drift(x, k, u, &mut b);
                    b
                })
                .collect()
        })
        .collect();
    let sigma = (0..n)
        .map(|k| {
            let mut s = vec![0.0; d * d];
            model.diffusion(x, k, &mut s);
            s
        })
        .collect();
    let rates = (0..nc)
        .map(|u| {
            let mut m = vec![0.0; n * n];
            model.rates(x, u, &mut m);
            m
        })
        .collect();
    Coefficients {
        drift,
        sigma,
        rates,
    }
}

fn check_rate_rows(
    model: &SwitchingModel,
    x: &[f64],
    rates: &[Vec<f64>],
) -> Result<(), ModelError> {
    let n = model.num_regimes();
    for (u, m) in rates.iter().enumerate() {
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            let malformed = |detail: String| ModelError::MalformedRates {
                x: x.to_vec(),
                control: u,
                row: i,
                detail,
            };
            if row.iter().any(|v| !v.is_finite()) {
                return Err(malformed("non-finite entry".into()));
            }
            if let Some((j, v)) = row
                .iter()
                .enumerate()
                .find(|&(j, &v)| j != i && v < -ROW_SUM_TOL)
            {
                return Err(malformed(format!("off-diagonal entry {j} is {v}")));
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOL {
                return Err(malformed(format!("row sums to {sum}")));
            }
        }
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn min_eigenvalue(a: &[f64], d: usize) -> f64 {
    if d == 1 {
        return a[0];
    }
    let m = DMatrix::from_row_slice(d, d, a);
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn validate_model_with(
    model: &SwitchingModel,
    opts: &ValidationOptions,
) -> Result<ValidationReport, ModelError> {
    if opts.samples == 0 {
        return Err(ModelError::Config("samples must be at least 1".into()));
    }
    if !(opts.box_radius > 0.0) {
        return Err(ModelError::Config("box radius must be positive".into()));
    }
    let (d, n, nc) = (model.dim(), model.num_regimes(), model.num_controls());
    let r = opts.box_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draw =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.random_range(-r..=r)).collect() };

    let mut lip = (0.0f64, None);
    let mut growth = (0.0f64, None);
    let mut min_eig = (f64::INFINITY, None);
    let mut min_cost = (f64::INFINITY, None);
    let mut edges = vec![vec![false; n]; n];
    let mut scratch = vec![0.0; d * d];
    let mut a = vec![0.0; d * d];

    for s in 0..opts.samples {
        let x = draw(&mut rng);
        let cx = evaluate(model, &x);
        check_rate_rows(model, &x, &cx.rates)?;

        // A1: alternate near and far partners.
        let y: Vec<f64> = if s % 2 == 0 {
            x.iter()
                .map(|&xi| (xi + 1e-3 * r * rng.random_range(-1.0..=1.0)).clamp(-r, r))
                .collect()
        } else {
            draw(&mut rng)
        };
        let dx2 = sq_dist(&x, &y);
        if dx2 > 0.0 {
            let cy = evaluate(model, &y);
            check_rate_rows(model, &y, &cy.rates)?;
            for k in 0..n {
                let ds = sq_dist(&cx.sigma[k], &cy.sigma[k]);
                for u in 0..nc {
                    let db = sq_dist(&cx.drift[k][u], &cy.drift[k][u]);
                    let dm = sq_dist(&cx.rates[u], &cy.rates[u]);
                    let ratio = (db + ds + dm) / dx2;
                    if !(ratio <= lip.0) {
                        lip = (
                            ratio,
                            Some(Witness {
                                x: x.clone(),
                                regime: Some(k),
                                control: Some(u),
                            }),
                        );
                    }
                }
            }
        }

        for k in 0..n {
            // A2
            let sup_bx = cx.drift[k]
                .iter()
                .map(|b| {
                    b.iter()
                        .zip(&x)
                        .map(|(bi, xi)| bi * xi)
                        .sum::<f64>()
                        .max(0.0)
                })
                .fold(0.0, f64::max);
            let sig2: f64 = cx.sigma[k].iter().map(|v| v * v).sum();
            let ratio = (sup_bx + sig2) / (1.0 + norm(&x).powi(2));
            if !(ratio <= growth.0) {
                growth = (
                    ratio,
                    Some(Witness {
                        x: x.clone(),
                        regime: Some(k),
                        control: None,
                    }),
                );
            }

            // A3
            model.covariance(&x, k, &mut scratch, &mut a);
            let e = min_eigenvalue(&a, d);
            if !(e >= min_eig.0) {
                min_eig = (
                    e,
                    Some(Witness {
                        x: x.clone(),
                        regime: Some(k),
                        control: None,
                    }),
                );
            }

            for u in 0..nc {
                let c = model.cost(&x, k, u);
                if !(c >= min_cost.0) {
                    min_cost = (
                        c,
                        Some(Witness {
                            x: x.clone(),
                            regime: Some(k),
                            control: Some(u),
                        }),
                    );
                }
            }
        }

        // A4
        for i in 0..n {
            for j in 0..n {
                if i != j && !edges[i][j] {
                    let min_rate = cx
                        .rates
                        .iter()
                        .map(|m| m[i * n + j])
                        .fold(f64::INFINITY, f64::min);
                    if min_rate > 0.0 {
                        edges[i][j] = true;
                    }
                }
            }
        }
    }

    let reachability = transitive_closure(&edges);
    let connected = reachability.iter().all(|row| row.iter().all(|&b| b));
    let missing: Vec<String> = reachability
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &b)| !b)
                .map(move |(j, _)| format!("{i}->{j}"))
        })
        .collect();

    let checks = vec![
        HypothesisCheck {
            id: "A1".into(),
            passed: lip.0.is_finite() && lip.0 <= opts.lipschitz_cap,
            statistic: lip.0,
            witness: lip.1,
            detail: format!(
                "max squared difference quotient {:.6e} (cap {:.1e})",
                lip.0, opts.lipschitz_cap
            ),
        },
        HypothesisCheck {
            id: "A2".into(),
            passed: growth.0.is_finite() && growth.0 <= opts.growth_cap,
            statistic: growth.0,
            witness: growth.1,
            detail: format!("fitted C0 = {:.6e} (cap {:.1e})", growth.0, opts.growth_cap),
        },
        HypothesisCheck {
            id: "A3".into(),
            passed: min_eig.0 >= model.ellipticity_floor(),
            statistic: min_eig.0,
            witness: min_eig.1,
            detail: format!(
                "minimum eigenvalue of a = {:.6e} (floor {:.1e})",
                min_eig.0,
                model.ellipticity_floor()
            ),
        },
        HypothesisCheck {
            id: "A4".into(),
            passed: connected,
            statistic: reachability.iter().flatten().filter(|&&b| b).count() as f64,
            witness: None,
            detail: if connected {
                "regime graph strongly connected".into()
            } else {
                format!(
                    "regime graph not strongly connected; unreachable: {}",
                    missing.join(", ")
                )
            },
        },
        HypothesisCheck {
            id: "cost".into(),
            passed: min_cost.0 >= 0.0,
            statistic: min_cost.0,
            witness: min_cost.1,
            detail: format!("minimum sampled cost {:.6e}", min_cost.0),
        },
    ];

    Ok(ValidationReport {
        options: opts.clone(),
        checks,
        reachability,
    })
}

/// Reflexive-transitive closure of a directed graph given as an adjacency
/// matrix.
pub(crate) fn transitive_closure(edges: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = edges.len();
    let mut reach: Vec<Vec<bool>> = edges.to_vec();
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{builtin_model, ou2, Ou2Params};

    fn default_ou2() -> SwitchingModel {
        builtin_model("ou2", &Default::default(), None).unwrap()
    }

    #[test]
    fn builtin_ou2_passes_everything() {
        let report = validate_model(&default_ou2(), 5.0, 1000).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{} failed: {}", c.id, c.detail);
        }
        // a = sigma^2 / 2 with sigma = (sqrt 2, 1)
        assert!((report.check("A3").unwrap().statistic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_breaks_irreducibility() {
        let m = default_ou2().with_rates(Arc::new(|_x: &[f64], _u: &[f64], out: &mut [f64]| {
            out.fill(0.0)
        }));
        let report = validate_model(&m, 5.0, 200).unwrap();
        assert!(!report.passed("A4"));
        assert!(report.passed("A1") && report.passed("A3"));
        assert!(!report.reachability[0][1] && !report.reachability[1][0]);
    }

    #[test]
    fn degenerate_diffusion_fails_nondegeneracy() {
        let m = default_ou2().with_diffusion(Arc::new(|_x: &[f64], _k: usize, out: &mut [f64]| {
            out.fill(0.0)
        }));
        let report = validate_model(&m, 5.0, 200).unwrap();
        let a3 = report.check("A3").unwrap();
        assert!(!a3.passed);
        assert_eq!(a3.statistic, 0.0);
    }

    #[test]
    fn malformed_rates_are_rejected() {
        let m = default_ou2().with_rates(Arc::new(|_x: &[f64], _u: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[-1.0, 1.0, 1.0, -0.5])
        }));
        assert!(matches!(
            validate_model(&m, 5.0, 10),
            Err(ModelError::MalformedRates { row: 1, .. })
        ));
        let negative =
            default_ou2().with_rates(Arc::new(|_x: &[f64], _u: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&[1.0, -1.0, 1.0, -1.0])
            }));
        assert!(validate_model(&negative, 5.0, 10).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let m = ou2(Ou2Params::default(), &[0.5, 1.0]);
        let a = validate_model(&m, 3.0, 300).unwrap();
        let b = validate_model(&m, 3.0, 300).unwrap();
        assert_eq!(a, b);
        let mut opts = ValidationOptions::new(3.0, 300);
        opts.seed = 99;
        let c = validate_model_with(&m, &opts).unwrap();
        assert_ne!(
            a.check("A1").unwrap().witness,
            c.check("A1").unwrap().witness
        );
    }

    #[test]
    fn superlinear_drift_fails_growth_cap() {
        let m = default_ou2().with_drift(Arc::new(
            |x: &[f64], _k: usize, _u: &[f64], out: &mut [f64]| out[0] = x[0].powi(5),
        ));
        let report = validate_model(&m, 20.0, 500).unwrap();
        assert!(!report.passed("A2"));
    }

    #[test]
    fn closure_of_cycle_is_complete() {
        let edges = vec![
            vec![false, true, false],
            vec![false, false, true],
            vec![true, false, false],
        ];
        let r = transitive_closure(&edges);
        assert!(r.iter().flatten().all(|&b| b));
        let chain = vec![vec![false, true], vec![false, false]];
        let r = transitive_closure(&chain);
        assert!(r[0][1] && !r[1][0]);
    }
}
