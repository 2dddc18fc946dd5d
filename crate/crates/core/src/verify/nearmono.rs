use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::discretize::GridSpec;
use crate::eigensolve::{domain_sweep_with, EigenPair, SolveOptions, SweepResult};
use crate::model::{norm, HypothesisCheck, LyapunovCertificate, SwitchingModel, Witness};

/// Shells of the radius ladder `R / 2^j`, `j = LADDER - 1, ..., 0`.
const LADDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearMonotoneValidation {
    pub box_radius: f64,
    pub samples: usize,
    /// Outer radii of the shells, increasing.
    pub radii: Vec<f64>,
    /// Per shell, the largest `|a| + |b| + |c| + max |m_ij|`.
    pub shell_bounds: Vec<f64>,
    /// Per shell, the largest `<b, x>^+ / |x|`.
    pub radial_drift: Vec<f64>,
    /// `B1`, `B2`, `B3`.
    pub checks: Vec<HypothesisCheck>,
}

impl NearMonotoneValidation {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, id: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

fn shell_point(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&dir).max(f64::MIN_POSITIVE);
    let r = rng.random_range(lo..=hi);
    for v in dir.iter_mut() {
        *v *= r / n;
    }
    dir
}

/// Sampling checks of the bounded-coefficient hypotheses on the ball of
/// radius `box_radius`, split into the shells of a halving radius ladder.
///
/// - `B1`: the fitted bound `C` (coefficient sup and inverse ellipticity)
///   must stop growing: the ball sup at `R` is at most 1.1 times the sup at
///   `R / 2`. The box must reach the scale where bounded coefficients level
///   off.
/// - `B2`: `rho = min_{i != j} min_xi m_ij > 0` at every sample.
/// - `B3`: the shell maxima of `<b, x>^+ / |x|` never increase and the
///   outermost is at most a tenth of the innermost (or below `1e-8`).
pub fn validate_near_monotone(
    model: &SwitchingModel,
    box_radius: f64,
    samples: usize,
) -> Result<NearMonotoneValidation, VerifyError> {
    if !(box_radius > 0.0) || samples == 0 {
        return Err(VerifyError::InvalidInput(
            "need a positive radius and at least one sample".into(),
        ));
    }
    let (d, n, nc) = (model.dim(), model.num_regimes(), model.num_controls());
    let radii: Vec<f64> = (0..LADDER)
        .map(|j| box_radius / 2f64.powi((LADDER - 1 - j) as i32))
        .collect();
    let mut b = vec![0.0; d];
    let mut scratch = vec![0.0; d * d];
    let mut a = vec![0.0; d * d];
    let mut m = vec![0.0; n * n];

    let mut shell_bounds = Vec::with_capacity(LADDER);
    let mut radial_drift = Vec::with_capacity(LADDER);
    let mut bound_at = Vec::with_capacity(LADDER);
    let mut min_ellipticity = (f64::INFINITY, Vec::new());
    let mut rate_floor = (f64::INFINITY, None::<Witness>);
    for (j, &hi) in radii.iter().enumerate() {
        let lo = if j == 0 { 0.0 } else { radii[j - 1] };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        rng.set_stream(j as u64);
        let mut sup = (0.0f64, Vec::new());
        let mut drift_sup = 0.0f64;
        for _ in 0..samples {
            let x = shell_point(&mut rng, d, lo, hi);
            let r = norm(&x);
            for k in 0..n {
                model.covariance(&x, k, &mut scratch, &mut a);
                let a_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let eig = DMatrix::from_row_slice(d, d, &a)
                    .symmetric_eigenvalues()
                    .min();
                if eig < min_ellipticity.0 {
                    min_ellipticity = (eig, x.clone());
                }
                for u in 0..nc {
                    model.drift(&x, k, u, &mut b);
                    model.rates(&x, u, &mut m);
                    let rate_sup = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                    let total = a_norm + norm(&b) + model.cost(&x, k, u).abs() + rate_sup;
                    if total > sup.0 {
                        sup = (total, x.clone());
                    }
                    if r > 0.0 {
                        let radial = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum::<f64>() / r;
                        drift_sup = drift_sup.max(radial.max(0.0));
                    }
                }
            }
            for i in 0..n {
                for l in 0..n {
                    if i == l {
                        continue;
                    }
                    let worst = (0..nc)
                        .map(|u| {
                            model.rates(&x, u, &mut m);
                            (m[i * n + l], u)
                        })
                        .fold(
                            (f64::INFINITY, 0),
                            |acc, v| if v.0 < acc.0 { v } else { acc },
                        );
                    if worst.0 < rate_floor.0 {
                        rate_floor = (
                            worst.0,
                            Some(Witness {
                                x: x.clone(),
                                regime: Some(i),
                                control: Some(worst.1),
                            }),
                        );
                    }
                }
            }
        }
        shell_bounds.push(sup.0);
        bound_at.push(sup.1);
        radial_drift.push(drift_sup);
    }

    let ball: Vec<f64> = shell_bounds
        .iter()
        .scan(0.0f64, |acc, &v| {
            *acc = acc.max(v);
            Some(*acc)
        })
        .collect();
    let ellipticity = min_ellipticity.0;
    let fitted = ball[LADDER - 1].max(if ellipticity > 0.0 {
        1.0 / ellipticity
    } else {
        f64::INFINITY
    });
    let levelled = ball[LADDER - 1] <= 1.1 * ball[LADDER - 2];
    let b1 = HypothesisCheck {
        id: "B1".into(),
        passed: levelled && ellipticity > 0.0 && fitted.is_finite(),
        statistic: if fitted.is_finite() { fitted } else { f64::MAX },
        witness: if !levelled {
            Some(Witness {
                x: bound_at[LADDER - 1].clone(),
                regime: None,
                control: None,
            })
        } else if ellipticity <= 0.0 {
            Some(Witness {
                x: min_ellipticity.1.clone(),
                regime: None,
                control: None,
            })
        } else {
            None
        },
        detail: format!(
            "ball sups {ball:?} on radii {radii:?}; smallest eigenvalue of a {ellipticity:e}"
        ),
    };
    let b2 = if n == 1 {
        HypothesisCheck {
            id: "B2".into(),
            passed: true,
            statistic: 0.0,
            witness: None,
            detail: "single regime: no switching rates to bound".into(),
        }
    } else {
        HypothesisCheck {
            id: "B2".into(),
            passed: rate_floor.0 > 0.0,
            statistic: rate_floor.0,
            witness: if rate_floor.0 > 0.0 {
                None
            } else {
                rate_floor.1.clone()
            },
            detail: format!("smallest off-diagonal rate {:e}", rate_floor.0),
        }
    };
    let non_increasing = radial_drift
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    let outer = radial_drift[LADDER - 1];
    let decayed = outer <= (0.1 * radial_drift[0]).max(1e-8);
    let b3 = HypothesisCheck {
        id: "B3".into(),
        passed: non_increasing && decayed,
        statistic: outer,
        witness: None,
        detail: format!("shell maxima of <b, x>^+ / |x|: {radial_drift:?}"),
    };
    Ok(NearMonotoneValidation {
        box_radius,
        samples,
        radii,
        shell_bounds,
        radial_drift,
        checks: vec![b1, b2, b3],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    /// Largest `|grad log psi_k|` (central differences) over the inner half
    /// box `|x|_inf <= R / 2`, away from the wall layer of the Dirichlet
    /// problem.
    pub kappa_hat: f64,
    /// Largest `(log psi_k(x) - log psi_k(0)) / log V_k(x)` over the inner
    /// half box, when a Lyapunov function is supplied.
    pub theta: Option<f64>,
    /// Largest excess `log psi_k(x) - log psi_k(0) - kappa_hat |x|` over the
    /// whole grid; at most zero when the bound holds everywhere.
    pub fit_residual: f64,
    /// Interior nodes and regimes where `psi_k(x) > psi_k(0) exp(kappa_hat |x|)`.
    pub violations: usize,
    pub nodes_checked: usize,
}

/// Fits `log psi_k(x) - log psi_k(0) <= kappa_hat |x|` with `kappa_hat` the
/// largest log-gradient on the inner half box, then checks the bound on
/// every interior node.
pub fn growth_bound(
    eigenpair: &EigenPair,
    grid: &GridSpec,
    certificate: Option<&LyapunovCertificate>,
) -> GrowthBound {
    let n = eigenpair.num_regimes;
    let d = grid.dim();
    let h = grid.spacing();
    let origin = grid.interior_origin();
    let half = grid.radius() / 2.0;
    let log_psi = |g: usize, k: usize| {
        grid.interior_position(g)
            .map(|p| eigenpair.value(p, k).ln())
    };
    let mut x = vec![0.0; d];
    let mut kappa = 0.0f64;
    let mut theta: Option<f64> = None;
    let mut rise = Vec::new();
    for (p, g) in grid.interior_nodes().into_iter().enumerate() {
        grid.coordinates(g, &mut x);
        let r = norm(&x);
        let inner = x.iter().all(|v| v.abs() <= half + 1e-12);
        for k in 0..n {
            let up = eigenpair.value(p, k).ln() - eigenpair.value(origin, k).ln();
            rise.push((r, up));
            if !inner {
                continue;
            }
            let mut grad2 = 0.0;
            for axis in 0..d {
                let s = grid.stride(axis);
                if let (Some(hi), Some(lo)) = (log_psi(g + s, k), log_psi(g - s, k)) {
                    grad2 += ((hi - lo) / (2.0 * h)).powi(2);
                }
            }
            kappa = kappa.max(grad2.sqrt());
            if let Some(cert) = certificate {
                let lv = (cert.lyap)(&x, k).ln();
                if lv > 1e-12 {
                    theta = Some(theta.map_or(up / lv, |t: f64| t.max(up / lv)));
                }
            }
        }
    }
    let mut violations = 0;
    let mut residual = f64::NEG_INFINITY;
    for &(r, up) in &rise {
        let excess = up - kappa * r;
        if excess > 1e-9 * (1.0 + up.abs()) {
            violations += 1;
        }
        residual = residual.max(excess);
    }
    GrowthBound {
        kappa_hat: kappa,
        theta,
        fit_residual: residual,
        violations,
        nodes_checked: rise.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearMonotoneOptions {
    /// Slack in the sub-level set `{min c <= lambda* + epsilon}`.
    pub epsilon: f64,
    /// Radius of the ball sampled by [`validate_near_monotone`].
    pub validation_radius: f64,
    pub samples: usize,
    /// The sweep counts as converged when its last increment is at most this.
    pub convergence_tol: f64,
}

impl Default for NearMonotoneOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            validation_radius: 64.0,
            samples: 400,
            convergence_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelCheck {
    pub epsilon: f64,
    /// `lambda* + epsilon`.
    pub level: f64,
    /// Nodes of the set must satisfy `|x|_inf < inner_radius`.
    pub inner_radius: f64,
    pub nodes_in_set: usize,
    pub escaping_count: usize,
    /// Up to 20 escaping nodes.
    pub escaping: Vec<Vec<f64>>,
    pub passed: bool,
}

fn sublevel_check(
    model: &SwitchingModel,
    grid: &GridSpec,
    lambda: f64,
    epsilon: f64,
) -> SublevelCheck {
    let level = lambda + epsilon;
    let inner_radius = grid.radius() - (2.0 * grid.spacing()).max(0.1 * grid.radius());
    let mut x = vec![0.0; grid.dim()];
    let mut nodes_in_set = 0;
    let mut escaping_count = 0;
    let mut escaping = Vec::new();
    for g in 0..grid.num_nodes() {
        grid.coordinates(g, &mut x);
        let low = (0..model.num_regimes())
            .flat_map(|k| (0..model.num_controls()).map(move |u| (k, u)))
            .map(|(k, u)| model.cost(&x, k, u))
            .fold(f64::INFINITY, f64::min);
        if low <= level {
            nodes_in_set += 1;
            if x.iter().any(|v| v.abs() >= inner_radius) {
                escaping_count += 1;
                if escaping.len() < 20 {
                    escaping.push(x.clone());
                }
            }
        }
    }
    SublevelCheck {
        epsilon,
        level,
        inner_radius,
        nodes_in_set,
        escaping_count,
        escaping,
        passed: escaping_count == 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearMonotoneReport {
    pub validation: NearMonotoneValidation,
    /// Absent when validation failed.
    pub sweep: Option<SweepResult>,
    pub lambda_star: Option<f64>,
    pub converged: bool,
    pub sublevel: Option<SublevelCheck>,
    pub growth: Option<GrowthBound>,
    pub passed: bool,
}

/// Bounded-coefficient pipeline: validates the hypotheses, sweeps the box
/// radius, then checks on the largest box that the cost's sub-level set at
/// `lambda* + epsilon` stays strictly inside, and fits the exponential growth
/// bound of the eigenfunction.
pub fn near_monotone_suite(
    model: &SwitchingModel,
    radii: &[f64],
    nodes_per_unit: usize,
    opts: &SolveOptions,
    nm: &NearMonotoneOptions,
) -> Result<NearMonotoneReport, VerifyError> {
    let validation = validate_near_monotone(model, nm.validation_radius, nm.samples)?;
    if !validation.passed() {
        return Ok(NearMonotoneReport {
            validation,
            sweep: None,
            lambda_star: None,
            converged: false,
            sublevel: None,
            growth: None,
            passed: false,
        });
    }
    let (sweep, mut solutions) = domain_sweep_with(model, radii, nodes_per_unit, opts)?;
    let (grid, solution) = solutions.pop().expect("radii is non-empty");
    let lambda_star = sweep.lambda_star;
    let lambdas: Vec<f64> = sweep.entries.iter().map(|e| e.lambda).collect();
    let last_step = match lambdas.as_slice() {
        [.., a, b] => (b - a).abs(),
        _ => f64::INFINITY,
    };
    let converged = sweep.red_flags.is_empty() && last_step <= nm.convergence_tol;
    let sublevel = sublevel_check(model, &grid, lambda_star, nm.epsilon);
    let growth = growth_bound(&solution.eigenpair, &grid, None);
    let passed = converged && sublevel.passed && growth.violations == 0;
    Ok(NearMonotoneReport {
        validation,
        sweep: Some(sweep),
        lambda_star: Some(lambda_star),
        converged,
        sublevel: Some(sublevel),
        growth: Some(growth),
        passed,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{bounded2d, lq, nearmono, Bounded2dParams, NearMonoParams};

    #[test]
    fn bounded_models_pass_validation() {
        let v =
            validate_near_monotone(&nearmono(NearMonoParams::default(), &[0.0, 1.0]), 64.0, 200)
                .unwrap();
        assert!(v.passed(), "{v:?}");
        let v = validate_near_monotone(
            &bounded2d(Bounded2dParams::default(), &[1.0, 1.5]),
            64.0,
            200,
        )
        .unwrap();
        assert!(v.passed(), "{v:?}");
        assert!(v.check("B2").unwrap().statistic >= 0.5);
    }

    #[test]
    fn linear_drift_fails_boundedness() {
        let v = validate_near_monotone(&lq(0.0, &[1.0]), 64.0, 100).unwrap();
        assert!(!v.check("B1").unwrap().passed);
        assert!(v.check("B1").unwrap().witness.is_some());
    }

    #[test]
    fn vanishing_rate_fails_floor() {
        let m = nearmono(NearMonoParams::default(), &[0.0, 1.0]);
        let m0 = m.with_rates(Arc::new(|x: &[f64], _u: &[f64], out: &mut [f64]| {
            let r = if x[0] > 3.0 { 0.0 } else { 1.0 };
            out.copy_from_slice(&[-r, r, 1.0, -1.0]);
        }));
        let v = validate_near_monotone(&m0, 16.0, 100).unwrap();
        let b2 = v.check("B2").unwrap();
        assert!(!b2.passed);
        assert!(b2.witness.as_ref().unwrap().x[0] > 3.0);
    }

    #[test]
    fn outward_drift_fails_radial_decay() {
        let m = nearmono(NearMonoParams::default(), &[1.0]).with_drift(Arc::new(
            |_x: &[f64], _k: usize, _u: &[f64], out: &mut [f64]| out[0] = 1.0,
        ));
        let v = validate_near_monotone(&m, 64.0, 100).unwrap();
        assert!(v.check("B1").unwrap().passed);
        assert!(!v.check("B3").unwrap().passed);
    }

    #[test]
    fn flat_cost_fails_sublevel_check() {
        let m = nearmono(NearMonoParams::default(), &[0.0, 1.0])
            .with_cost(Arc::new(|_x: &[f64], _k: usize, _u: &[f64]| 0.5));
        let g = GridSpec::from_density(8.0, 10, 1).unwrap();
        let s = sublevel_check(&m, &g, 0.49, 0.01);
        assert!(!s.passed);
        assert_eq!(s.nodes_in_set, g.num_nodes());
    }

    #[test]
    fn lq_is_refused_by_the_gate() {
        let r = near_monotone_suite(
            &lq(0.1875, &[1.0]),
            &[2.0, 4.0],
            10,
            &SolveOptions::default(),
            &NearMonotoneOptions::default(),
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.sweep.is_none());
        assert!(!r.validation.check("B1").unwrap().passed);
    }

    #[test]
    fn builtin_instance_passes_the_suite() {
        let m = nearmono(NearMonoParams::default(), &[0.0, 1.0]);
        let r = near_monotone_suite(
            &m,
            &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            20,
            &SolveOptions::default(),
            &NearMonotoneOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        let lambda = r.lambda_star.unwrap();
        assert!(lambda < NearMonoParams::default().tail - 0.01);
        let growth = r.growth.unwrap();
        assert!(growth.kappa_hat > 0.0);
        assert_eq!(growth.violations, 0);
    }

    #[test]
    fn growth_bound_of_a_pure_exponential() {
        use crate::eigensolve::Normalization;
        let g = GridSpec::new(4.0, 41, 1).unwrap();
        let psi: Vec<f64> = g
            .interior_nodes()
            .into_iter()
            .map(|i| (0.5 * g.point(i)[0].abs()).exp())
            .collect();
        let ep = EigenPair {
            lambda: 0.0,
            psi,
            normalization: Normalization::MinRegimeAtOriginEqualsOne,
            num_regimes: 1,
            residual: 0.0,
            iterations: 0,
            lower_bound: 0.0,
            upper_bound: 0.0,
        };
        let gb = growth_bound(&ep, &g, None);
        assert!((gb.kappa_hat - 0.5).abs() < 1e-12);
        assert_eq!(gb.violations, 0);
    }
}
