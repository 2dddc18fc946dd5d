use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{path_rng, ControlRule, PathConfig, StartState, Stepper};
use super::SimError;
use crate::discretize::GridSpec;
use crate::eigensolve::EigenPair;
use crate::model::{norm, SwitchingModel};

const FAMILY_RATE: u64 = 1;
const FAMILY_FK: u64 = 2;
const FAMILY_POSITION: u64 = 3;

/// Effective sample sizes below this mark an estimate as heavy-tailed.
pub const MIN_ESS: f64 = 10.0;

/// Pairwise (tree) sum in index order; independent of how the inputs were
/// produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functional {
    RiskSensitiveRate,
    FeynmanKacAnnulus,
    MeanAbsPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementRate {
    pub from: f64,
    pub to: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub functional: Functional,
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
    /// Effective sample size of the exponential weights (risk-sensitive
    /// rate only; `paths` otherwise).
    pub ess: f64,
    pub horizon: f64,
    pub lambda_ref: Option<f64>,
    /// `(log E e^{I_T} - log E e^{I_{T/2}}) / (T/2)` from the same paths,
    /// which removes the `O(1/T)` start-up term of `value`.
    pub increment: Option<IncrementRate>,
    /// `ess < MIN_ESS`.
    pub heavy_tail: bool,
    /// `value` and `increment` disagree by more than three combined
    /// standard errors, so `value` still carries start-up bias.
    pub horizon_bias: bool,
}

impl CostEstimate {
    pub fn unreliable(&self) -> bool {
        self.heavy_tail || self.horizon_bias
    }

    /// Whether `target` lies within `value +- 3 std_error`.
    pub fn brackets(&self, target: f64) -> bool {
        (self.value - target).abs() <= 3.0 * self.std_error
    }
}

/// `log mean exp(T a_p)` shifted by `T max a`, returned as
/// `(max a, log mean exp(T (a_p - max a)), weights)`.
fn shifted_weights(a: &[f64], t: f64) -> (f64, Vec<f64>) {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (m, a.iter().map(|&v| (t * (v - m)).exp()).collect())
}

/// Risk-sensitive rate `(1/T) log E exp(int_0^T c)` under `rule`, from
/// `start`.
///
/// Each path's integral is `T` times its streaming mean cost, so a constant
/// cost reproduces itself exactly. The log-mean-exp is shifted by the largest
/// path mean; the standard error is the delta-method value
/// `sd(w) / (sqrt(n) mean(w) T)` on the shifted weights `w`.
pub fn estimate_risk_sensitive_rate(
    model: &SwitchingModel,
    rule: &ControlRule,
    config: &PathConfig,
    start: &StartState,
    lambda_ref: Option<f64>,
) -> Result<CostEstimate, SimError> {
    config.check()?;
    rule.check(model)?;
    start.check(model)?;
    let steps = config.steps();
    let half = steps / 2;
    let h = config.step;
    let t_full = steps as f64 * h;
    let t_half = half as f64 * h;

    let results: Vec<Result<(f64, f64), SimError>> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, FAMILY_RATE, p);
            let mut stepper = Stepper::new(model, rule, h);
            let mut x = start.x.clone();
            let mut k = start.regime;
            let mut mean = 0.0;
            let mut mean_half = 0.0;
            for s in 0..steps {
                let c = stepper.step(&mut x, &mut k, &mut rng)?;
                mean += (c - mean) / (s + 1) as f64;
                if s + 1 == half {
                    mean_half = mean;
                }
            }
            Ok((mean, mean_half))
        })
        .collect();
    let mut full = Vec::with_capacity(config.paths);
    let mut halfs = Vec::with_capacity(config.paths);
    for r in results {
        let (a, b) = r?;
        full.push(a);
        halfs.push(b);
    }
    let n = full.len() as f64;

    let (m, w) = shifted_weights(&full, t_full);
    let (wbar, wvar) = mean_and_var(&w);
    let value = m + wbar.ln() / t_full;
    let std_error = wvar.sqrt() / (n.sqrt() * wbar * t_full);
    let sum_w = pairwise_sum(&w);
    let sum_w2 = pairwise_sum(&w.iter().map(|v| v * v).collect::<Vec<_>>());
    let ess = sum_w * sum_w / sum_w2;

    let mut increment = None;
    let mut horizon_bias = false;
    if half >= 1 && steps - half >= 1 {
        let (mh, wh) = shifted_weights(&halfs, t_half);
        let (whbar, whvar) = mean_and_var(&wh);
        let cross: Vec<f64> = w
            .iter()
            .zip(&wh)
            .map(|(a, b)| (a - wbar) * (b - whbar))
            .collect();
        let cov = if w.len() > 1 {
            pairwise_sum(&cross) / (n - 1.0)
        } else {
            0.0
        };
        let dt = t_full - t_half;
        let inc = (t_full * m + wbar.ln() - t_half * mh - whbar.ln()) / dt;
        let var_log = (wvar / (wbar * wbar) + whvar / (whbar * whbar) - 2.0 * cov / (wbar * whbar))
            .max(0.0)
            / n;
        let inc_se = var_log.sqrt() / dt;
        let combined = (std_error * std_error + inc_se * inc_se).sqrt();
        horizon_bias = (value - inc).abs() > 3.0 * combined;
        increment = Some(IncrementRate {
            from: t_half,
            to: t_full,
            value: inc,
            std_error: inc_se,
        });
    }

    Ok(CostEstimate {
        functional: Functional::RiskSensitiveRate,
        value,
        std_error,
        paths: config.paths,
        ess,
        horizon: t_full,
        lambda_ref,
        increment,
        heavy_tail: ess < MIN_ESS,
        horizon_bias,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkEstimate {
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkPoint {
    pub x: Vec<f64>,
    pub regime: usize,
    /// Interpolated eigenfunction at the start.
    pub psi: f64,
    pub hit: usize,
    pub exited: usize,
    /// Paths stopped by the time cap; they contribute zero.
    pub capped: usize,
    pub estimates: Vec<FkEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacReport {
    pub r_inner: f64,
    pub time_cap: f64,
    pub lambdas: Vec<f64>,
    pub points: Vec<FkPoint>,
    /// Per entry of `lambdas`, the largest `|z|` over start points.
    pub max_abs_z: Vec<f64>,
    /// Per entry of `lambdas`, all `|z| <= 3`.
    pub passed: Vec<bool>,
}

enum Stop {
    Hit,
    Exit,
    Cap,
}

/// Monte Carlo check of
/// `psi_k(x) = E[exp(int_0^tau (c - lambda)) psi(X_tau, S_tau) 1{tau < exit}]`
/// with `tau` the first Euler time with `|X| <= r_inner`. The identity holds
/// for any stopping time because `psi` solves the eigen-equation on the whole
/// box, so stopping on the discrete monitoring grid adds no bias of its own.
///
/// One set of paths serves every value in `lambdas`.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_annulus(
    model: &SwitchingModel,
    rule: &ControlRule,
    eigenpair: &EigenPair,
    grid: &GridSpec,
    r_inner: f64,
    starts: &[StartState],
    config: &PathConfig,
    lambdas: &[f64],
) -> Result<FeynmanKacReport, SimError> {
    config.check()?;
    rule.check(model)?;
    if !(r_inner > 0.0 && r_inner < grid.radius()) {
        return Err(SimError::InvalidConfig(format!(
            "inner radius {r_inner} must lie in (0, {})",
            grid.radius()
        )));
    }
    if eigenpair.psi.len() != grid.num_interior() * model.num_regimes() {
        return Err(SimError::InvalidConfig(
            "eigenpair does not match the grid".into(),
        ));
    }
    for s in starts {
        s.check(model)?;
        if norm(&s.x) <= r_inner || s.x.iter().any(|v| v.abs() >= grid.radius()) {
            return Err(SimError::InvalidConfig(format!(
                "start point {:?} is not in the annulus",
                s.x
            )));
        }
    }
    let h = config.step;
    let cap_steps = ((1000.0 * config.horizon) / h).ceil() as usize;
    let radius = grid.radius();

    let mut points = Vec::with_capacity(starts.len());
    for (si, start) in starts.iter().enumerate() {
        let results: Vec<Result<(Stop, f64, f64, f64), SimError>> = (0..config.paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(config.seed, FAMILY_FK, (si << 32) | p);
                let mut stepper = Stepper::new(model, rule, h);
                let mut x = start.x.clone();
                let mut k = start.regime;
                let mut integral = 0.0;
                for s in 1..=cap_steps {
                    integral += h * stepper.step(&mut x, &mut k, &mut rng)?;
                    if x.iter().any(|v| v.abs() >= radius) {
                        return Ok((Stop::Exit, 0.0, 0.0, 0.0));
                    }
                    if norm(&x) <= r_inner {
                        let end = eigenpair.interpolate(grid, &x, k);
                        return Ok((Stop::Hit, integral, s as f64 * h, end));
                    }
                }
                Ok((Stop::Cap, 0.0, 0.0, 0.0))
            })
            .collect();
        let (mut hit, mut exited, mut capped) = (0, 0, 0);
        let mut samples = Vec::with_capacity(config.paths);
        for r in results {
            let (stop, integral, tau, end) = r?;
            match stop {
                Stop::Hit => hit += 1,
                Stop::Exit => exited += 1,
                Stop::Cap => capped += 1,
            }
            samples.push((integral, tau, end));
        }
        let psi = eigenpair.interpolate(grid, &start.x, start.regime);
        let estimates = lambdas
            .iter()
            .map(|&lambda| {
                let vals: Vec<f64> = samples
                    .iter()
                    .map(|&(i, tau, end)| {
                        if end > 0.0 {
                            (i - lambda * tau).exp() * end
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let (mean, var) = mean_and_var(&vals);
                let se = (var / vals.len() as f64).sqrt();
                let z = if se > 0.0 {
                    (mean - psi) / se
                } else if mean == psi {
                    0.0
                } else {
                    f64::INFINITY.copysign(mean - psi)
                };
                FkEstimate {
                    lambda,
                    estimate: mean,
                    std_error: se,
                    z,
                }
            })
            .collect();
        points.push(FkPoint {
            x: start.x.clone(),
            regime: start.regime,
            psi,
            hit,
            exited,
            capped,
            estimates,
        });
    }
    let max_abs_z: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            points
                .iter()
                .map(|p| p.estimates[l].z.abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let passed = max_abs_z.iter().map(|&z| z <= 3.0).collect();
    Ok(FeynmanKacReport {
        r_inner,
        time_cap: cap_steps as f64 * h,
        lambdas: lambdas.to_vec(),
        points,
        max_abs_z,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPositionReport {
    pub estimates: Vec<CostEstimate>,
    /// Least-squares slope of `log(E|X_T| / T)` against `log T`.
    pub slope: f64,
    pub decreasing: bool,
    pub passed: bool,
}

/// Slope at or below which `E|X_T| / T` counts as decaying.
pub const POSITION_SLOPE_MAX: f64 = -0.25;

/// `E|X_T| / T` along a ladder of horizons from one set of paths run to the
/// largest horizon. Passes when the sequence strictly decreases and its
/// log-log slope is at most [`POSITION_SLOPE_MAX`], which separates the
/// diffusive `T^{-1/2}` and mean-reverting `T^{-1}` regimes from ballistic
/// motion.
pub fn mean_position_diagnostic(
    model: &SwitchingModel,
    rule: &ControlRule,
    config: &PathConfig,
    start: &StartState,
    horizons: &[f64],
) -> Result<MeanPositionReport, SimError> {
    config.check()?;
    rule.check(model)?;
    start.check(model)?;
    if horizons.len() < 2 || horizons.windows(2).any(|w| !(w[1] > w[0])) || !(horizons[0] > 0.0) {
        return Err(SimError::InvalidConfig(
            "need at least two strictly increasing positive horizons".into(),
        ));
    }
    let h = config.step;
    let marks: Vec<usize> = horizons
        .iter()
        .map(|&t| ((t / h).round() as usize).max(1))
        .collect();
    let last = *marks.last().expect("non-empty");
    let results: Vec<Result<Vec<f64>, SimError>> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, FAMILY_POSITION, p);
            let mut stepper = Stepper::new(model, rule, h);
            let mut x = start.x.clone();
            let mut k = start.regime;
            let mut out = Vec::with_capacity(marks.len());
            let mut next = 0;
            for s in 1..=last {
                stepper.step(&mut x, &mut k, &mut rng)?;
                while next < marks.len() && marks[next] == s {
                    out.push(norm(&x));
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(config.paths); marks.len()];
    for r in results {
        for (c, v) in columns.iter_mut().zip(r?) {
            c.push(v);
        }
    }
    let estimates: Vec<CostEstimate> = columns
        .iter()
        .zip(&marks)
        .map(|(col, &s)| {
            let t = s as f64 * h;
            let (mean, var) = mean_and_var(col);
            CostEstimate {
                functional: Functional::MeanAbsPosition,
                value: mean / t,
                std_error: (var / col.len() as f64).sqrt() / t,
                paths: col.len(),
                ess: col.len() as f64,
                horizon: t,
                lambda_ref: None,
                increment: None,
                heavy_tail: false,
                horizon_bias: false,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|e| e.value > 0.0)
        .map(|e| (e.horizon.ln(), e.value.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let decreasing = estimates.windows(2).all(|w| w[1].value < w[0].value);
    Ok(MeanPositionReport {
        passed: decreasing && slope <= POSITION_SLOPE_MAX,
        estimates,
        slope,
        decreasing,
    })
}
