//! Grid checks of Lyapunov drift certificates.
//!
//! Two forms are supported, with `K` the closed ball of radius
//! `compact_radius` and `L` the controlled generator without cost,
//! `(L V)_k = trace(a_k D^2 V_k) + b_k . grad V_k + sum_j m_kj V_j`:
//!
//! - [`CertificateMode::InfCompact`]: `(L V)_k <= beta 1_K - ell_k V_k`
//!   with `ell_k - sup_xi c_k` inf-compact.
//! - [`CertificateMode::Geometric`]: `(L V)_k <= beta 1_K - gamma V_k`
//!   with `gamma` the constant value of `ell` and `|c_k|_inf < gamma`.
//!
//! Derivatives of `V` are central differences with the grid spacing `h` and
//! with `h / 2`; their disagreement plus a rounding allowance is the error
//! estimate attached to every margin. A node whose margin is negative beyond
//! its error fails the certificate; a node whose margin lies within its error
//! makes the verdict inconclusive.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{norm, SwitchingModel, Witness};
use crate::discretize::GridSpec;

/// `V(x, k)` or `ell(x, k)`.
pub type RegimeFieldFn = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateMode {
    InfCompact,
    Geometric,
}

#[derive(Clone)]
pub struct LyapunovCertificate {
    pub lyap: Arc<RegimeFieldFn>,
    pub ell: Arc<RegimeFieldFn>,
    pub beta: f64,
    pub compact_radius: f64,
    pub mode: CertificateMode,
}

impl std::fmt::Debug for LyapunovCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LyapunovCertificate")
            .field("beta", &self.beta)
            .field("compact_radius", &self.compact_radius)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl LyapunovCertificate {
    /// `V_k(x) = exp(theta sqrt(|x|^2 + 1))` with constant rate `gamma`, in
    /// geometric mode.
    pub fn exp_radial(theta: f64, gamma: f64, beta: f64, compact_radius: f64) -> Self {
        Self {
            lyap: Arc::new(move |x: &[f64], _k: usize| {
                (theta * (x.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt()).exp()
            }),
            ell: Arc::new(move |_x: &[f64], _k: usize| gamma),
            beta,
            compact_radius,
            mode: CertificateMode::Geometric,
        }
    }

    /// `V = 1`, `ell = gamma`, geometric mode.
    pub fn constant(gamma: f64, beta: f64, compact_radius: f64) -> Self {
        Self {
            lyap: Arc::new(|_x: &[f64], _k: usize| 1.0),
            ell: Arc::new(move |_x: &[f64], _k: usize| gamma),
            beta,
            compact_radius,
            mode: CertificateMode::Geometric,
        }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub status: CertificateStatus,
    pub mode: CertificateMode,
    /// Smallest `rhs - L V` over all interior nodes, regimes and controls.
    pub min_margin: f64,
    pub min_margin_at: Option<Witness>,
    /// Error estimate of the derivative approximation at `min_margin_at`.
    pub error_at_min: f64,
    /// Nodes with margin below `-error` (certain violations).
    pub violations: usize,
    /// Nodes with `|margin| <= error` where the sign is not resolved.
    pub unresolved: usize,
    pub min_lyap: f64,
    /// Inf-compactness of `ell - sup c` (InfCompact) or `|c|_inf < gamma`
    /// (Geometric).
    pub cost_condition: bool,
    pub cost_detail: String,
    pub nodes_checked: usize,
}

struct Derivs {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
    /// Magnitude of the largest sample, for the rounding allowance.
    scale: f64,
}

fn derivatives(v: &RegimeFieldFn, x: &[f64], k: usize, h: f64) -> Derivs {
    let d = x.len();
    let mut y = x.to_vec();
    let v0 = v(x, k);
    let mut scale = v0.abs();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let eval = |y: &mut Vec<f64>, scale: &mut f64| {
        let val = v(y, k);
        *scale = scale.max(val.abs());
        val
    };
    for i in 0..d {
        y[i] = x[i] + h;
        let vp = eval(&mut y, &mut scale);
        y[i] = x[i] - h;
        let vm = eval(&mut y, &mut scale);
        y[i] = x[i];
        grad[i] = (vp - vm) / (2.0 * h);
        hess[i * d + i] = (vp - 2.0 * v0 + vm) / (h * h);
        for j in (i + 1)..d {
            let corner = |si: f64, sj: f64, y: &mut Vec<f64>, scale: &mut f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let val = eval(y, scale);
                y[i] = x[i];
                y[j] = x[j];
                val
            };
            let pp = corner(1.0, 1.0, &mut y, &mut scale);
            let mm = corner(-1.0, -1.0, &mut y, &mut scale);
            let pm = corner(1.0, -1.0, &mut y, &mut scale);
            let mp = corner(-1.0, 1.0, &mut y, &mut scale);
            let hij = (pp + mm - pm - mp) / (4.0 * h * h);
            hess[i * d + j] = hij;
            hess[j * d + i] = hij;
        }
    }
    Derivs {
        value: v0,
        grad,
        hess,
        scale,
    }
}

struct Scratch {
    sigma: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    m: Vec<f64>,
}

/// `(L V)_k(x, u)` from precomputed derivatives of every regime's `V`.
fn generator(
    model: &SwitchingModel,
    x: &[f64],
    k: usize,
    u: usize,
    derivs: &[Derivs],
    values: &[f64],
    s: &mut Scratch,
) -> f64 {
    let d = x.len();
    let n = model.num_regimes();
    model.covariance(x, k, &mut s.sigma, &mut s.a);
    model.drift(x, k, u, &mut s.b);
    model.rates(x, u, &mut s.m);
    let dk = &derivs[k];
    let mut out = 0.0;
    for i in 0..d {
        for j in 0..d {
            out += s.a[i * d + j] * dk.hess[i * d + j];
        }
        out += s.b[i] * dk.grad[i];
    }
    for j in 0..n {
        out += s.m[k * n + j] * values[j];
    }
    out
}

pub fn check_lyapunov(
    model: &SwitchingModel,
    cert: &LyapunovCertificate,
    grid: &GridSpec,
) -> CertificateReport {
    let d = model.dim();
    let n = model.num_regimes();
    let h = grid.spacing();
    let mut s = Scratch {
        sigma: vec![0.0; d * d],
        a: vec![0.0; d * d],
        b: vec![0.0; d],
        m: vec![0.0; n * n],
    };
    let mut x = vec![0.0; d];

    let mut min_margin = f64::INFINITY;
    let mut min_at = None;
    let mut err_at_min = 0.0;
    let mut violations = 0;
    let mut unresolved = 0;
    let mut min_lyap = f64::INFINITY;
    let mut checked = 0;

    for g in 0..grid.num_nodes() {
        grid.coordinates(g, &mut x);
        for k in 0..n {
            min_lyap = min_lyap.min((cert.lyap)(&x, k));
        }
        if grid.is_boundary(g) {
            continue;
        }
        checked += 1;
        let coarse: Vec<Derivs> = (0..n).map(|k| derivatives(&*cert.lyap, &x, k, h)).collect();
        let fine: Vec<Derivs> = (0..n)
            .map(|k| derivatives(&*cert.lyap, &x, k, 0.5 * h))
            .collect();
        let values: Vec<f64> = fine.iter().map(|dv| dv.value).collect();
        let in_ball = norm(&x) <= cert.compact_radius;
        for k in 0..n {
            let rate = (cert.ell)(&x, k);
            let rhs = if in_ball { cert.beta } else { 0.0 } - rate * values[k];
            // Rounding in a second difference at step h/2 is about
            // 4 eps |V| / (h/2)^2 per entry.
            let rounding = 64.0 * f64::EPSILON * fine[k].scale / (h * h);
            for u in 0..model.num_controls() {
                let lv_fine = generator(model, &x, k, u, &fine, &values, &mut s);
                let lv_coarse = generator(model, &x, k, u, &coarse, &values, &mut s);
                let err = (lv_fine - lv_coarse).abs()
                    + rounding * (1.0 + s.a.iter().map(|v| v.abs()).sum::<f64>());
                let margin = rhs - lv_fine;
                if margin < -err {
                    violations += 1;
                } else if margin <= err {
                    unresolved += 1;
                }
                if margin < min_margin {
                    min_margin = margin;
                    err_at_min = err;
                    min_at = Some(Witness {
                        x: x.clone(),
                        regime: Some(k),
                        control: Some(u),
                    });
                }
            }
        }
    }

    let (cost_condition, cost_detail) = match cert.mode {
        CertificateMode::Geometric => geometric_cost_condition(model, cert, grid),
        CertificateMode::InfCompact => inf_compact_condition(model, cert, grid),
    };

    let status = if violations > 0 || min_lyap < 1.0 || !cost_condition {
        CertificateStatus::Fail
    } else if unresolved > 0 {
        CertificateStatus::Inconclusive
    } else {
        CertificateStatus::Pass
    };

    CertificateReport {
        status,
        mode: cert.mode,
        min_margin,
        min_margin_at: min_at,
        error_at_min: err_at_min,
        violations,
        unresolved,
        min_lyap,
        cost_condition,
        cost_detail,
        nodes_checked: checked,
    }
}

fn sup_cost(model: &SwitchingModel, x: &[f64], k: usize) -> f64 {
    (0..model.num_controls())
        .map(|u| model.cost(x, k, u))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn geometric_cost_condition(
    model: &SwitchingModel,
    cert: &LyapunovCertificate,
    grid: &GridSpec,
) -> (bool, String) {
    let mut worst = (f64::NEG_INFINITY, 0usize, 0usize);
    let mut gap = f64::INFINITY;
    let mut x = vec![0.0; grid.dim()];
    for g in 0..grid.num_nodes() {
        grid.coordinates(g, &mut x);
        for k in 0..model.num_regimes() {
            let c = (0..model.num_controls())
                .map(|u| model.cost(&x, k, u).abs())
                .fold(0.0, f64::max);
            let gamma = (cert.ell)(&x, k);
            if c > worst.0 {
                worst = (c, g, k);
            }
            gap = gap.min(gamma - c);
        }
    }
    (
        gap > 0.0,
        format!(
            "sup |c| = {:.6e} at node {} regime {}; smallest gamma - |c| = {:.6e}",
            worst.0, worst.1, worst.2, gap
        ),
    )
}

/// Inf-compactness on a finite grid: the largest value of `f` over the inner
/// half-box must lie strictly below its smallest value over the outer shell
/// `|x|_inf >= 3R/4`, for `f = ell_k` and `f = ell_k - sup_xi c_k`.
fn inf_compact_condition(
    model: &SwitchingModel,
    cert: &LyapunovCertificate,
    grid: &GridSpec,
) -> (bool, String) {
    let r = grid.radius();
    let n = model.num_regimes();
    let mut inner_max = vec![[f64::NEG_INFINITY; 2]; n];
    let mut shell_min = vec![[f64::INFINITY; 2]; n];
    let mut x = vec![0.0; grid.dim()];
    for g in 0..grid.num_nodes() {
        grid.coordinates(g, &mut x);
        let sup = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let ell = (cert.ell)(&x, k);
            let f = [ell, ell - sup_cost(model, &x, k)];
            for t in 0..2 {
                if sup <= 0.5 * r {
                    inner_max[k][t] = inner_max[k][t].max(f[t]);
                }
                if sup >= 0.75 * r {
                    shell_min[k][t] = shell_min[k][t].min(f[t]);
                }
            }
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 0..n {
        for (t, label) in ["ell", "ell - sup c"].iter().enumerate() {
            let pass = inner_max[k][t] < shell_min[k][t];
            ok &= pass;
            parts.push(format!(
                "regime {k} {label}: inner max {:.4e}, shell min {:.4e}",
                inner_max[k][t], shell_min[k][t]
            ));
        }
    }
    (ok, parts.join("; "))
}
