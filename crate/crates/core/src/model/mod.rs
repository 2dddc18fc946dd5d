//! Controlled regime-switching diffusion models.
//!
//! A [`SwitchingModel`] bundles the coefficient fields of
//!
//! ```text
//! dX_t = b(X_t, S_t, Z_t) dt + sigma(X_t, S_t) dW_t
//! S_t jumps k -> j at rate m_{k,j}(X_t, Z_t)
//! ```
//!
//! together with a running cost `c(x, k, xi)` and a finite list of control
//! points. Coefficients are closures over plain slices so the same model can
//! back the finite-difference assembly and the path simulator, and can be
//! evaluated concurrently from many workers.

mod builtin;
mod config;
mod lyapunov;
mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;

pub use builtin::{
    bounded2d, builtin_certificate, builtin_defaults, builtin_model, builtin_names, lq,
    lq_eigenvalue, nearmono, ou2, Bounded2dParams, NearMonoParams, Ou2Params,
};
pub use config::{BuiltinSpec, ControlPoint, ExpressionSpec, ModelConfig};
pub use lyapunov::{
    check_lyapunov, CertificateMode, CertificateReport, CertificateStatus, LyapunovCertificate,
};
pub use validate::{
    validate_model, validate_model_with, HypothesisCheck, ValidationOptions, ValidationReport,
};

/// `b(x, k, xi)` written into `out` (length `dim`).
pub type DriftFn = dyn Fn(&[f64], usize, &[f64], &mut [f64]) + Send + Sync;
/// `sigma(x, k)` written row-major into `out` (length `dim * dim`).
pub type DiffusionFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;
/// `M(x, xi)` written row-major into `out` (length `N * N`).
pub type RatesFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
/// `c(x, k, xi)`.
pub type CostFn = dyn Fn(&[f64], usize, &[f64]) -> f64 + Send + Sync;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("rate matrix malformed at x = {x:?}, control {control}, row {row}: {detail}")]
    MalformedRates {
        x: Vec<f64>,
        control: usize,
        row: usize,
        detail: String,
    },
    #[error("unknown builtin model '{0}'")]
    UnknownBuiltin(String),
    #[error("bad parameter '{name}': {detail}")]
    BadParameter { name: String, detail: String },
    #[error("model config: {0}")]
    Config(String),
    #[error("expression '{source_text}': {error}")]
    Expr {
        source_text: String,
        error: ExprError,
    },
}

/// A point where a check was evaluated, used to report the worst case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub regime: Option<usize>,
    pub control: Option<usize>,
}

#[derive(Clone)]
pub struct SwitchingModel {
    name: String,
    dim: usize,
    num_regimes: usize,
    controls: Vec<Vec<f64>>,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    rates: Arc<RatesFn>,
    cost: Arc<CostFn>,
    ellipticity_floor: f64,
}

impl fmt::Debug for SwitchingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchingModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("num_regimes", &self.num_regimes)
            .field("controls", &self.controls)
            .finish_non_exhaustive()
    }
}

impl SwitchingModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        num_regimes: usize,
        controls: Vec<Vec<f64>>,
        drift: Arc<DriftFn>,
        diffusion: Arc<DiffusionFn>,
        rates: Arc<RatesFn>,
        cost: Arc<CostFn>,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::Shape("dimension must be positive".into()));
        }
        if num_regimes == 0 {
            return Err(ModelError::Shape("need at least one regime".into()));
        }
        if controls.is_empty() {
            return Err(ModelError::Shape("control set is empty".into()));
        }
        let cdim = controls[0].len();
        if cdim == 0 || controls.iter().any(|c| c.len() != cdim) {
            return Err(ModelError::Shape(
                "control points must be non-empty and share one length".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            dim,
            num_regimes,
            controls,
            drift,
            diffusion,
            rates,
            cost,
            ellipticity_floor: 1e-8,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_regimes(&self) -> usize {
        self.num_regimes
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn ellipticity_floor(&self) -> f64 {
        self.ellipticity_floor
    }

    pub fn with_ellipticity_floor(mut self, floor: f64) -> Self {
        self.ellipticity_floor = floor;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_controls(mut self, controls: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let cdim = self.controls[0].len();
        if controls.is_empty() || controls.iter().any(|c| c.len() != cdim) {
            return Err(ModelError::Shape(format!(
                "replacement controls must be non-empty points of length {cdim}"
            )));
        }
        self.controls = controls;
        Ok(self)
    }

    #[inline]
    pub fn drift(&self, x: &[f64], regime: usize, control: usize, out: &mut [f64]) {
        (self.drift)(x, regime, &self.controls[control], out)
    }

    #[inline]
    pub fn diffusion(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.diffusion)(x, regime, out)
    }

    /// `a = sigma sigma^T / 2`, row-major. `scratch` must hold `dim * dim`.
    pub fn covariance(&self, x: &[f64], regime: usize, scratch: &mut [f64], out: &mut [f64]) {
        let d = self.dim;
        (self.diffusion)(x, regime, scratch);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += scratch[i * d + l] * scratch[j * d + l];
                }
                out[i * d + j] = 0.5 * s;
            }
        }
    }

    #[inline]
    pub fn rates(&self, x: &[f64], control: usize, out: &mut [f64]) {
        (self.rates)(x, &self.controls[control], out)
    }

    #[inline]
    pub fn cost(&self, x: &[f64], regime: usize, control: usize) -> f64 {
        (self.cost)(x, regime, &self.controls[control])
    }

    /// Same model with `c` replaced by `c + kappa`.
    pub fn with_cost_shift(&self, kappa: f64) -> Self {
        let base = Arc::clone(&self.cost);
        let mut out = self.clone();
        out.cost = Arc::new(move |x: &[f64], k: usize, u: &[f64]| base(x, k, u) + kappa);
        out
    }

    /// Same model with `height * 1{|x - center| <= radius}` added to the cost.
    pub fn with_cost_bump(&self, center: Vec<f64>, radius: f64, height: f64) -> Self {
        let base = Arc::clone(&self.cost);
        let mut out = self.clone();
        out.cost = Arc::new(move |x: &[f64], k: usize, u: &[f64]| {
            let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
            let bump = if r2 <= radius * radius { height } else { 0.0 };
            base(x, k, u) + bump
        });
        out
    }

    /// Same model with the cost replaced.
    pub fn with_cost(&self, cost: Arc<CostFn>) -> Self {
        let mut out = self.clone();
        out.cost = cost;
        out
    }

    /// Same model with the rates replaced.
    pub fn with_rates(&self, rates: Arc<RatesFn>) -> Self {
        let mut out = self.clone();
        out.rates = rates;
        out
    }

    /// Same model with the drift replaced.
    pub fn with_drift(&self, drift: Arc<DriftFn>) -> Self {
        let mut out = self.clone();
        out.drift = drift;
        out
    }

    /// Same model with the diffusion replaced.
    pub fn with_diffusion(&self, diffusion: Arc<DiffusionFn>) -> Self {
        let mut out = self.clone();
        out.diffusion = diffusion;
        out
    }
}

/// Euclidean norm.
#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
