//! JSON model configuration.
//!
//! ```json
//! {
//!   "dim": 1,
//!   "regimes": 2,
//!   "controls": [0.5, 1.0],
//!   "expressions": {
//!     "drift":     ["-xi * x1"],
//!     "diffusion": [["sqrt(2)"]],
//!     "rates":     [["-1", "1"], ["1", "-1"]],
//!     "cost":      "(0.2 + 0.1 * k) * x1^2"
//!   }
//! }
//! ```
//!
//! or, for a built-in instance,
//!
//! ```json
//! { "builtin": { "name": "lq", "params": { "q": 0.1875 } }, "controls": [1, 2] }
//! ```
//!
//! `controls` entries are numbers or equal-length vectors. `diffusion` is
//! the `d x d` matrix `sigma` (row-major rows), `rates` the full `N x N`
//! matrix including its diagonal; `rates` may be omitted when `N = 1`.
//! Expression syntax is documented in [`crate::expr`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{builtin::builtin_model, ModelError, SwitchingModel};
use crate::expr::{Bindings, Expr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlPoint {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ControlPoint {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            ControlPoint::Scalar(v) => vec![*v],
            ControlPoint::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionSpec {
    pub drift: Vec<String>,
    pub diffusion: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<Vec<String>>>,
    pub cost: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<ControlPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<ExpressionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipticity_floor: Option<f64>,
}

impl ModelConfig {
    pub fn builtin(name: &str, params: BTreeMap<String, f64>, controls: Option<Vec<f64>>) -> Self {
        Self {
            builtin: Some(BuiltinSpec {
                name: name.to_string(),
                params,
            }),
            controls: controls.map(|c| c.into_iter().map(ControlPoint::Scalar).collect()),
            ..Self::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn build(&self) -> Result<SwitchingModel, ModelError> {
        let controls = self
            .controls
            .as_ref()
            .map(|c| c.iter().map(ControlPoint::to_vec).collect::<Vec<_>>());
        let model = match (&self.builtin, &self.expressions) {
            (Some(_), Some(_)) => {
                return Err(ModelError::Config(
                    "give either 'builtin' or 'expressions', not both".into(),
                ))
            }
            (None, None) => {
                return Err(ModelError::Config(
                    "model needs a 'builtin' or an 'expressions' section".into(),
                ))
            }
            (Some(spec), None) => {
                let m = builtin_model(&spec.name, &spec.params, controls.as_deref())?;
                if let Some(d) = self.dim {
                    if d != m.dim() {
                        return Err(ModelError::Config(format!(
                            "builtin '{}' has dim {}, config says {d}",
                            spec.name,
                            m.dim()
                        )));
                    }
                }
                if let Some(n) = self.regimes {
                    if n != m.num_regimes() {
                        return Err(ModelError::Config(format!(
                            "builtin '{}' has {} regimes, config says {n}",
                            spec.name,
                            m.num_regimes()
                        )));
                    }
                }
                m
            }
            (None, Some(spec)) => {
                let dim = self
                    .dim
                    .ok_or_else(|| ModelError::Config("'dim' is required".into()))?;
                let regimes = self
                    .regimes
                    .ok_or_else(|| ModelError::Config("'regimes' is required".into()))?;
                let controls =
                    controls.ok_or_else(|| ModelError::Config("'controls' is required".into()))?;
                build_from_expressions(dim, regimes, controls, spec)?
            }
        };
        Ok(match self.ellipticity_floor {
            Some(f) => model.with_ellipticity_floor(f),
            None => model,
        })
    }
}

fn parse_all(sources: &[String], dim: usize, control_dim: usize) -> Result<Vec<Expr>, ModelError> {
    sources
        .iter()
        .map(|s| {
            let wrap = |error| ModelError::Expr {
                source_text: s.clone(),
                error,
            };
            let e = Expr::parse(s).map_err(wrap)?;
            e.check_variables(dim, control_dim).map_err(wrap)?;
            Ok(e)
        })
        .collect()
}

fn build_from_expressions(
    dim: usize,
    regimes: usize,
    controls: Vec<Vec<f64>>,
    spec: &ExpressionSpec,
) -> Result<SwitchingModel, ModelError> {
    let cdim = controls.first().map(Vec::len).unwrap_or(0);
    if spec.drift.len() != dim {
        return Err(ModelError::Config(format!(
            "drift has {} components, expected {dim}",
            spec.drift.len()
        )));
    }
    if spec.diffusion.len() != dim || spec.diffusion.iter().any(|r| r.len() != dim) {
        return Err(ModelError::Config(format!("diffusion must be {dim}x{dim}")));
    }
    let rate_rows = match &spec.rates {
        Some(r) => r.clone(),
        None if regimes == 1 => vec![vec!["0".to_string()]],
        None => {
            return Err(ModelError::Config(
                "'rates' is required when regimes > 1".into(),
            ))
        }
    };
    if rate_rows.len() != regimes || rate_rows.iter().any(|r| r.len() != regimes) {
        return Err(ModelError::Config(format!(
            "rates must be {regimes}x{regimes}"
        )));
    }

    let drift = Arc::new(parse_all(&spec.drift, dim, cdim)?);
    let diffusion = Arc::new(parse_all(&spec.diffusion.concat(), dim, cdim)?);
    let rates = Arc::new(parse_all(&rate_rows.concat(), dim, cdim)?);
    let cost = Arc::new(parse_all(std::slice::from_ref(&spec.cost), dim, cdim)?.remove(0));
    const NO_CONTROL: &[f64] = &[];

    SwitchingModel::new(
        "expressions",
        dim,
        regimes,
        controls,
        Arc::new(move |x: &[f64], k: usize, u: &[f64], out: &mut [f64]| {
            let env = Bindings {
                x,
                regime: k,
                control: u,
            };
            for (o, e) in out.iter_mut().zip(drift.iter()) {
                *o = e.eval(&env);
            }
        }),
        Arc::new(move |x: &[f64], k: usize, out: &mut [f64]| {
            let env = Bindings {
                x,
                regime: k,
                control: NO_CONTROL,
            };
            for (o, e) in out.iter_mut().zip(diffusion.iter()) {
                *o = e.eval(&env);
            }
        }),
        Arc::new(move |x: &[f64], u: &[f64], out: &mut [f64]| {
            let env = Bindings {
                x,
                regime: 0,
                control: u,
            };
            for (o, e) in out.iter_mut().zip(rates.iter()) {
                *o = e.eval(&env);
            }
        }),
        Arc::new(move |x: &[f64], k: usize, u: &[f64]| {
            cost.eval(&Bindings {
                x,
                regime: k,
                control: u,
            })
        }),
    )
}
