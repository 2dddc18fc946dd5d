//! Built-in model instances with known reference values.
//!
//! | name        | d | N | notes                                                        |
//! |-------------|---|---|--------------------------------------------------------------|
//! | `lq`        | 1 | 1 | `b = -xi x`, `sigma = sqrt 2`, `c = q x^2`; closed-form eigenpair |
//! | `ou2`       | 1 | 2 | regime-dependent OU, constant symmetric switching rate `rho`  |
//! | `bounded2d` | 2 | 2 | bounded coefficients, geometric Lyapunov certificate          |
//! | `nearmono`  | 1 | 2 | bounded drift, cost dipping near the origin                   |

use std::collections::BTreeMap;
use std::sync::Arc;

use super::lyapunov::{CertificateMode, LyapunovCertificate};
use super::{ModelError, SwitchingModel};

/// Principal eigenvalue of the whole-line LQ problem under constant control
/// `xi`: `psi = exp(g x^2)` with `4 g^2 - 2 xi g + q = 0`, smaller root,
/// and `lambda = 2 g`.
pub fn lq_eigenvalue(q: f64, xi: f64) -> f64 {
    (xi - (xi * xi - 4.0 * q).sqrt()) / 2.0
}

pub fn builtin_names() -> &'static [&'static str] {
    &["lq", "ou2", "bounded2d", "nearmono"]
}

/// One-dimensional single-regime linear-quadratic model.
pub fn lq(q: f64, controls: &[f64]) -> SwitchingModel {
    let controls = controls.iter().map(|&c| vec![c]).collect();
    SwitchingModel::new(
        "lq",
        1,
        1,
        controls,
        Arc::new(|x: &[f64], _k: usize, u: &[f64], out: &mut [f64]| out[0] = -u[0] * x[0]),
        Arc::new(|_x: &[f64], _k: usize, out: &mut [f64]| out[0] = std::f64::consts::SQRT_2),
        Arc::new(|_x: &[f64], _u: &[f64], out: &mut [f64]| out[0] = 0.0),
        Arc::new(move |x: &[f64], _k: usize, _u: &[f64]| q * x[0] * x[0]),
    )
    .expect("lq model shape is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ou2Params {
    pub rho: f64,
    pub theta: [f64; 2],
    pub sigma: [f64; 2],
    pub q: [f64; 2],
    pub control_cost: f64,
}

impl Default for Ou2Params {
    fn default() -> Self {
        Self {
            rho: 1.0,
            theta: [1.0, 0.7],
            sigma: [std::f64::consts::SQRT_2, 1.0],
            q: [0.2, 0.3],
            control_cost: 0.1,
        }
    }
}

/// Two-regime OU model: `b_k = -xi theta_k x`, `sigma_k` constant,
/// `c_k = q_k x^2 + r xi^2`, rates `m_12 = m_21 = rho`.
pub fn ou2(p: Ou2Params, controls: &[f64]) -> SwitchingModel {
    let controls = controls.iter().map(|&c| vec![c]).collect();
    let Ou2Params {
        rho,
        theta,
        sigma,
        q,
        control_cost,
    } = p;
    SwitchingModel::new(
        "ou2",
        1,
        2,
        controls,
        Arc::new(move |x: &[f64], k: usize, u: &[f64], out: &mut [f64]| {
            out[0] = -u[0] * theta[k] * x[0]
        }),
        Arc::new(move |_x: &[f64], k: usize, out: &mut [f64]| out[0] = sigma[k]),
        Arc::new(move |_x: &[f64], _u: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[-rho, rho, rho, -rho])
        }),
        Arc::new(move |x: &[f64], k: usize, u: &[f64]| {
            q[k] * x[0] * x[0] + control_cost * u[0] * u[0]
        }),
    )
    .expect("ou2 model shape is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded2dParams {
    pub kappa: [f64; 2],
    pub rho12: f64,
    pub rho21: f64,
    pub cost_level: [f64; 2],
    pub control_cost: f64,
}

impl Default for Bounded2dParams {
    fn default() -> Self {
        Self {
            kappa: [1.0, 1.5],
            rho12: 0.5,
            rho21: 1.0,
            cost_level: [0.15, 0.1],
            control_cost: 0.02,
        }
    }
}

/// Two-dimensional, two-regime model with bounded coefficients.
///
/// `b_k = -xi kappa_k x / sqrt(1 + |x|^2)`; regime 0 has `sigma = I`,
/// regime 1 the anisotropic `sigma = [[1, 0.3], [0, 0.9]]`;
/// `m_01 = rho12 (1 + 0.5 |x|^2 / (1 + |x|^2))`, `m_10 = rho21`;
/// `c_k = level_k |x|^2 / (1 + |x|^2) + r xi`.
pub fn bounded2d(p: Bounded2dParams, controls: &[f64]) -> SwitchingModel {
    let controls = controls.iter().map(|&c| vec![c]).collect();
    let Bounded2dParams {
        kappa,
        rho12,
        rho21,
        cost_level,
        control_cost,
    } = p;
    SwitchingModel::new(
        "bounded2d",
        2,
        2,
        controls,
        Arc::new(move |x: &[f64], k: usize, u: &[f64], out: &mut [f64]| {
            let s = u[0] * kappa[k] / (1.0 + x[0] * x[0] + x[1] * x[1]).sqrt();
            out[0] = -s * x[0];
            out[1] = -s * x[1];
        }),
        Arc::new(|_x: &[f64], k: usize, out: &mut [f64]| {
            if k == 0 {
                out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            } else {
                out.copy_from_slice(&[1.0, 0.3, 0.0, 0.9]);
            }
        }),
        Arc::new(move |x: &[f64], _u: &[f64], out: &mut [f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let m01 = rho12 * (1.0 + 0.5 * r2 / (1.0 + r2));
            out.copy_from_slice(&[-m01, m01, rho21, -rho21]);
        }),
        Arc::new(move |x: &[f64], k: usize, u: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            cost_level[k] * r2 / (1.0 + r2) + control_cost * u[0]
        }),
    )
    .expect("bounded2d model shape is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearMonoParams {
    pub tail: f64,
    pub depth: [f64; 2],
    pub pull: [f64; 2],
    pub rho: f64,
    pub control_cost: f64,
}

impl Default for NearMonoParams {
    fn default() -> Self {
        Self {
            tail: 1.0,
            depth: [0.8, 0.6],
            pull: [2.0, 1.5],
            rho: 0.5,
            control_cost: 0.1,
        }
    }
}

/// One-dimensional, two-regime model in the bounded-coefficient class whose
/// cost is low near the origin and flat at level `tail` far away.
///
/// `b_k = -xi pull_k tanh(x)`, `sigma = 1`,
/// `c_k = tail - depth_k exp(-x^2) + r xi`,
/// `m_01 = rho (1 + xi / 2)`, `m_10 = rho`.
pub fn nearmono(p: NearMonoParams, controls: &[f64]) -> SwitchingModel {
    let controls = controls.iter().map(|&c| vec![c]).collect();
    let NearMonoParams {
        tail,
        depth,
        pull,
        rho,
        control_cost,
    } = p;
    SwitchingModel::new(
        "nearmono",
        1,
        2,
        controls,
        Arc::new(move |x: &[f64], k: usize, u: &[f64], out: &mut [f64]| {
            out[0] = -u[0] * pull[k] * x[0].tanh()
        }),
        Arc::new(|_x: &[f64], _k: usize, out: &mut [f64]| out[0] = 1.0),
        Arc::new(move |_x: &[f64], u: &[f64], out: &mut [f64]| {
            let m01 = rho * (1.0 + 0.5 * u[0]);
            out.copy_from_slice(&[-m01, m01, rho, -rho]);
        }),
        Arc::new(move |x: &[f64], k: usize, u: &[f64]| {
            tail - depth[k] * (-x[0] * x[0]).exp() + control_cost * u[0]
        }),
    )
    .expect("nearmono model shape is valid")
}

struct Params<'a> {
    model: &'a str,
    map: &'a BTreeMap<String, f64>,
    known: &'static [&'static str],
}

impl Params<'_> {
    fn check(&self) -> Result<(), ModelError> {
        for key in self.map.keys() {
            if !self.known.contains(&key.as_str()) {
                return Err(ModelError::BadParameter {
                    name: key.clone(),
                    detail: format!(
                        "not a parameter of '{}' (known: {})",
                        self.model,
                        self.known.join(", ")
                    ),
                });
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }
}

fn scalar_controls(
    model: &str,
    controls: Option<&[Vec<f64>]>,
    default: &[f64],
) -> Result<Vec<f64>, ModelError> {
    match controls {
        None => Ok(default.to_vec()),
        Some([]) => Err(ModelError::BadParameter {
            name: "controls".into(),
            detail: "control list is empty".into(),
        }),
        Some(list) => list
            .iter()
            .map(|c| match c.as_slice() {
                [v] => Ok(*v),
                _ => Err(ModelError::BadParameter {
                    name: "controls".into(),
                    detail: format!("'{model}' takes scalar controls"),
                }),
            })
            .collect(),
    }
}

/// Looks up a built-in model by name with parameter overrides.
///
/// Parameters (defaults in parentheses):
/// - `lq`: `q` (0.1875); controls (`[1]`)
/// - `ou2`: `rho` (1), `theta1` (1), `theta2` (0.7), `sigma1` (sqrt 2),
///   `sigma2` (1), `q1` (0.2), `q2` (0.3), `r` (0.1); controls (`[0.5, 1, 2]`)
/// - `bounded2d`: `kappa1` (1), `kappa2` (1.5), `rho12` (0.5), `rho21` (1),
///   `level1` (0.15), `level2` (0.1), `r` (0.02); controls (`[1, 1.5]`)
/// - `nearmono`: `tail` (1), `depth1` (0.8), `depth2` (0.6), `pull1` (2),
///   `pull2` (1.5), `rho` (0.5), `r` (0.1); controls (`[0, 1]`)
pub fn builtin_model(
    name: &str,
    params: &BTreeMap<String, f64>,
    controls: Option<&[Vec<f64>]>,
) -> Result<SwitchingModel, ModelError> {
    match name {
        "lq" => {
            let p = Params {
                model: name,
                map: params,
                known: &["q"],
            };
            p.check()?;
            let q = p.get("q", 0.1875);
            if q < 0.0 {
                return Err(ModelError::BadParameter {
                    name: "q".into(),
                    detail: "must be nonnegative".into(),
                });
            }
            Ok(lq(q, &scalar_controls(name, controls, &[1.0])?))
        }
        "ou2" => {
            let p = Params {
                model: name,
                map: params,
                known: &[
                    "rho", "theta1", "theta2", "sigma1", "sigma2", "q1", "q2", "r",
                ],
            };
            p.check()?;
            let d = Ou2Params::default();
            let params = Ou2Params {
                rho: p.get("rho", d.rho),
                theta: [p.get("theta1", d.theta[0]), p.get("theta2", d.theta[1])],
                sigma: [p.get("sigma1", d.sigma[0]), p.get("sigma2", d.sigma[1])],
                q: [p.get("q1", d.q[0]), p.get("q2", d.q[1])],
                control_cost: p.get("r", d.control_cost),
            };
            Ok(ou2(
                params,
                &scalar_controls(name, controls, &[0.5, 1.0, 2.0])?,
            ))
        }
        "bounded2d" => {
            let p = Params {
                model: name,
                map: params,
                known: &[
                    "kappa1", "kappa2", "rho12", "rho21", "level1", "level2", "r",
                ],
            };
            p.check()?;
            let d = Bounded2dParams::default();
            let params = Bounded2dParams {
                kappa: [p.get("kappa1", d.kappa[0]), p.get("kappa2", d.kappa[1])],
                rho12: p.get("rho12", d.rho12),
                rho21: p.get("rho21", d.rho21),
                cost_level: [
                    p.get("level1", d.cost_level[0]),
                    p.get("level2", d.cost_level[1]),
                ],
                control_cost: p.get("r", d.control_cost),
            };
            Ok(bounded2d(
                params,
                &scalar_controls(name, controls, &[1.0, 1.5])?,
            ))
        }
        "nearmono" => {
            let p = Params {
                model: name,
                map: params,
                known: &["tail", "depth1", "depth2", "pull1", "pull2", "rho", "r"],
            };
            p.check()?;
            let d = NearMonoParams::default();
            let params = NearMonoParams {
                tail: p.get("tail", d.tail),
                depth: [p.get("depth1", d.depth[0]), p.get("depth2", d.depth[1])],
                pull: [p.get("pull1", d.pull[0]), p.get("pull2", d.pull[1])],
                rho: p.get("rho", d.rho),
                control_cost: p.get("r", d.control_cost),
            };
            Ok(nearmono(
                params,
                &scalar_controls(name, controls, &[0.0, 1.0])?,
            ))
        }
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

/// Default parameter values of a built-in model, keyed as in
/// [`builtin_model`].
pub fn builtin_defaults(name: &str) -> Result<BTreeMap<String, f64>, ModelError> {
    let pairs: Vec<(&str, f64)> = match name {
        "lq" => vec![("q", 0.1875)],
        "ou2" => {
            let d = Ou2Params::default();
            vec![
                ("rho", d.rho),
                ("theta1", d.theta[0]),
                ("theta2", d.theta[1]),
                ("sigma1", d.sigma[0]),
                ("sigma2", d.sigma[1]),
                ("q1", d.q[0]),
                ("q2", d.q[1]),
                ("r", d.control_cost),
            ]
        }
        "bounded2d" => {
            let d = Bounded2dParams::default();
            vec![
                ("kappa1", d.kappa[0]),
                ("kappa2", d.kappa[1]),
                ("rho12", d.rho12),
                ("rho21", d.rho21),
                ("level1", d.cost_level[0]),
                ("level2", d.cost_level[1]),
                ("r", d.control_cost),
            ]
        }
        "nearmono" => {
            let d = NearMonoParams::default();
            vec![
                ("tail", d.tail),
                ("depth1", d.depth[0]),
                ("depth2", d.depth[1]),
                ("pull1", d.pull[0]),
                ("pull2", d.pull[1]),
                ("rho", d.rho),
                ("r", d.control_cost),
            ]
        }
        other => return Err(ModelError::UnknownBuiltin(other.to_string())),
    };
    Ok(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

/// Lyapunov certificates shipped with the built-in models.
///
/// - `lq`: `V = exp(x^2 / 4)`, `l = x^2 / 4 - 1`, `beta = 2`, ball radius 2.
/// - `bounded2d`: `V = exp(theta sqrt(|x|^2 + 1))` with `theta = 0.5`,
///   constant rate `gamma = 0.25`, `beta = 10`, ball radius 4.
pub fn builtin_certificate(model_name: &str) -> Option<LyapunovCertificate> {
    match model_name {
        "lq" => Some(LyapunovCertificate {
            lyap: Arc::new(|x: &[f64], _k: usize| (x[0] * x[0] / 4.0).exp()),
            ell: Arc::new(|x: &[f64], _k: usize| x[0] * x[0] / 4.0 - 1.0),
            beta: 2.0,
            compact_radius: 2.0,
            mode: CertificateMode::InfCompact,
        }),
        "bounded2d" => Some(LyapunovCertificate::exp_radial(0.5, 0.25, 10.0, 4.0)),
        _ => None,
    }
}
