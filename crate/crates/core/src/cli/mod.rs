//! Command-line front end.
//!
//! Every command resolves its flags into a [`RunConfig`], hashes it, and
//! writes JSON results that embed the config, its SHA-256 and the seed.
//! Wall-clock data and the worker count go to `run_meta.json` only, so the
//! result files are byte-identical across reruns and thread counts.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 numeric
//! failure. Failures print a JSON error object to standard output.

mod args;
mod commands;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use args::{Cli, Command};

use crate::discretize::DiscretizeError;
use crate::eigensolve::{EigenError, SolveOptions};
use crate::model::{builtin_defaults, ControlPoint, ModelConfig, ModelError, SwitchingModel};
use crate::simulate::SimError;
use crate::verify::VerifyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub radii: Vec<f64>,
    pub nodes_per_unit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub start: Vec<f64>,
    pub regime: usize,
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub policy_samples: usize,
    pub monte_carlo: bool,
    pub fk_paths: usize,
    pub fk_step: f64,
    pub r_inner: f64,
    pub lambda_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub box_radius: f64,
    pub samples: usize,
}

/// Fully resolved inputs of one run. Output location and worker count are
/// deliberately excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub solver: SolveOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateConfig>,
    pub seed: u64,
}

impl RunConfig {
    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DiscretizeError> for CliError {
    fn from(e: DiscretizeError) -> Self {
        match e {
            DiscretizeError::Grid(_) | DiscretizeError::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<EigenError> for CliError {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::InvalidInput(_) => CliError::Usage(e.to_string()),
            EigenError::Discretize(d) => d.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            SimError::StepTooLarge { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Eigen(e) => e.into(),
            VerifyError::Simulation(e) => e.into(),
            VerifyError::Discretize(e) => e.into(),
            VerifyError::InvalidInput(m) => CliError::Usage(m),
        }
    }
}

/// Resolves the model flags into a config with every built-in parameter
/// and control spelled out, and builds the model.
pub(crate) fn resolve_model(
    m: &args::ModelArgs,
) -> Result<(ModelConfig, SwitchingModel), CliError> {
    let mut config = match (&m.config, &m.builtin) {
        (Some(path), _) => {
            if !m.params.is_empty() || m.q.is_some() {
                return Err(CliError::Usage(
                    "--param and --q apply to --builtin models only".into(),
                ));
            }
            let mut c = ModelConfig::from_path(path)?;
            if let Some(controls) = &m.controls {
                c.controls = Some(controls.iter().map(|&v| ControlPoint::Scalar(v)).collect());
            }
            c
        }
        (None, Some(name)) => {
            let mut params = BTreeMap::new();
            for p in &m.params {
                let (k, v) = p.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--param expects NAME=VALUE, got '{p}'"))
                })?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("--param {k}: '{v}' is not a number")))?;
                params.insert(k.trim().to_string(), v);
            }
            if let Some(q) = m.q {
                params.insert("q".into(), q);
            }
            // unknown names are rejected by the model constructor
            let mut full = builtin_defaults(name)?;
            full.extend(params.clone());
            let mut c = ModelConfig::builtin(name, params, m.controls.clone());
            let model = c.build()?;
            if let Some(spec) = c.builtin.as_mut() {
                spec.params = full;
            }
            c.controls = Some(control_points(&model));
            return Ok((c, model));
        }
        (None, None) => {
            return Err(CliError::Usage(
                "give a model with --builtin NAME or --config FILE".into(),
            ))
        }
    };
    let model = config.build()?;
    config.controls = Some(control_points(&model));
    Ok((config, model))
}

fn control_points(model: &SwitchingModel) -> Vec<ControlPoint> {
    model
        .controls()
        .iter()
        .map(|c| match c.as_slice() {
            [v] => ControlPoint::Scalar(*v),
            _ => ControlPoint::Vector(c.clone()),
        })
        .collect()
}

/// Result file envelope.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    config_hash: String,
    seed: u64,
    passed: bool,
    result: &'a T,
}

pub(crate) struct Output<'a> {
    pub dir: &'a Path,
    pub config: &'a RunConfig,
}

impl Output<'_> {
    pub(crate) fn json<T: Serialize>(
        &self,
        file: &str,
        passed: bool,
        result: &T,
    ) -> Result<(), CliError> {
        let env = Envelope {
            command: &self.config.command,
            config: self.config,
            config_hash: self.config.hash(),
            seed: self.config.seed,
            passed,
            result,
        };
        let mut text =
            serde_json::to_string_pretty(&env).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(file, text.as_bytes())
    }

    pub(crate) fn write(&self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    workers: usize,
    started_unix_seconds: u64,
    elapsed_seconds: f64,
    exit_code: i32,
}

fn error_json(e: &CliError) -> String {
    serde_json::json!({
        "error": { "kind": e.kind(), "message": e.message() },
        "exit_code": e.exit_code(),
    })
    .to_string()
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let common = match &cli.command {
        Command::Solve(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Verify(a) => &a.common,
        Command::Validate(a) => &a.common,
    };
    let workers = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        let e = CliError::Usage("--workers must be positive".into());
        println!("{}", error_json(&e));
        return e.exit_code();
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            let e = CliError::Io(format!("thread pool: {e}"));
            println!("{}", error_json(&e));
            return e.exit_code();
        }
    };
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let out_dir = common.out.clone();
    let outcome = pool.install(|| commands::dispatch(&cli.command));
    let (code, config) = match outcome {
        Ok((passed, config)) => (if passed { 0 } else { 1 }, Some(config)),
        Err(e) => {
            println!("{}", error_json(&e));
            (e.exit_code(), None)
        }
    };
    if let Some(config) = config {
        let meta = RunMeta {
            command: &config.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: config.hash(),
            workers,
            started_unix_seconds: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
            exit_code: code,
        };
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
        if let Err(e) = fs::write(out_dir.join("run_meta.json"), text) {
            eprintln!("warning: could not write run_meta.json: {e}");
        }
    }
    code
}
