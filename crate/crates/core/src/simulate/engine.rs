use std::io::{self, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::discretize::{GridSpec, MarkovPolicy};
use crate::model::SwitchingModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Euler step.
    pub step: f64,
    pub horizon: f64,
    pub seed: u64,
    pub paths: usize,
}

impl PathConfig {
    pub fn new(step: f64, horizon: f64, seed: u64, paths: usize) -> Self {
        Self {
            step,
            horizon,
            seed,
            paths,
        }
    }

    pub(crate) fn check(&self) -> Result<(), SimError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.paths == 0 {
            return Err(SimError::InvalidConfig("need at least one path".into()));
        }
        Ok(())
    }

    /// Number of Euler steps covering the horizon.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.step).round() as usize).max(1)
    }
}

/// How the simulator picks a control in state `(x, k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlRule {
    Constant(usize),
    /// Policy on the interior nodes of `grid`, looked up at the nearest
    /// interior node; states outside the grid use the closest boundary layer.
    Table {
        grid: GridSpec,
        policy: MarkovPolicy,
    },
}

impl ControlRule {
    #[inline]
    pub fn control(&self, x: &[f64], regime: usize) -> usize {
        match self {
            ControlRule::Constant(u) => *u,
            ControlRule::Table { grid, policy } => policy.get(grid.nearest_interior(x), regime),
        }
    }

    pub(crate) fn check(&self, model: &SwitchingModel) -> Result<(), SimError> {
        match self {
            ControlRule::Constant(u) if *u >= model.num_controls() => {
                Err(SimError::InvalidConfig(format!(
                    "control {u} out of range ({} controls)",
                    model.num_controls()
                )))
            }
            ControlRule::Constant(_) => Ok(()),
            ControlRule::Table { grid, policy } => {
                if grid.dim() != model.dim() {
                    return Err(SimError::InvalidConfig(
                        "policy grid dimension mismatch".into(),
                    ));
                }
                policy
                    .check(
                        grid.num_interior(),
                        model.num_regimes(),
                        model.num_controls(),
                    )
                    .map_err(|e| SimError::InvalidConfig(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartState {
    pub x: Vec<f64>,
    pub regime: usize,
}

impl StartState {
    pub fn new(x: Vec<f64>, regime: usize) -> Self {
        Self { x, regime }
    }

    pub(crate) fn check(&self, model: &SwitchingModel) -> Result<(), SimError> {
        if self.x.len() != model.dim() || self.regime >= model.num_regimes() {
            return Err(SimError::InvalidConfig(format!(
                "start state {:?} / regime {} does not fit the model",
                self.x, self.regime
            )));
        }
        Ok(())
    }
}

/// Independent generator for path `path` of stream family `family`.
pub(crate) fn path_rng(seed: u64, family: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((family << 40) | path as u64);
    rng
}

/// One Euler-Maruyama step with categorical regime switching.
pub(crate) struct Stepper<'a> {
    model: &'a SwitchingModel,
    rule: &'a ControlRule,
    h: f64,
    sqrt_h: f64,
    b: Vec<f64>,
    sigma: Vec<f64>,
    rates: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(model: &'a SwitchingModel, rule: &'a ControlRule, h: f64) -> Self {
        let d = model.dim();
        let n = model.num_regimes();
        Self {
            model,
            rule,
            h,
            sqrt_h: h.sqrt(),
            b: vec![0.0; d],
            sigma: vec![0.0; d * d],
            rates: vec![0.0; n * n],
            z: vec![0.0; d],
        }
    }

    /// Advances `(x, k)` by one step and returns the running cost at the
    /// start of the step.
    pub(crate) fn step(
        &mut self,
        x: &mut [f64],
        k: &mut usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, SimError> {
        let d = x.len();
        let n = self.model.num_regimes();
        let u = self.rule.control(x, *k);
        let c = self.model.cost(x, *k, u);
        self.model.drift(x, *k, u, &mut self.b);
        self.model.diffusion(x, *k, &mut self.sigma);
        if n > 1 {
            self.model.rates(x, u, &mut self.rates);
        }
        for z in self.z.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let from = *k;
        if n > 1 {
            let row = &self.rates[from * n..(from + 1) * n];
            let total: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != from)
                .map(|(_, &m)| m)
                .sum();
            if !(self.h * total <= 0.5) {
                return Err(SimError::StepTooLarge {
                    x: x.to_vec(),
                    regime: from,
                    total_rate: total,
                    step: self.h,
                });
            }
            let r: f64 = rng.random();
            let mut acc = 0.0;
            for (j, &m) in row.iter().enumerate() {
                if j == from {
                    continue;
                }
                acc += self.h * m;
                if r < acc {
                    *k = j;
                    break;
                }
            }
        }
        for i in 0..d {
            let mut noise = 0.0;
            for l in 0..d {
                noise += self.sigma[i * d + l] * self.z[l];
            }
            x[i] += self.b[i] * self.h + self.sqrt_h * noise;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub x: Vec<f64>,
    pub regime: usize,
    pub switches: usize,
    /// Time spent in each regime.
    pub occupation: Vec<f64>,
    /// Time average of the running cost over the horizon.
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub regime: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub config: PathConfig,
    pub start: StartState,
    pub steps: usize,
    pub paths: Vec<PathSummary>,
    /// Recorded trajectories for the first `record_paths` paths.
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
}

impl TrajectoryBatch {
    /// CSV with columns `path, t, x1..xd, regime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.start.x.len();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(w, "path,t,{},regime", header.join(","))?;
        for (p, traj) in self.trajectories.iter().enumerate() {
            for pt in traj {
                let xs: Vec<String> = pt.x.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{p},{},{},{}", pt.t, xs.join(","), pt.regime)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecordOptions {
    pub paths: usize,
    /// Record every this many steps; 0 records nothing.
    pub every: usize,
}

/// Stream family of [`simulate_paths`].
pub(crate) const FAMILY_PATHS: u64 = 0;

pub fn simulate_paths(
    model: &SwitchingModel,
    rule: &ControlRule,
    config: &PathConfig,
    start: &StartState,
    record: RecordOptions,
) -> Result<TrajectoryBatch, SimError> {
    config.check()?;
    rule.check(model)?;
    start.check(model)?;
    let steps = config.steps();
    let h = config.step;
    let n = model.num_regimes();
    let results: Vec<Result<(PathSummary, Vec<TrajectoryPoint>), SimError>> = (0..config.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, FAMILY_PATHS, p);
            let mut stepper = Stepper::new(model, rule, h);
            let mut x = start.x.clone();
            let mut k = start.regime;
            let mut occupation = vec![0.0; n];
            let mut switches = 0;
            let mut mean = 0.0;
            let recording = p < record.paths && record.every > 0;
            let mut traj = Vec::new();
            for s in 0..steps {
                if recording && s % record.every == 0 {
                    traj.push(TrajectoryPoint {
                        t: s as f64 * h,
                        x: x.clone(),
                        regime: k,
                    });
                }
                let before = k;
                occupation[before] += h;
                let c = stepper.step(&mut x, &mut k, &mut rng)?;
                mean += (c - mean) / (s + 1) as f64;
                if k != before {
                    switches += 1;
                }
            }
            if recording {
                traj.push(TrajectoryPoint {
                    t: steps as f64 * h,
                    x: x.clone(),
                    regime: k,
                });
            }
            Ok((
                PathSummary {
                    x,
                    regime: k,
                    switches,
                    occupation,
                    mean_cost: mean,
                },
                traj,
            ))
        })
        .collect();
    let mut paths = Vec::with_capacity(config.paths);
    let mut trajectories = Vec::new();
    for r in results {
        let (summary, traj) = r?;
        paths.push(summary);
        if !traj.is_empty() {
            trajectories.push(traj);
        }
    }
    Ok(TrajectoryBatch {
        config: config.clone(),
        start: start.clone(),
        steps,
        paths,
        trajectories,
    })
}
