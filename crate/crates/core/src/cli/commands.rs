use std::f64::consts::PI;
use std::fs;

use serde::Serialize;

use super::args::{
    CommonArgs, SimArgs, SimulateArgs, SolveArgs, SweepArgs, ValidateArgs, VerifyArgs,
};
use super::{
    resolve_model, CliError, GridConfig, Output, RunConfig, SimulationConfig, ValidateConfig,
    VerifyConfig,
};
use crate::discretize::GridSpec;
use crate::eigensolve::{
    domain_sweep, solve_semilinear, uniqueness_check, SemilinearSolution, SolveOptions, StopReason,
    UniquenessReport,
};
use crate::model::{
    builtin_certificate, check_lyapunov, validate_model_with, CertificateReport, CertificateStatus,
    SwitchingModel, ValidationOptions, ValidationReport,
};
use crate::simulate::{
    estimate_risk_sensitive_rate, feynman_kac_annulus, simulate_paths, ControlRule, CostEstimate,
    FeynmanKacReport, PathConfig, RecordOptions, StartState,
};
use crate::verify::{
    lambda_equals_optimal_value, random_policies, validate_near_monotone, verify_optimality,
    NearMonotoneValidation, OptimalityReport, ValueReport,
};

use super::Command;

pub(crate) fn dispatch(command: &Command) -> Result<(bool, RunConfig), CliError> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Validate(a) => validate(a),
    }
}

struct Setup {
    model: SwitchingModel,
    config: RunConfig,
}

fn setup(command: &str, common: &CommonArgs, radii: Vec<f64>) -> Result<Setup, CliError> {
    let (model_config, model) = resolve_model(&common.model)?;
    if !(common.tol > 0.0) || !(common.eig_tol > 0.0) {
        return Err(CliError::Usage("tolerances must be positive".into()));
    }
    let nodes_per_unit = common
        .nodes_per_unit
        .unwrap_or(if model.dim() == 1 { 100 } else { 8 });
    let solver = SolveOptions {
        tol: common.tol,
        eig_tol: common.eig_tol,
        ..SolveOptions::default()
    };
    fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    Ok(Setup {
        model,
        config: RunConfig {
            command: command.to_string(),
            model: model_config,
            grid: GridConfig {
                radii,
                nodes_per_unit,
            },
            solver,
            simulation: None,
            verify: None,
            validate: None,
            seed: common.seed,
        },
    })
}

fn grid(s: &Setup) -> Result<GridSpec, CliError> {
    let radius = *s.config.grid.radii.last().expect("one radius");
    Ok(GridSpec::from_density(
        radius,
        s.config.grid.nodes_per_unit,
        s.model.dim(),
    )?)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    lambda: f64,
    residual: f64,
    lower_bound: f64,
    upper_bound: f64,
    eigen_iterations: usize,
    policy_iterations: usize,
    trace: &'a [f64],
    stop: StopReason,
    policy_histogram: Vec<f64>,
    nodes_per_axis: usize,
    unknowns: usize,
}

fn summarize<'a>(
    model: &SwitchingModel,
    g: &GridSpec,
    sol: &'a SemilinearSolution,
) -> SolveSummary<'a> {
    SolveSummary {
        lambda: sol.eigenpair.lambda,
        residual: sol.eigenpair.residual,
        lower_bound: sol.eigenpair.lower_bound,
        upper_bound: sol.eigenpair.upper_bound,
        eigen_iterations: sol.eigenpair.iterations,
        policy_iterations: sol.policy_iterations(),
        trace: &sol.trace,
        stop: sol.stop,
        policy_histogram: sol.policy.histogram(model.num_controls()),
        nodes_per_axis: g.nodes_per_axis(),
        unknowns: sol.eigenpair.psi.len(),
    }
}

fn solve(a: &SolveArgs) -> Result<(bool, RunConfig), CliError> {
    let s = setup("solve", &a.common, vec![a.radius])?;
    let g = grid(&s)?;
    let sol = solve_semilinear(&s.model, &g, &s.config.solver)?;
    let out = Output {
        dir: &a.common.out,
        config: &s.config,
    };
    let summary = summarize(&s.model, &g, &sol);
    out.json("solve.json", true, &summary)?;
    let mut csv = Vec::new();
    sol.eigenpair
        .write_csv(&g, &mut csv)
        .map_err(|e| CliError::Io(e.to_string()))?;
    out.write("psi.csv", &csv)?;
    println!(
        "lambda = {:.10} ({} policy iterations, residual {:.2e}, histogram {:?})",
        summary.lambda, summary.policy_iterations, summary.residual, summary.policy_histogram
    );
    Ok((true, s.config))
}

fn sweep(a: &SweepArgs) -> Result<(bool, RunConfig), CliError> {
    if a.radii.is_empty() {
        return Err(CliError::Usage("--radii is empty".into()));
    }
    let s = setup("sweep", &a.common, a.radii.clone())?;
    let result = domain_sweep(
        &s.model,
        &a.radii,
        s.config.grid.nodes_per_unit,
        &s.config.solver,
    )?;
    let passed = result.red_flags.is_empty();
    Output {
        dir: &a.common.out,
        config: &s.config,
    }
    .json("sweep.json", passed, &result)?;
    for e in &result.entries {
        println!("R = {:>8} lambda = {:.10}", e.radius, e.lambda);
    }
    if let Some(x) = result.extrapolated {
        println!("extrapolated lambda = {x:.10}");
    }
    if !passed {
        println!(
            "eigenvalue decreased after radius index {:?}",
            result.red_flags
        );
    }
    Ok((passed, s.config))
}

fn simulation_config(
    model: &SwitchingModel,
    sim: &SimArgs,
    policy: &str,
) -> Result<SimulationConfig, CliError> {
    let start = sim.start.clone().unwrap_or_else(|| vec![0.0; model.dim()]);
    if start.len() != model.dim() {
        return Err(CliError::Usage(format!(
            "--start has {} coordinates, the model has dimension {}",
            start.len(),
            model.dim()
        )));
    }
    Ok(SimulationConfig {
        step: sim.step,
        horizon: sim.horizon,
        paths: sim.paths,
        start,
        regime: sim.regime,
        policy: policy.to_string(),
        record: None,
    })
}

#[derive(Serialize)]
struct SimulateResult {
    lambda_ref: Option<f64>,
    estimate: CostEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_switches: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    occupation: Option<Vec<f64>>,
}

fn simulate(a: &SimulateArgs) -> Result<(bool, RunConfig), CliError> {
    let mut s = setup("simulate", &a.common, vec![a.radius])?;
    let mut sim = simulation_config(&s.model, &a.sim, &a.policy)?;
    if a.record > 0 {
        sim.record = Some((a.record, a.record_every));
    }
    s.config.simulation = Some(sim.clone());
    let (rule, lambda_ref) = match a.policy.as_str() {
        "optimal" => {
            let g = grid(&s)?;
            let sol = solve_semilinear(&s.model, &g, &s.config.solver)?;
            let lambda = sol.eigenpair.lambda;
            (
                ControlRule::Table {
                    grid: g,
                    policy: sol.policy,
                },
                Some(lambda),
            )
        }
        other => {
            let u = other
                .strip_prefix("constant:")
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "--policy must be 'optimal' or 'constant:INDEX', got '{other}'"
                    ))
                })?;
            (ControlRule::Constant(u), None)
        }
    };
    let config = PathConfig::new(sim.step, sim.horizon, s.config.seed, sim.paths);
    let start = StartState::new(sim.start.clone(), sim.regime);
    let estimate = estimate_risk_sensitive_rate(&s.model, &rule, &config, &start, lambda_ref)?;
    let out = Output {
        dir: &a.common.out,
        config: &s.config,
    };
    let mut result = SimulateResult {
        lambda_ref,
        estimate,
        mean_switches: None,
        occupation: None,
    };
    if a.record > 0 {
        let batch = simulate_paths(
            &s.model,
            &rule,
            &config,
            &start,
            RecordOptions {
                paths: a.record,
                every: a.record_every.max(1),
            },
        )?;
        let n = batch.paths.len() as f64;
        result.mean_switches = Some(batch.paths.iter().map(|p| p.switches as f64).sum::<f64>() / n);
        let horizon = batch.steps as f64 * sim.step;
        result.occupation = Some(
            (0..s.model.num_regimes())
                .map(|k| batch.paths.iter().map(|p| p.occupation[k]).sum::<f64>() / (n * horizon))
                .collect(),
        );
        let mut csv = Vec::new();
        batch
            .write_csv(&mut csv)
            .map_err(|e| CliError::Io(e.to_string()))?;
        out.write("trajectories.csv", &csv)?;
    }
    out.json("simulate.json", true, &result)?;
    let e = &result.estimate;
    println!(
        "risk-sensitive rate = {:.6} +- {:.6} (ess {:.1}{}{})",
        e.value,
        e.std_error,
        e.ess,
        if e.heavy_tail { ", heavy-tailed" } else { "" },
        if e.horizon_bias {
            ", horizon-biased"
        } else {
            ""
        },
    );
    if let Some(inc) = &e.increment {
        println!(
            "increment rate over [{}, {}] = {:.6} +- {:.6}",
            inc.from, inc.to, inc.value, inc.std_error
        );
    }
    if let Some(l) = lambda_ref {
        println!("principal eigenvalue = {l:.6}");
    }
    Ok((true, s.config))
}

/// Five start points spread over radii `[2 r, 4 r]`, cycling through the
/// regimes.
fn annulus_starts(model: &SwitchingModel, r_inner: f64, radius: f64) -> Vec<StartState> {
    let d = model.dim();
    (0..5)
        .map(|i| {
            let rho = (2.0 * r_inner + i as f64 * 0.5 * r_inner).min(0.9 * radius);
            let mut x = vec![0.0; d];
            if d == 1 {
                x[0] = if i % 2 == 0 { rho } else { -rho };
            } else {
                let t = 2.0 * PI * i as f64 / 5.0;
                x[0] = rho * t.cos();
                x[1] = rho * t.sin();
            }
            StartState::new(x, i % model.num_regimes())
        })
        .collect()
}

#[derive(Serialize)]
struct Check<T: Serialize> {
    passed: bool,
    /// Inconclusive or heavy-tailed; not counted as a failure.
    flagged: bool,
    report: T,
}

#[derive(Serialize)]
struct VerifyReport {
    solution: SolveSummaryOwned,
    validation: Check<ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lyapunov: Option<Check<CertificateReport>>,
    optimality: Check<OptimalityReport>,
    uniqueness: Check<UniquenessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<Check<ValueReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feynman_kac: Option<Check<FeynmanKacReport>>,
}

#[derive(Serialize)]
struct SolveSummaryOwned {
    lambda: f64,
    residual: f64,
    policy_iterations: usize,
    policy_histogram: Vec<f64>,
}

fn verify(a: &VerifyArgs) -> Result<(bool, RunConfig), CliError> {
    let mut s = setup("verify", &a.common, vec![a.radius])?;
    let r_inner = a.r_inner.unwrap_or(a.radius / 10.0);
    s.config.verify = Some(VerifyConfig {
        policy_samples: a.policy_samples,
        monte_carlo: !a.no_sim,
        fk_paths: a.fk_paths,
        fk_step: a.fk_step,
        r_inner,
        lambda_offset: a.lambda_offset,
    });
    if !a.no_sim {
        s.config.simulation = Some(simulation_config(&s.model, &a.sim, "optimal")?);
    }
    let g = grid(&s)?;
    let seed = s.config.seed;
    let model = &s.model;
    let opts = s.config.solver;

    let validation = validate_model_with(model, &ValidationOptions::new(a.radius, 2000))?;
    let validation = Check {
        passed: validation.all_passed(),
        flagged: false,
        report: validation,
    };
    let lyapunov = s
        .config
        .model
        .builtin
        .as_ref()
        .and_then(|b| builtin_certificate(&b.name))
        .map(|cert| {
            let report = check_lyapunov(model, &cert, &g);
            Check {
                passed: report.status != CertificateStatus::Fail,
                flagged: report.status == CertificateStatus::Inconclusive,
                report,
            }
        });

    let sol = solve_semilinear(model, &g, &opts)?;
    let alternatives = random_policies(model, &g, a.policy_samples, seed);
    let tol = 1e-10 * (1.0 + sol.eigenpair.lambda.abs());
    let optimality = verify_optimality(model, &g, &sol, &alternatives, tol, &opts)?;
    let optimality = Check {
        passed: optimality.passed,
        flagged: false,
        report: optimality,
    };
    let uniqueness = uniqueness_check(model, &g, 3, seed, &opts);
    let uniqueness = Check {
        passed: uniqueness.passed,
        flagged: false,
        report: uniqueness,
    };

    let (mut value, mut feynman_kac) = (None, None);
    if let Some(sim) = &s.config.simulation {
        let config = PathConfig::new(sim.step, sim.horizon, seed, sim.paths);
        let start = StartState::new(sim.start.clone(), sim.regime);
        let v =
            lambda_equals_optimal_value(model, &g, &sol, a.policy_samples, &config, &start, seed)?;
        value = Some(Check {
            passed: v.passed,
            flagged: v.flagged,
            report: v,
        });
        let rule = ControlRule::Table {
            grid: g.clone(),
            policy: sol.policy.clone(),
        };
        let starts = annulus_starts(model, r_inner, a.radius);
        let fk_config = PathConfig::new(a.fk_step, 1.0, seed, a.fk_paths);
        let lambda = sol.eigenpair.lambda + a.lambda_offset;
        let fk = feynman_kac_annulus(
            model,
            &rule,
            &sol.eigenpair,
            &g,
            r_inner,
            &starts,
            &fk_config,
            &[lambda],
        )?;
        feynman_kac = Some(Check {
            passed: fk.passed[0],
            flagged: false,
            report: fk,
        });
    }

    let report = VerifyReport {
        solution: SolveSummaryOwned {
            lambda: sol.eigenpair.lambda,
            residual: sol.eigenpair.residual,
            policy_iterations: sol.policy_iterations(),
            policy_histogram: sol.policy.histogram(model.num_controls()),
        },
        validation,
        lyapunov,
        optimality,
        uniqueness,
        value,
        feynman_kac,
    };
    let mut lines = vec![
        (
            "validation",
            report.validation.passed,
            report.validation.flagged,
        ),
        (
            "optimality",
            report.optimality.passed,
            report.optimality.flagged,
        ),
        (
            "uniqueness",
            report.uniqueness.passed,
            report.uniqueness.flagged,
        ),
    ];
    if let Some(c) = &report.lyapunov {
        lines.push(("lyapunov", c.passed, c.flagged));
    }
    if let Some(c) = &report.value {
        lines.push(("value", c.passed, c.flagged));
    }
    if let Some(c) = &report.feynman_kac {
        lines.push(("feynman_kac", c.passed, c.flagged));
    }
    let passed = lines.iter().all(|&(_, p, f)| p || f);
    Output {
        dir: &a.common.out,
        config: &s.config,
    }
    .json("verify.json", passed, &report)?;
    println!("lambda = {:.10}", report.solution.lambda);
    for (name, p, f) in lines {
        let verdict = match (p, f) {
            (_, true) => "FLAGGED",
            (true, false) => "PASS",
            (false, false) => "FAIL",
        };
        println!("{name:<12} {verdict}");
    }
    Ok((passed, s.config))
}

#[derive(Serialize)]
struct ValidateResult {
    standing: ValidationReport,
    bounded_coefficients: NearMonotoneValidation,
}

fn validate(a: &ValidateArgs) -> Result<(bool, RunConfig), CliError> {
    let mut s = setup("validate", &a.common, vec![a.box_radius])?;
    s.config.validate = Some(ValidateConfig {
        box_radius: a.box_radius,
        samples: a.samples,
    });
    let mut options = ValidationOptions::new(a.box_radius, a.samples);
    options.seed = s.config.seed;
    let standing = validate_model_with(&s.model, &options)?;
    let bounded = validate_near_monotone(&s.model, a.box_radius, a.samples)?;
    let passed = standing.all_passed();
    for c in standing.checks.iter().chain(&bounded.checks) {
        println!(
            "{:<5} {} (statistic {:e})",
            c.id,
            if c.passed { "PASS" } else { "FAIL" },
            c.statistic
        );
    }
    Output {
        dir: &a.common.out,
        config: &s.config,
    }
    .json(
        "validate.json",
        passed,
        &ValidateResult {
            standing,
            bounded_coefficients: bounded,
        },
    )?;
    Ok((passed, s.config))
}
