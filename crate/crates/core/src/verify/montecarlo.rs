use serde::{Deserialize, Serialize};

use super::{random_policies, VerifyError};
use crate::discretize::GridSpec;
use crate::eigensolve::SemilinearSolution;
use crate::model::SwitchingModel;
use crate::simulate::{
    estimate_risk_sensitive_rate, ControlRule, CostEstimate, PathConfig, StartState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRate {
    pub estimate: CostEstimate,
    /// The rate compared against `lambda_star`: the increment rate when
    /// available, else the plain estimate.
    pub rate: f64,
    pub std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub lambda_star: f64,
    pub optimal: PolicyRate,
    pub random: Vec<PolicyRate>,
    /// Some estimate carries the heavy-tail flag.
    pub flagged: bool,
    pub passed: bool,
}

fn compared(e: &CostEstimate) -> (f64, f64) {
    match &e.increment {
        Some(inc) => (inc.value, inc.std_error),
        None => (e.value, e.std_error),
    }
}

/// Simulated risk-sensitive rates under the extracted policy and under
/// `policy_samples` random policies. The extracted policy's rate must match
/// `lambda_star` within three standard errors and no random policy may fall
/// more than three standard errors below it. Heavy-tailed estimates are not
/// judged; they set `flagged` instead.
///
/// The comparison uses the increment rate over `[T/2, T]`, which cancels the
/// start-up term that biases `(1/T) log E exp(int c)` by `O(1/T)`.
pub fn lambda_equals_optimal_value(
    model: &SwitchingModel,
    grid: &GridSpec,
    solution: &SemilinearSolution,
    policy_samples: usize,
    config: &PathConfig,
    start: &StartState,
    seed: u64,
) -> Result<ValueReport, VerifyError> {
    let lambda_star = solution.eigenpair.lambda;
    let run = |policy: &crate::discretize::MarkovPolicy| -> Result<(CostEstimate, f64, f64), VerifyError> {
        let rule = ControlRule::Table {
            grid: grid.clone(),
            policy: policy.clone(),
        };
        let e = estimate_risk_sensitive_rate(model, &rule, config, start, Some(lambda_star))?;
        let (rate, se) = compared(&e);
        Ok((e, rate, se))
    };
    let (estimate, rate, std_error) = run(&solution.policy)?;
    let optimal = PolicyRate {
        passed: estimate.heavy_tail || (rate - lambda_star).abs() <= 3.0 * std_error,
        estimate,
        rate,
        std_error,
    };
    let mut random = Vec::with_capacity(policy_samples);
    for policy in random_policies(model, grid, policy_samples, seed) {
        let (estimate, rate, std_error) = run(&policy)?;
        random.push(PolicyRate {
            passed: estimate.heavy_tail || rate >= lambda_star - 3.0 * std_error,
            estimate,
            rate,
            std_error,
        });
    }
    let flagged = optimal.estimate.heavy_tail || random.iter().any(|r| r.estimate.heavy_tail);
    let passed = optimal.passed && random.iter().all(|r| r.passed);
    Ok(ValueReport {
        lambda_star,
        optimal,
        random,
        flagged,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::eigensolve::{solve_semilinear, SolveOptions};
    use crate::model::{ou2, Ou2Params};

    #[test]
    fn constant_cost_matches_exactly() {
        let m = ou2(Ou2Params::default(), &[0.5, 1.0])
            .with_cost(Arc::new(|_x: &[f64], _k: usize, _u: &[f64]| 0.4));
        let g = GridSpec::new(3.0, 31, 1).unwrap();
        let sol = solve_semilinear(&m, &g, &SolveOptions::default()).unwrap();
        let cfg = PathConfig::new(0.01, 2.0, 1, 20);
        let r =
            lambda_equals_optimal_value(&m, &g, &sol, 2, &cfg, &StartState::new(vec![0.0], 0), 3)
                .unwrap();
        assert_eq!(r.optimal.estimate.value, 0.4);
        assert!(r
            .random
            .iter()
            .all(|p| p.estimate.value == 0.4 && p.std_error == 0.0));
        // Dirichlet box eigenvalue sits below the whole-space value 0.4
        assert!(r.lambda_star < 0.4);
    }
}
