//! Monte Carlo simulation of controlled switching diffusions.
//!
//! Paths use Euler-Maruyama for the continuous part and a categorical draw
//! with probabilities `h m_kj` for the regime. Every path owns a ChaCha8
//! stream selected by `(seed, family, path)`, and reductions run over path
//! index order, so results do not depend on the number of worker threads.

mod engine;
mod estimators;

use thiserror::Error;

pub use engine::{
    simulate_paths, ControlRule, PathConfig, PathSummary, RecordOptions, StartState,
    TrajectoryBatch, TrajectoryPoint,
};
pub use estimators::{
    estimate_risk_sensitive_rate, feynman_kac_annulus, mean_position_diagnostic, pairwise_sum,
    CostEstimate, FeynmanKacReport, FkEstimate, FkPoint, Functional, IncrementRate,
    MeanPositionReport, MIN_ESS, POSITION_SLOPE_MAX,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("step {step} too large: total switching rate {total_rate} at x = {x:?}, regime {regime} gives h*rate > 0.5")]
    StepTooLarge {
        x: Vec<f64>,
        regime: usize,
        total_rate: f64,
        step: f64,
    },
    #[error("invalid simulation setup: {0}")]
    InvalidConfig(String),
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{lq, ou2, Ou2Params, SwitchingModel};

    fn frozen(rho: f64) -> SwitchingModel {
        ou2(
            Ou2Params {
                rho,
                theta: [0.0, 0.0],
                sigma: [0.0, 0.0],
                q: [0.0, 0.0],
                control_cost: 0.0,
            },
            &[1.0],
        )
    }

    #[test]
    fn frozen_dynamics_stay_put() {
        let m = frozen(0.0).with_rates(Arc::new(|_x: &[f64], _u: &[f64], out: &mut [f64]| {
            out.fill(0.0)
        }));
        let cfg = PathConfig::new(0.01, 1.0, 3, 4);
        let b = simulate_paths(
            &m,
            &ControlRule::Constant(0),
            &cfg,
            &StartState::new(vec![0.7], 1),
            RecordOptions::default(),
        )
        .unwrap();
        for p in &b.paths {
            assert_eq!(p.x, vec![0.7]);
            assert_eq!(p.regime, 1);
            assert_eq!(p.switches, 0);
        }
    }

    #[test]
    fn switch_counts_are_poisson() {
        let rho = 2.0;
        let t = 5.0;
        let cfg = PathConfig::new(1e-3, t, 11, 4000);
        let b = simulate_paths(
            &frozen(rho),
            &ControlRule::Constant(0),
            &cfg,
            &StartState::new(vec![0.0], 0),
            RecordOptions::default(),
        )
        .unwrap();
        let counts: Vec<f64> = b.paths.iter().map(|p| p.switches as f64).collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (rho * t / n).sqrt();
        assert!((mean - rho * t).abs() < 4.0 * se, "{mean}");
        assert!((var / mean - 1.0).abs() < 0.1, "{var} vs {mean}");
        // symmetric two-state chain started in regime 0
        let expected = 0.5 + (1.0 - (-2.0 * rho * t).exp()) / (4.0 * rho * t);
        let occ: f64 = b.paths.iter().map(|p| p.occupation[0]).sum::<f64>() / (n * t);
        assert!((occ - expected).abs() < 0.01, "{occ} vs {expected}");
    }

    #[test]
    fn constant_cost_is_exact() {
        let m = frozen(1.0).with_cost(Arc::new(|_x: &[f64], _k: usize, _u: &[f64]| 0.3));
        let cfg = PathConfig::new(0.01, 2.0, 5, 50);
        let e = estimate_risk_sensitive_rate(
            &m,
            &ControlRule::Constant(0),
            &cfg,
            &StartState::new(vec![0.0], 0),
            None,
        )
        .unwrap();
        assert_eq!(e.value, 0.3);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.ess, 50.0);
        assert!(!e.unreliable());
    }

    #[test]
    fn standard_error_scales_with_paths() {
        let m = lq(0.1875, &[1.0]);
        let start = StartState::new(vec![0.0], 0);
        let rule = ControlRule::Constant(0);
        let a = estimate_risk_sensitive_rate(
            &m,
            &rule,
            &PathConfig::new(0.01, 2.0, 9, 2000),
            &start,
            None,
        )
        .unwrap();
        let b = estimate_risk_sensitive_rate(
            &m,
            &rule,
            &PathConfig::new(0.01, 2.0, 9, 8000),
            &start,
            None,
        )
        .unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn oversized_step_is_refused() {
        let cfg = PathConfig::new(0.5, 1.0, 1, 1);
        let err = simulate_paths(
            &frozen(2.0),
            &ControlRule::Constant(0),
            &cfg,
            &StartState::new(vec![0.0], 0),
            RecordOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::StepTooLarge { .. }));
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn trajectories_are_recorded() {
        let cfg = PathConfig::new(0.1, 1.0, 2, 3);
        let b = simulate_paths(
            &lq(0.1, &[1.0]),
            &ControlRule::Constant(0),
            &cfg,
            &StartState::new(vec![0.0], 0),
            RecordOptions { paths: 2, every: 5 },
        )
        .unwrap();
        assert_eq!(b.trajectories.len(), 2);
        assert_eq!(b.trajectories[0].len(), 3);
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out)
            .unwrap()
            .starts_with("path,t,x1,regime\n"));
    }

    #[test]
    fn mean_position_decay_regimes() {
        let cfg = PathConfig::new(0.05, 160.0, 4, 2000);
        let start = StartState::new(vec![0.0], 0);
        let horizons = [10.0, 40.0, 160.0];
        let rule = ControlRule::Constant(0);
        let brownian =
            mean_position_diagnostic(&lq(0.0, &[0.0]), &rule, &cfg, &start, &horizons).unwrap();
        assert!(brownian.passed, "{brownian:?}");
        assert!((brownian.slope + 0.5).abs() < 0.1, "{}", brownian.slope);
        let ou =
            mean_position_diagnostic(&lq(0.0, &[1.0]), &rule, &cfg, &start, &horizons).unwrap();
        assert!(ou.passed);
        assert!((ou.slope + 1.0).abs() < 0.1, "{}", ou.slope);
        let outward = lq(0.0, &[1.0]).with_drift(Arc::new(
            |_x: &[f64], _k: usize, _u: &[f64], out: &mut [f64]| out[0] = 1.0,
        ));
        let ballistic = mean_position_diagnostic(&outward, &rule, &cfg, &start, &horizons).unwrap();
        assert!(!ballistic.passed);
        assert!(ballistic.slope.abs() < 0.1, "{}", ballistic.slope);
    }
}
