mod common;

use common::{random_instance, rng, twin_regimes, Instance, Shape};
use ergoswitch::discretize::GridSpec;
use ergoswitch::eigensolve::{
    potential_monotonicity_check, solve_semilinear, uniqueness_check, SolveOptions,
};
use proptest::prelude::*;

fn instance(seed: u64, dim: usize, regimes: usize, controls: usize) -> Instance {
    random_instance(
        &mut rng(seed),
        &Shape {
            dim,
            regimes,
            controls,
        },
        200,
    )
}

fn shapes() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..=2, 1usize..=3, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn cost_shift_moves_lambda_by_the_shift(
        (seed, d, n, nc) in shapes(),
        kappa in -2.0f64..2.0,
    ) {
        let inst = instance(seed, d, n, nc);
        let opts = SolveOptions::default();
        let base = solve_semilinear(&inst.model, &inst.grid, &opts).unwrap();
        let shifted = solve_semilinear(&inst.model.with_cost_shift(kappa), &inst.grid, &opts).unwrap();
        let err = (shifted.eigenpair.lambda - base.eigenpair.lambda - kappa).abs();
        prop_assert!(err <= 1e-10, "{}: error {err:e}", inst.label);
    }

    #[test]
    fn local_cost_bump_strictly_raises_lambda(
        (seed, d, n, nc) in shapes(),
        height in 0.05f64..1.0,
    ) {
        let inst = instance(seed, d, n, nc);
        let radius = inst.grid.radius() / 3.0;
        let center = vec![0.0; d];
        let report = potential_monotonicity_check(
            &inst.model, &inst.grid, &center, radius, height, &SolveOptions::default(),
        ).unwrap();
        prop_assert!(report.strictly_increased, "{}: {report:?}", inst.label);
        prop_assert!(report.below_global_shift, "{}: {report:?}", inst.label);
    }

    #[test]
    fn larger_box_strictly_raises_lambda((seed, d, n, nc) in shapes()) {
        let inst = instance(seed, d, n, nc);
        let npu = if d == 1 { 10 } else { 4 };
        let opts = SolveOptions::default();
        let mut last = f64::NEG_INFINITY;
        for radius in [1.5, 2.0, 2.5] {
            let g = GridSpec::from_density(radius, npu, d).unwrap();
            let lambda = solve_semilinear(&inst.model, &g, &opts).unwrap().eigenpair.lambda;
            prop_assert!(lambda > last, "{}: R={radius} lambda {lambda} after {last}", inst.label);
            last = lambda;
        }
    }

    #[test]
    fn identical_regimes_share_one_eigenfunction(seed in any::<u64>(), d in 1usize..=2) {
        let model = twin_regimes(seed, d);
        let g = if d == 1 { GridSpec::new(3.0, 61, 1) } else { GridSpec::new(2.5, 15, 2) }.unwrap();
        let sol = solve_semilinear(&model, &g, &SolveOptions::default()).unwrap();
        let ep = &sol.eigenpair;
        let scale = ep.psi.iter().fold(0.0f64, |m, v| m.max(*v));
        for p in 0..g.num_interior() {
            let gap = (ep.value(p, 0) - ep.value(p, 1)).abs() / scale;
            prop_assert!(gap <= 1e-10, "node {p}: gap {gap:e}");
            prop_assert_eq!(sol.policy.get(p, 0), sol.policy.get(p, 1));
        }
    }

    #[test]
    fn policy_iteration_trace_never_increases((seed, d, n, nc) in shapes()) {
        let inst = instance(seed, d, n, nc);
        let sol = solve_semilinear(&inst.model, &inst.grid, &SolveOptions::default()).unwrap();
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{}: trace {:?}", inst.label, sol.trace);
        }
    }

    #[test]
    fn random_starts_reach_the_same_eigenpair((seed, d, n, nc) in shapes()) {
        let inst = instance(seed, d, n, nc);
        let report = uniqueness_check(&inst.model, &inst.grid, 3, seed, &SolveOptions::default());
        prop_assert!(report.passed, "{}: {report:?}", inst.label);
    }
}
