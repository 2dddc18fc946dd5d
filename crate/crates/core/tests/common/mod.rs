//! Random small instances and a dense eigen-oracle shared by the
//! integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use ergoswitch::discretize::{assemble, DiscreteOperator, GridSpec, MarkovPolicy};
use ergoswitch::eigensolve::principal_eigenpair;
use ergoswitch::model::SwitchingModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Shape {
    pub dim: usize,
    pub regimes: usize,
    pub controls: usize,
}

pub struct Instance {
    pub model: SwitchingModel,
    pub grid: GridSpec,
    pub label: String,
}

/// Random model with OU-type drift, constant (possibly correlated) noise,
/// positive state-dependent switching rates and quadratic cost, on a grid
/// with at most `max_unknowns` unknowns.
///
/// The 2D noise is kept diagonally dominant so the monotone stencil applies.
pub fn random_instance(rng: &mut ChaCha8Rng, shape: &Shape, max_unknowns: usize) -> Instance {
    let Shape {
        dim: d,
        regimes: n,
        controls: nc,
    } = *shape;
    let controls: Vec<Vec<f64>> = (0..nc).map(|_| vec![rng.random_range(0.5..2.0)]).collect();
    let theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.5)).collect();
    let mu: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-0.3..0.3)).collect())
        .collect();
    let sigma: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let s1: f64 = rng.random_range(0.7..1.3);
            if d == 1 {
                vec![s1]
            } else {
                let s2: f64 = rng.random_range(0.7..1.3);
                let t = rng.random_range(-0.3..0.3) * s1.min(s2);
                vec![s1, t, 0.0, s2]
            }
        })
        .collect();
    let base: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.2..1.5)).collect();
    let wobble = rng.random_range(0.0..0.5);
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.3)).collect();
    let level: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
    let control_cost = rng.random_range(0.0..0.2);

    let model = SwitchingModel::new(
        "random",
        d,
        n,
        controls,
        Arc::new(move |x: &[f64], k: usize, u: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = -u[0] * theta[k] * x[i] + mu[k][i];
            }
        }),
        Arc::new(move |_x: &[f64], k: usize, out: &mut [f64]| out.copy_from_slice(&sigma[k])),
        Arc::new(move |x: &[f64], u: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut total = 0.0;
                for j in 0..n {
                    if i != j {
                        let m = base[i * n + j] * (1.0 + wobble * x[0].sin()) * (0.5 + 0.5 * u[0]);
                        out[i * n + j] = m;
                        total += m;
                    }
                }
                out[i * n + i] = -total;
            }
        }),
        Arc::new(move |x: &[f64], k: usize, u: &[f64]| {
            q[k] * x.iter().map(|v| v * v).sum::<f64>() + level[k] + control_cost * u[0]
        }),
    )
    .expect("random model shape");

    let per_axis_max = ((max_unknowns / n) as f64).powf(1.0 / d as f64).floor() as usize;
    let interior = {
        let hi = per_axis_max.min(if d == 1 { 61 } else { 13 });
        let lo = if d == 1 { 9 } else { 5 }.min(hi);
        let mut m = rng.random_range(lo..=hi);
        if m % 2 == 0 {
            m -= 1;
        }
        m
    };
    let radius = rng.random_range(1.5..3.5);
    let grid = GridSpec::new(radius, interior + 2, d).expect("grid");
    Instance {
        model,
        grid,
        label: format!("d={d} N={n} controls={nc} R={radius:.3} interior={interior}"),
    }
}

/// Two copies of one random regime, coupled by symmetric switching.
pub fn twin_regimes(seed: u64, dim: usize) -> SwitchingModel {
    let mut r = rng(seed);
    let theta: f64 = r.random_range(0.3..1.5);
    let mu: f64 = r.random_range(-0.3..0.3);
    let s: f64 = r.random_range(0.7..1.3);
    let rate: f64 = r.random_range(0.2..1.5);
    let q: f64 = r.random_range(0.05..0.3);
    SwitchingModel::new(
        "twin",
        dim,
        2,
        vec![vec![0.7], vec![1.4]],
        Arc::new(move |x: &[f64], _k: usize, u: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = -u[0] * theta * x[i] + mu;
            }
        }),
        Arc::new(move |_x: &[f64], _k: usize, out: &mut [f64]| {
            out.fill(0.0);
            let d = (out.len() as f64).sqrt() as usize;
            for i in 0..d {
                out[i * d + i] = s;
            }
        }),
        Arc::new(move |x: &[f64], u: &[f64], out: &mut [f64]| {
            let m = rate * (1.0 + 0.3 * x[0].cos()) * u[0];
            out.copy_from_slice(&[-m, m, m, -m]);
        }),
        Arc::new(move |x: &[f64], _k: usize, u: &[f64]| {
            q * x.iter().map(|v| v * v).sum::<f64>() + 0.1 * u[0]
        }),
    )
    .unwrap()
}

/// Rightmost eigenvalue from the full dense spectrum and its eigenvector as
/// the null vector of `A - lambda I` (smallest singular value), normalized
/// so `min_k psi_k(origin) = 1`.
pub fn dense_principal(op: &DiscreteOperator, origin_node: usize) -> (f64, Vec<f64>) {
    let n = op.size();
    let a = DMatrix::from_row_slice(n, n, &op.to_dense());
    let eig = a.clone().complex_eigenvalues();
    let top = eig
        .iter()
        .copied()
        .max_by(|x, y| x.re.partial_cmp(&y.re).expect("finite eigenvalues"))
        .expect("non-empty spectrum");
    assert!(
        top.im.abs() < 1e-9,
        "rightmost eigenvalue is complex: {top}"
    );
    let lambda = top.re;
    let shifted = &a - DMatrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .unwrap();
    let mut v: DVector<f64> = v_t.row(idx).transpose();
    if v.sum() < 0.0 {
        v = -v;
    }
    let regimes = op.num_regimes();
    let scale = (0..regimes)
        .map(|k| v[origin_node * regimes + k])
        .fold(f64::INFINITY, f64::min);
    (lambda, v.iter().map(|x| x / scale).collect())
}

/// `max |a - b| / max |a|`.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Solves random Markov-policy operators on every (dimension, regimes)
/// shape, `draws` times each, with both the sparse solver and the dense
/// oracle. Returns `(label, lambda error, psi distance)` per instance.
pub fn dense_oracle_errors(seed: u64, draws: usize) -> Vec<(String, f64, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for dim in 1..=2 {
        for regimes in 1..=3 {
            for draw in 0..draws {
                let shape = Shape {
                    dim,
                    regimes,
                    controls: 1 + draw % 3,
                };
                let inst = random_instance(&mut r, &shape, 200);
                let m = inst.grid.num_interior();
                let nc = inst.model.num_controls();
                let table: Vec<usize> = (0..m * regimes).map(|_| r.random_range(0..nc)).collect();
                let policy = MarkovPolicy::from_fn(m, regimes, |p, k| table[p * regimes + k]);
                let op = assemble(&inst.model, &inst.grid, &policy).expect("assembles");
                assert!(op.size() <= 200, "{}", inst.label);
                let ep = principal_eigenpair(&op, 1e-12, 20_000).expect("principal eigenpair");
                let (lambda, psi) = dense_principal(&op, inst.grid.interior_origin());
                out.push((
                    inst.label,
                    (ep.lambda - lambda).abs(),
                    sup_distance(&psi, &ep.psi),
                ));
            }
        }
    }
    out
}
