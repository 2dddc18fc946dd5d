//! Monotone finite-difference discretization of the coupled linear operator
//!
//! ```text
//! (A^v f)_k(x) = trace(a_k(x) D^2 f_k(x)) + b_k(x, v) . grad f_k(x)
//!              + c_k(x, v) f_k(x) + sum_j m_kj(x, v) f_j(x)
//! ```
//!
//! on the interior nodes of a [`GridSpec`] with zero Dirichlet data.
//!
//! - Second derivatives `a_ii f_xixi` use the three-point central stencil.
//! - Mixed terms `2 a_ij f_xixj` use the seven-point stencil oriented by
//!   the sign of `a_ij`, which keeps every neighbour weight nonnegative
//!   as long as `a_ii >= sum_{j != i} |a_ij|`.
//! - Drift is upwinded: forward difference where `b_i >= 0`, backward
//!   otherwise.
//! - Boundary neighbours are dropped from the row, which imposes `f = 0`
//!   on the boundary.
//!
//! The result is a Metzler matrix. A node where some spatial weight would
//! be negative aborts assembly with [`DiscretizeError::MonotonicityViolation`]
//! instead of clamping.

mod grid;
mod operator;

use thiserror::Error;

use crate::model::SwitchingModel;

pub use grid::GridSpec;
pub use operator::{DiscreteOperator, MarkovPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscretizeError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("model dimension {model} does not match grid dimension {grid}")]
    DimensionMismatch { model: usize, grid: usize },
    #[error("policy has shape {got:?}, expected (nodes, regimes) = {expected:?}")]
    PolicyShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("policy entry at node {node}, regime {regime} is control {control}, but only {num_controls} controls exist")]
    PolicyControl {
        node: usize,
        regime: usize,
        control: usize,
        num_controls: usize,
    },
    #[error("stencil at x = {x:?}, regime {regime}, control {control} has negative weight {weight:e}; refine the grid or rotate coordinates")]
    MonotonicityViolation {
        x: Vec<f64>,
        regime: usize,
        control: usize,
        weight: f64,
    },
    #[error("negative switching rate {rate:e} from regime {from} to {to} at x = {x:?}")]
    NegativeRate {
        x: Vec<f64>,
        from: usize,
        to: usize,
        rate: f64,
    },
}

/// Builds single rows of `A^u` for arbitrary controls. Shared by assembly and
/// the minimizing selector so both see exactly the same discrete operator.
pub(crate) struct RowBuilder<'a> {
    model: &'a SwitchingModel,
    grid: &'a GridSpec,
    interior: Vec<usize>,
    x: Vec<f64>,
    a: Vec<f64>,
    sigma: Vec<f64>,
    b: Vec<f64>,
    rates: Vec<f64>,
    /// Spatial weights keyed by grid-index offset.
    spatial: Vec<(isize, f64)>,
    /// Finished row, `(unknown, value)` sorted by unknown.
    pub(crate) entries: Vec<(usize, f64)>,
}

impl<'a> RowBuilder<'a> {
    pub(crate) fn new(
        model: &'a SwitchingModel,
        grid: &'a GridSpec,
    ) -> Result<Self, DiscretizeError> {
        if model.dim() != grid.dim() {
            return Err(DiscretizeError::DimensionMismatch {
                model: model.dim(),
                grid: grid.dim(),
            });
        }
        let d = grid.dim();
        let n = model.num_regimes();
        Ok(Self {
            model,
            grid,
            interior: grid.interior_nodes(),
            x: vec![0.0; d],
            a: vec![0.0; d * d],
            sigma: vec![0.0; d * d],
            b: vec![0.0; d],
            rates: vec![0.0; n * n],
            spatial: Vec::with_capacity(2 * d * d + 1),
            entries: Vec::with_capacity(2 * d * d + n + 1),
        })
    }

    pub(crate) fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Fills `entries` with row `(node, regime)` of `A^control`.
    pub(crate) fn build(
        &mut self,
        node: usize,
        regime: usize,
        control: usize,
    ) -> Result<(), DiscretizeError> {
        let grid = self.grid;
        let model = self.model;
        let d = grid.dim();
        let n = model.num_regimes();
        let h = grid.spacing();
        let h2 = h * h;
        let g = self.interior[node];
        grid.coordinates(g, &mut self.x);
        model.covariance(&self.x, regime, &mut self.sigma, &mut self.a);
        model.drift(&self.x, regime, control, &mut self.b);

        let mut center = 0.0;
        self.spatial.clear();
        for i in 0..d {
            let si = grid.stride(i) as isize;
            let aii = self.a[i * d + i];
            let mut w = aii / h2;
            for j in 0..d {
                if j != i {
                    w -= 0.5 * (self.a[i * d + j] + self.a[j * d + i]).abs() / h2;
                }
            }
            center -= 2.0 * aii / h2;
            let bi = self.b[i];
            let (mut wp, mut wm) = (w, w);
            if bi >= 0.0 {
                wp += bi / h;
            } else {
                wm -= bi / h;
            }
            center -= bi.abs() / h;
            self.spatial.push((si, wp));
            self.spatial.push((-si, wm));
            for j in (i + 1)..d {
                let sj = grid.stride(j) as isize;
                let aij = 0.5 * (self.a[i * d + j] + self.a[j * d + i]);
                let w = aij.abs() / h2;
                center += 2.0 * w;
                if aij >= 0.0 {
                    self.spatial.push((si + sj, w));
                    self.spatial.push((-si - sj, w));
                } else {
                    self.spatial.push((si - sj, w));
                    self.spatial.push((-si + sj, w));
                }
            }
        }

        let scale = self
            .spatial
            .iter()
            .map(|&(_, w)| w.abs())
            .fold(0.0, f64::max);
        for (_, w) in self.spatial.iter_mut() {
            if *w < 0.0 {
                // Weights that vanish analytically can come out as -1 ulp.
                if *w >= -1e-12 * scale {
                    *w = 0.0;
                } else {
                    return Err(DiscretizeError::MonotonicityViolation {
                        x: self.x.clone(),
                        regime,
                        control,
                        weight: *w,
                    });
                }
            }
        }

        model.rates(&self.x, control, &mut self.rates);
        let row_rates = &self.rates[regime * n..(regime + 1) * n];
        center += model.cost(&self.x, regime, control) + row_rates[regime];

        self.entries.clear();
        self.entries.push((node * n + regime, center));
        for &(off, w) in &self.spatial {
            if w == 0.0 {
                continue;
            }
            let nb = (g as isize + off) as usize;
            if let Some(p) = grid.interior_position(nb) {
                self.entries.push((p * n + regime, w));
            }
        }
        for (j, &m) in row_rates.iter().enumerate() {
            if j == regime {
                continue;
            }
            if m < 0.0 {
                return Err(DiscretizeError::NegativeRate {
                    x: self.x.clone(),
                    from: regime,
                    to: j,
                    rate: m,
                });
            }
            if m > 0.0 {
                self.entries.push((node * n + j, m));
            }
        }
        self.entries.sort_by_key(|&(c, _)| c);
        let mut w = 0;
        for r in 0..self.entries.len() {
            if w > 0 && self.entries[w - 1].0 == self.entries[r].0 {
                self.entries[w - 1].1 += self.entries[r].1;
            } else {
                self.entries[w] = self.entries[r];
                w += 1;
            }
        }
        self.entries.truncate(w);
        Ok(())
    }
}

/// Assembles `A^v` for the Markov policy `v`.
pub fn assemble(
    model: &SwitchingModel,
    grid: &GridSpec,
    policy: &MarkovPolicy,
) -> Result<DiscreteOperator, DiscretizeError> {
    let n = model.num_regimes();
    let mut rb = RowBuilder::new(model, grid)?;
    let m = rb.interior().len();
    policy.check(m, n, model.num_controls())?;

    let mut row_ptr = Vec::with_capacity(m * n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for p in 0..m {
        for k in 0..n {
            rb.build(p, k, policy.get(p, k))?;
            for &(c, v) in &rb.entries {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
    }
    let interior = std::mem::take(&mut rb.interior);
    Ok(DiscreteOperator::from_rows(
        grid.clone(),
        n,
        interior,
        row_ptr,
        col_idx,
        values,
    ))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{bounded2d, lq, ou2, Bounded2dParams, Ou2Params};

    fn scalar_model(
        a: f64,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c: f64,
    ) -> SwitchingModel {
        SwitchingModel::new(
            "test",
            1,
            1,
            vec![vec![0.0]],
            Arc::new(move |x: &[f64], _k: usize, _u: &[f64], out: &mut [f64]| out[0] = drift(x[0])),
            Arc::new(move |_x: &[f64], _k: usize, out: &mut [f64]| out[0] = (2.0 * a).sqrt()),
            Arc::new(|_x: &[f64], _u: &[f64], out: &mut [f64]| out[0] = 0.0),
            Arc::new(move |_x: &[f64], _k: usize, _u: &[f64]| c),
        )
        .unwrap()
    }

    #[test]
    fn laplacian_on_smallest_grid() {
        let m = scalar_model(1.0, |_| 0.0, 0.0);
        let g = GridSpec::new(1.0, 3, 1).unwrap();
        let op = assemble(&m, &g, &MarkovPolicy::constant(1, 1, 0)).unwrap();
        assert_eq!(op.size(), 1);
        assert!((op.get(0, 0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn drift_is_upwinded() {
        let m = scalar_model(0.5, |x| -x, 0.0);
        let g = GridSpec::new(2.0, 9, 1).unwrap();
        let op = assemble(&m, &g, &MarkovPolicy::constant(7, 1, 0)).unwrap();
        // grid node 6 sits at x = 1, h = 0.5, b = -1 < 0
        let p = g.interior_position(6).unwrap();
        assert_eq!(g.point(6), vec![1.0]);
        let diff = 0.5 / 0.25;
        assert!((op.get(p, p - 1) - (diff + 2.0)).abs() < 1e-12);
        assert!((op.get(p, p + 1) - diff).abs() < 1e-12);
        assert!((op.get(p, p) - (-2.0 * diff - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_blocks_couple_through_rates() {
        let p = Ou2Params {
            rho: 0.7,
            theta: [1.0, 1.0],
            sigma: [1.0, 1.0],
            q: [0.2, 0.2],
            control_cost: 0.0,
        };
        let m = ou2(p, &[1.0]);
        let g = GridSpec::new(2.0, 9, 1).unwrap();
        let single =
            lq(0.2, &[1.0]).with_diffusion(Arc::new(|_x: &[f64], _k: usize, out: &mut [f64]| {
                out[0] = 1.0
            }));
        let pol1 = MarkovPolicy::constant(7, 1, 0);
        let a = assemble(&single, &g, &pol1).unwrap();
        let op = assemble(&m, &g, &MarkovPolicy::constant(7, 2, 0)).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let aij = a.get(i, j);
                let shift = if i == j { 0.7 } else { 0.0 };
                for k in 0..2 {
                    assert!((op.get(op.index(i, k), op.index(j, k)) - (aij - shift)).abs() < 1e-12);
                }
                let cross = if i == j { 0.7 } else { 0.0 };
                assert_eq!(op.get(op.index(i, 0), op.index(j, 1)), cross);
            }
        }
    }

    #[test]
    fn metzler_and_row_sums_in_two_dimensions() {
        let m = bounded2d(Bounded2dParams::default(), &[1.0, 1.5]);
        let g = GridSpec::new(2.0, 9, 2).unwrap();
        let nodes = g.num_interior();
        let pol = MarkovPolicy::from_fn(nodes, 2, |p, k| (p + k) % 2);
        let op = assemble(&m, &g, &pol).unwrap();
        assert!(op.is_metzler());
        assert!(op.is_irreducible());
        let ones = vec![1.0; op.size()];
        let mut y = vec![0.0; op.size()];
        op.matvec(&ones, &mut y);
        let mut mi = [0usize; 2];
        for (p, &gi) in op.interior_nodes().iter().enumerate() {
            g.multi_index(gi, &mut mi);
            if mi.iter().any(|&i| i <= 1 || i >= 7) {
                continue;
            }
            let x = g.point(gi);
            for k in 0..2 {
                let c = m.cost(&x, k, pol.get(p, k));
                assert!((y[op.index(p, k)] - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn strong_anisotropy_is_refused() {
        let m = bounded2d(Bounded2dParams::default(), &[1.0]).with_diffusion(Arc::new(
            |_x: &[f64], _k: usize, out: &mut [f64]| out.copy_from_slice(&[1.0, 1.0, 0.0, 0.2]),
        ));
        let g = GridSpec::new(1.0, 5, 2).unwrap();
        let err = assemble(&m, &g, &MarkovPolicy::constant(9, 2, 0)).unwrap_err();
        assert!(matches!(err, DiscretizeError::MonotonicityViolation { .. }));
    }

    #[test]
    fn cost_shift_adds_identity() {
        let m = ou2(Ou2Params::default(), &[0.5, 1.0]);
        let g = GridSpec::new(3.0, 13, 1).unwrap();
        let pol = MarkovPolicy::from_fn(11, 2, |p, _| p % 2);
        let a = assemble(&m, &g, &pol).unwrap();
        let b = assemble(&m.with_cost_shift(0.3), &g, &pol).unwrap();
        let da = a.to_dense();
        let db = b.to_dense();
        let n = a.size();
        for i in 0..n {
            for j in 0..n {
                let want = da[i * n + j] + if i == j { 0.3 } else { 0.0 };
                assert!((db[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_policy_is_rejected() {
        let m = lq(0.1, &[1.0, 2.0]);
        let g = GridSpec::new(1.0, 5, 1).unwrap();
        assert!(matches!(
            assemble(&m, &g, &MarkovPolicy::constant(3, 1, 2)),
            Err(DiscretizeError::PolicyControl { control: 2, .. })
        ));
        assert!(matches!(
            assemble(&m, &g, &MarkovPolicy::constant(4, 1, 0)),
            Err(DiscretizeError::PolicyShape { .. })
        ));
    }

    #[test]
    fn matrix_market_header() {
        let m = lq(0.1, &[1.0]);
        let g = GridSpec::new(1.0, 5, 1).unwrap();
        let op = assemble(&m, &g, &MarkovPolicy::constant(3, 1, 0)).unwrap();
        let mut buf = Vec::new();
        op.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('%'));
        assert_eq!(lines.next(), Some("3 3 7"));
        assert_eq!(lines.count(), 7);
    }
}
