use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::EigenError;
use crate::discretize::{DiscreteOperator, GridSpec};
use crate::linalg::BandedLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `min_k psi_k(0) = 1`.
    MinRegimeAtOriginEqualsOne,
}

/// Principal eigenpair of an assembled operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Indexed like the operator's unknowns, `node * N + regime`.
    pub psi: Vec<f64>,
    pub normalization: Normalization,
    pub num_regimes: usize,
    /// `|A psi - lambda psi|_inf / |psi|_inf` at exit.
    pub residual: f64,
    pub iterations: usize,
    /// Collatz-Wielandt bracket `min_i (A psi)_i / psi_i <= lambda <= max_i ...`.
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl EigenPair {
    pub fn value(&self, node: usize, regime: usize) -> f64 {
        self.psi[node * self.num_regimes + regime]
    }

    /// Value at a grid node, zero on the boundary.
    pub fn value_at_grid(&self, grid: &GridSpec, grid_node: usize, regime: usize) -> f64 {
        grid.interior_position(grid_node)
            .map_or(0.0, |p| self.value(p, regime))
    }

    /// Multilinear interpolation of regime `k`'s eigenfunction, zero outside
    /// the box.
    pub fn interpolate(&self, grid: &GridSpec, x: &[f64], regime: usize) -> f64 {
        grid.interpolate(|g| self.value_at_grid(grid, g, regime), x)
    }

    /// CSV with columns `x1..xd, regime, psi` over interior nodes.
    pub fn write_csv<W: Write>(&self, grid: &GridSpec, mut w: W) -> io::Result<()> {
        let d = grid.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},regime,psi", header.join(","))?;
        let mut x = vec![0.0; d];
        for (p, g) in grid.interior_nodes().into_iter().enumerate() {
            grid.coordinates(g, &mut x);
            let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            for k in 0..self.num_regimes {
                writeln!(w, "{},{},{:e}", coords.join(","), k, self.value(p, k))?;
            }
        }
        Ok(())
    }
}

/// Sup-norm distance between two eigenvectors relative to the first one's
/// sup norm.
pub fn relative_sup_distance(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

const MAX_SHIFT_UPDATES: usize = 12;

/// Rightmost eigenpair from the all-ones start vector.
pub fn principal_eigenpair(
    op: &DiscreteOperator,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPair, EigenError> {
    principal_eigenpair_from(op, tol, max_iter, &vec![1.0; op.size()])
}

/// Shifted inverse iteration on `(s I - A)^{-1}`.
///
/// The first shift is `s = 1 + max_i (A_ii + sum_{j != i} A_ij)`, above every
/// Gershgorin disc. Each iterate `v > 0` yields the Collatz-Wielandt bracket
/// `l <= lambda <= u`; once the bracket is small compared with `s - u` the
/// shift is lowered to `u + max(2 (u - l), 1e-3 (1 + |u|))` and `s I - A` is
/// refactored. Because `u` bounds `lambda` from above, every shift stays
/// above the rightmost eigenvalue, so `s I - A` stays a nonsingular
/// M-matrix and the iterates stay positive.
///
/// Iteration stops when `|A v - lambda v|_inf / |v|_inf <= tol`, with
/// `lambda` the Rayleigh quotient. `tol` is floored at `64 eps |A|_inf`,
/// below which the residual cannot be resolved in double precision.
pub fn principal_eigenpair_from(
    op: &DiscreteOperator,
    tol: f64,
    max_iter: usize,
    init: &[f64],
) -> Result<EigenPair, EigenError> {
    let n = op.size();
    if n == 0 {
        return Err(EigenError::InvalidInput("operator has no unknowns".into()));
    }
    if !(tol > 0.0) {
        return Err(EigenError::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if init.len() != n || init.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(EigenError::InvalidInput(
            "initial vector must be positive, finite and match the operator size".into(),
        ));
    }
    if !op.is_metzler() {
        return Err(EigenError::InvalidInput(format!(
            "operator is not Metzler (off-diagonal entry {:e})",
            op.min_off_diagonal()
        )));
    }
    if !op.is_irreducible() {
        return Err(EigenError::NotIrreducible);
    }

    let mut row_bound = f64::NEG_INFINITY;
    let mut norm_a = 0.0f64;
    for i in 0..n {
        let (_, vals) = op.row(i);
        row_bound = row_bound.max(vals.iter().sum());
        norm_a = norm_a.max(vals.iter().map(|v| v.abs()).sum());
    }
    let tol_eff = tol.max(64.0 * f64::EPSILON * norm_a);

    let mut shift = 1.0 + row_bound;
    let mut lu = BandedLu::factor_shifted(op, shift).map_err(|e| EigenError::Factorization {
        shift,
        row: e.row,
        pivot: e.pivot,
    })?;
    let mut updates = 0;

    let vmax = init.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut v: Vec<f64> = init.iter().map(|&x| x / vmax).collect();
    let mut av = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for it in 1..=max_iter {
        lu.solve(&mut v);
        let wmax = v.iter().fold(0.0f64, |m, &x| m.max(x));
        if !(wmax > 0.0) || !wmax.is_finite() {
            return Err(EigenError::NotPositive { iteration: it });
        }
        for x in v.iter_mut() {
            *x /= wmax;
        }
        op.matvec(&v, &mut av);

        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            if !(v[i] > 0.0) {
                return Err(EigenError::NotPositive { iteration: it });
            }
            let r = av[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
            num += v[i] * av[i];
            den += v[i] * v[i];
        }
        let lambda = num / den;
        residual = (0..n)
            .map(|i| (av[i] - lambda * v[i]).abs())
            .fold(0.0, f64::max);

        if residual <= tol_eff {
            return Ok(finish(op, v, lambda, residual, it, lo, hi));
        }

        if updates < MAX_SHIFT_UPDATES {
            let target = hi + (2.0 * (hi - lo)).max(1e-3 * (1.0 + hi.abs()));
            if shift - hi > 4.0 * (target - hi) {
                // A failed factorization means rounding put `target` at or
                // below the spectrum; keep the previous shift then.
                if let Ok(f) = BandedLu::factor_shifted(op, target) {
                    lu = f;
                    shift = target;
                }
                updates += 1;
            }
        }
    }
    Err(EigenError::NoConvergence { max_iter, residual })
}

fn finish(
    op: &DiscreteOperator,
    mut v: Vec<f64>,
    lambda: f64,
    residual: f64,
    iterations: usize,
    lo: f64,
    hi: f64,
) -> EigenPair {
    let nreg = op.num_regimes();
    let origin = op.grid().interior_origin();
    let anchor = (0..nreg)
        .map(|k| v[op.index(origin, k)])
        .fold(f64::INFINITY, f64::min);
    for x in v.iter_mut() {
        *x /= anchor;
    }
    EigenPair {
        lambda,
        psi: v,
        normalization: Normalization::MinRegimeAtOriginEqualsOne,
        num_regimes: nreg,
        residual,
        iterations,
        lower_bound: lo,
        upper_bound: hi,
    }
}
