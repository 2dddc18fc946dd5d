use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{DiscretizeError, GridSpec};

/// Control index per (interior node, regime), stored node-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkovPolicy {
    num_nodes: usize,
    num_regimes: usize,
    table: Vec<usize>,
}

impl MarkovPolicy {
    pub fn constant(num_nodes: usize, num_regimes: usize, control: usize) -> Self {
        Self {
            num_nodes,
            num_regimes,
            table: vec![control; num_nodes * num_regimes],
        }
    }

    pub fn from_fn(
        num_nodes: usize,
        num_regimes: usize,
        mut f: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let mut table = Vec::with_capacity(num_nodes * num_regimes);
        for p in 0..num_nodes {
            for k in 0..num_regimes {
                table.push(f(p, k));
            }
        }
        Self {
            num_nodes,
            num_regimes,
            table,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_regimes(&self) -> usize {
        self.num_regimes
    }

    #[inline]
    pub fn get(&self, node: usize, regime: usize) -> usize {
        self.table[node * self.num_regimes + regime]
    }

    pub fn set(&mut self, node: usize, regime: usize, control: usize) {
        self.table[node * self.num_regimes + regime] = control;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.table
    }

    /// Fraction of (node, regime) entries using each control.
    pub fn histogram(&self, num_controls: usize) -> Vec<f64> {
        let mut counts = vec![0usize; num_controls];
        for &u in &self.table {
            if u < num_controls {
                counts[u] += 1;
            }
        }
        let total = self.table.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / total).collect()
    }

    pub fn check(
        &self,
        num_nodes: usize,
        num_regimes: usize,
        num_controls: usize,
    ) -> Result<(), DiscretizeError> {
        if self.num_nodes != num_nodes || self.num_regimes != num_regimes {
            return Err(DiscretizeError::PolicyShape {
                expected: (num_nodes, num_regimes),
                got: (self.num_nodes, self.num_regimes),
            });
        }
        if let Some(pos) = self.table.iter().position(|&u| u >= num_controls) {
            return Err(DiscretizeError::PolicyControl {
                node: pos / num_regimes,
                regime: pos % num_regimes,
                control: self.table[pos],
                num_controls,
            });
        }
        Ok(())
    }
}

/// Assembled coupled operator over interior unknowns in compressed sparse
/// row form. Row `p * N + k` belongs to interior node `p`, regime `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    grid: GridSpec,
    num_regimes: usize,
    interior: Vec<usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl DiscreteOperator {
    pub(crate) fn from_rows(
        grid: GridSpec,
        num_regimes: usize,
        interior: Vec<usize>,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), interior.len() * num_regimes + 1);
        Self {
            grid,
            num_regimes,
            interior,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_regimes(&self) -> usize {
        self.num_regimes
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Number of unknowns, `N * M`.
    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn index(&self, node: usize, regime: usize) -> usize {
        node * self.num_regimes + regime
    }

    /// `(interior node, regime)` of a row.
    #[inline]
    pub fn locate(&self, row: usize) -> (usize, usize) {
        (row / self.num_regimes, row % self.num_regimes)
    }

    /// Grid index of interior node `node`.
    pub fn grid_node(&self, node: usize) -> usize {
        self.interior[node]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// Same operator plus `kappa` on the diagonal.
    pub fn shifted(&self, kappa: f64) -> Self {
        let mut out = self.clone();
        for i in 0..out.size() {
            let (s, e) = (out.row_ptr[i], out.row_ptr[i + 1]);
            match out.col_idx[s..e].binary_search(&i) {
                Ok(p) => out.values[s + p] += kappa,
                Err(_) => panic!("assembled rows always store the diagonal"),
            }
        }
        out
    }

    /// Smallest off-diagonal entry (0 when there are none).
    pub fn min_off_diagonal(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.size() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    m = m.min(v);
                }
            }
        }
        m
    }

    pub fn is_metzler(&self) -> bool {
        self.min_off_diagonal() >= 0.0
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let (mut lo, mut hi) = (0, 0);
        for i in 0..self.size() {
            let (cols, _) = self.row(i);
            if let (Some(&first), Some(&last)) = (cols.first(), cols.last()) {
                lo = lo.max(i.saturating_sub(first));
                hi = hi.max(last.saturating_sub(i));
            }
        }
        (lo, hi)
    }

    /// Whether the directed graph of positive off-diagonal entries is
    /// strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let n = self.size();
        if n <= 1 {
            return true;
        }
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i && v > 0.0 {
                    rev[j].push(i);
                }
            }
        }
        let forward = |i: usize, out: &mut Vec<usize>| {
            let (cols, vals) = self.row(i);
            out.extend(
                cols.iter()
                    .zip(vals)
                    .filter(|&(&j, &v)| j != i && v > 0.0)
                    .map(|(&j, _)| j),
            );
        };
        let reach_all = |next: &dyn Fn(usize, &mut Vec<usize>)| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            let mut count = 1;
            let mut buf = Vec::new();
            while let Some(i) = queue.pop_front() {
                buf.clear();
                next(i, &mut buf);
                for &j in &buf {
                    if !seen[j] {
                        seen[j] = true;
                        count += 1;
                        queue.push_back(j);
                    }
                }
            }
            count == n
        };
        reach_all(&forward) && reach_all(&|i, out: &mut Vec<usize>| out.extend(&rev[i]))
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.size();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[i * n + j] = v;
            }
        }
        out
    }

    /// Matrix Market coordinate dump, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(
            w,
            "% rows are (interior node, regime) pairs, row = node * {} + regime",
            self.num_regimes
        )?;
        writeln!(w, "{} {} {}", self.size(), self.size(), self.nnz())?;
        for i in 0..self.size() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}
