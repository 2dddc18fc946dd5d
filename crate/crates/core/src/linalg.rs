//! Banded LU factorization without pivoting.
//!
//! Used for `s I - A` with `A` an assembled operator and `s` above its
//! rightmost eigenvalue. Such matrices are nonsingular M-matrices, for which
//! Gaussian elimination without pivoting is stable, keeps every pivot
//! positive, and produces no fill outside the band.

use crate::discretize::DiscreteOperator;

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// Row `i` holds columns `i - kl ..= i + ku`; unit-lower `L` below the
    /// diagonal, `U` on and above it.
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonPositivePivot {
    pub row: usize,
    pub pivot: f64,
}

impl BandedLu {
    /// Factors `shift I - op`.
    pub fn factor_shifted(op: &DiscreteOperator, shift: f64) -> Result<Self, NonPositivePivot> {
        let n = op.size();
        let (kl, ku) = op.bandwidth();
        let width = kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            let (cols, vals) = op.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                data[i * width + (j + kl - i)] = -v;
            }
            data[i * width + kl] += shift;
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data,
        };
        lu.eliminate()?;
        Ok(lu)
    }

    fn eliminate(&mut self) -> Result<(), NonPositivePivot> {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        for k in 0..n {
            let pivot = self.data[k * w + kl];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(NonPositivePivot { row: k, pivot });
            }
            let jmax = (k + ku).min(n - 1);
            for i in (k + 1)..=(k + kl).min(n - 1) {
                let ik = i * w + (k + kl - i);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in (k + 1)..=jmax {
                    let kj = self.data[k * w + (j + kl - k)];
                    self.data[i * w + (j + kl - i)] -= l * kj;
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Solves in place.
    pub fn solve(&self, x: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let row = &self.data[i * w..(i + 1) * w];
            let mut s = x[i];
            for j in lo..i {
                s -= row[j + kl - i] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut s = x[i];
            for j in (i + 1)..=hi {
                s -= row[j + kl - i] * x[j];
            }
            x[i] = s / row[kl];
        }
    }
}
