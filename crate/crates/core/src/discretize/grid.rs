use serde::{Deserialize, Serialize};

use super::DiscretizeError;

/// Tensor grid on the box `[-R, R]^d` with an odd number of nodes per axis.
///
/// Nodes are enumerated row-major: node `(i_0, .., i_{d-1})` has index
/// `sum_a i_a * n^(d-1-a)`, so the last axis varies fastest. Axis index `i`
/// sits at coordinate `-R + i h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    radius: f64,
    nodes_per_axis: usize,
    dim: usize,
    spacing: f64,
}

impl GridSpec {
    pub fn new(radius: f64, nodes_per_axis: usize, dim: usize) -> Result<Self, DiscretizeError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(DiscretizeError::Grid(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if nodes_per_axis < 3 || nodes_per_axis.is_multiple_of(2) {
            return Err(DiscretizeError::Grid(format!(
                "nodes per axis must be odd and at least 3, got {nodes_per_axis}"
            )));
        }
        if dim == 0 {
            return Err(DiscretizeError::Grid("dimension must be positive".into()));
        }
        let total = (nodes_per_axis as u128).checked_pow(dim as u32);
        if total.is_none_or(|t| t > u32::MAX as u128) {
            return Err(DiscretizeError::Grid("grid too large".into()));
        }
        Ok(Self {
            radius,
            nodes_per_axis,
            dim,
            spacing: 2.0 * radius / (nodes_per_axis - 1) as f64,
        })
    }

    /// Grid with spacing `1 / nodes_per_unit`. `2 R nodes_per_unit` must be
    /// an even integer so the origin is a node and grids of different radii
    /// at the same density are nested.
    pub fn from_density(
        radius: f64,
        nodes_per_unit: usize,
        dim: usize,
    ) -> Result<Self, DiscretizeError> {
        let cells = 2.0 * radius * nodes_per_unit as f64;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * cells.max(1.0) || !(rounded as usize).is_multiple_of(2)
        {
            return Err(DiscretizeError::Grid(format!(
                "radius {radius} is not a multiple of the spacing 1/{nodes_per_unit}"
            )));
        }
        Self::new(radius, rounded as usize + 1, dim)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn origin_index(&self) -> usize {
        let mid = self.nodes_per_axis / 2;
        (0..self.dim).fold(0, |acc, _| acc * self.nodes_per_axis + mid)
    }

    pub fn axis_coordinate(&self, i: usize) -> f64 {
        let mid = (self.nodes_per_axis / 2) as f64;
        (i as f64 - mid) * self.spacing
    }

    pub fn multi_index(&self, index: usize, out: &mut [usize]) {
        let mut rest = index;
        for a in (0..self.dim).rev() {
            out[a] = rest % self.nodes_per_axis;
            rest /= self.nodes_per_axis;
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .fold(0, |acc, &i| acc * self.nodes_per_axis + i)
    }

    pub fn coordinates(&self, index: usize, out: &mut [f64]) {
        let mut rest = index;
        for a in (0..self.dim).rev() {
            out[a] = self.axis_coordinate(rest % self.nodes_per_axis);
            rest /= self.nodes_per_axis;
        }
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.coordinates(index, &mut x);
        x
    }

    /// Index stride of one step along axis `a`.
    pub fn stride(&self, axis: usize) -> usize {
        self.nodes_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let mut rest = index;
        for _ in 0..self.dim {
            let i = rest % self.nodes_per_axis;
            if i == 0 || i == self.nodes_per_axis - 1 {
                return true;
            }
            rest /= self.nodes_per_axis;
        }
        false
    }

    pub fn num_interior(&self) -> usize {
        (self.nodes_per_axis - 2).pow(self.dim as u32)
    }

    /// Grid indices of the interior nodes in enumeration order. Interior
    /// node `p` is `interior_nodes()[p]`.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| !self.is_boundary(i))
            .collect()
    }

    /// Interior number of a grid node, `None` on the boundary.
    pub fn interior_position(&self, index: usize) -> Option<usize> {
        let m = self.nodes_per_axis - 2;
        let mut rest = index;
        let mut pos = 0;
        let mut scale = 1;
        for _ in 0..self.dim {
            let i = rest % self.nodes_per_axis;
            if i == 0 || i == self.nodes_per_axis - 1 {
                return None;
            }
            pos += (i - 1) * scale;
            scale *= m;
            rest /= self.nodes_per_axis;
        }
        Some(pos)
    }

    /// Interior number of the origin node.
    pub fn interior_origin(&self) -> usize {
        self.interior_position(self.origin_index())
            .expect("origin is interior on an odd grid with at least 3 nodes")
    }

    /// Interior node nearest to `x`, with coordinates outside the interior
    /// clamped to the outermost interior layer.
    pub fn nearest_interior(&self, x: &[f64]) -> usize {
        let n = self.nodes_per_axis;
        let mid = (n / 2) as f64;
        let m = n - 2;
        let mut pos = 0;
        for &xa in x {
            let i = (xa / self.spacing + mid).round();
            let i = if i.is_nan() {
                mid
            } else {
                i.clamp(1.0, (n - 2) as f64)
            } as usize;
            pos = pos * m + (i - 1);
        }
        pos
    }

    /// Multilinear interpolation of nodal values `f` (indexed by grid node)
    /// at `x`; zero outside the box.
    pub fn interpolate(&self, f: impl Fn(usize) -> f64, x: &[f64]) -> f64 {
        let n = self.nodes_per_axis;
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        debug_assert!(self.dim <= 8);
        for (a, &xa) in x.iter().enumerate() {
            if !(xa.abs() <= self.radius) {
                return 0.0;
            }
            let t = (xa + self.radius) / self.spacing;
            let i = (t.floor() as usize).min(n - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut total = 0.0;
        let mut multi = [0usize; 8];
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            for a in 0..self.dim {
                let up = (corner >> (self.dim - 1 - a)) & 1;
                multi[a] = base[a] + up;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                total += w * f(self.flat_index(&multi[..self.dim]));
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let g = GridSpec::new(1.0, 3, 1).unwrap();
        assert_eq!(g.spacing(), 1.0);
        let xs: Vec<f64> = (0..3).map(|i| g.point(i)[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.interior_nodes(), vec![1]);
    }

    #[test]
    fn two_dimensional_enumeration() {
        let g = GridSpec::new(2.0, 5, 2).unwrap();
        assert_eq!(g.num_nodes(), 25);
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.origin_index(), 12);
        assert_eq!(g.point(12), vec![0.0, 0.0]);
        // last axis fastest
        assert_eq!(g.point(13), vec![0.0, 1.0]);
        assert_eq!(g.point(17), vec![1.0, 0.0]);
        assert_eq!(g.num_interior(), 9);
        assert_eq!(g.interior_origin(), 4);
    }

    #[test]
    fn even_node_count_rejected() {
        assert!(GridSpec::new(1.0, 4, 1).is_err());
        assert!(GridSpec::new(1.0, 1, 1).is_err());
        assert!(GridSpec::new(0.0, 5, 1).is_err());
    }

    #[test]
    fn density_constructor_nests_grids() {
        let a = GridSpec::from_density(2.0, 10, 1).unwrap();
        let b = GridSpec::from_density(4.0, 10, 1).unwrap();
        assert_eq!(a.nodes_per_axis(), 41);
        assert_eq!(a.spacing(), b.spacing());
        assert!(GridSpec::from_density(0.25, 2, 1).is_err());
    }

    #[test]
    fn interior_positions_match_enumeration() {
        let g = GridSpec::new(1.5, 7, 2).unwrap();
        for (p, &i) in g.interior_nodes().iter().enumerate() {
            assert_eq!(g.interior_position(i), Some(p));
            assert_eq!(g.nearest_interior(&g.point(i)), p);
        }
        assert_eq!(g.interior_position(0), None);
        // far outside clamps to the corner interior node
        assert_eq!(g.nearest_interior(&[-100.0, -100.0]), 0);
    }

    #[test]
    fn interpolation_is_exact_for_multilinear_functions() {
        let g = GridSpec::new(1.0, 5, 2).unwrap();
        let f = |i: usize| {
            let x = g.point(i);
            1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]
        };
        for x in [[0.3, -0.7], [0.0, 0.0], [-1.0, 1.0], [0.99, 0.01]] {
            let want = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
            assert!((g.interpolate(f, &x) - want).abs() < 1e-12);
        }
        assert_eq!(g.interpolate(f, &[1.5, 0.0]), 0.0);
    }
}
