use crate::error::{Error, Result};

/// A product of intervals `[a₁, b₁] × … × [a_d, b_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("domain needs at least one axis"));
        }
        for (i, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::invalid(format!("axis {i}: interval [{a}, {b}] is empty or not finite")));
            }
        }
        Ok(Self { bounds })
    }

    /// `[-half_width, half_width]^d`.
    pub fn symmetric_cube(d: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![(-half_width, half_width); d])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.bounds.iter().map(|(a, b)| b - a)
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        self.widths().product()
    }

    pub fn diameter(&self) -> f64 {
        self.widths().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Radius of the largest ball contained in the box.
    pub fn inradius(&self) -> f64 {
        self.widths().fold(f64::INFINITY, f64::min) / 2.0
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.len() == self.dim() && t.iter().zip(&self.bounds).all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: offset.len(),
            });
        }
        Self::new(self.bounds.iter().zip(offset).map(|((a, b), o)| (a + o, b + o)).collect())
    }
}

/// Regular grid of cell midpoints over a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
    nodes: Vec<f64>,
    cell_volume: f64,
}

impl Grid {
    /// `resolution[i]` cells along axis `i`; nodes sit at the cell midpoints.
    pub fn new(domain: Domain, resolution: Vec<usize>) -> Result<Self> {
        let d = domain.dim();
        if resolution.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: resolution.len(),
            });
        }
        if resolution.contains(&0) {
            return Err(Error::invalid("grid resolution must be positive on every axis"));
        }
        let spacing: Vec<f64> = domain
            .bounds()
            .iter()
            .zip(&resolution)
            .map(|((a, b), &n)| (b - a) / n as f64)
            .collect();
        let count: usize = resolution.iter().product();
        let mut nodes = Vec::with_capacity(count * d);
        let mut idx = vec![0usize; d];
        for _ in 0..count {
            for a in 0..d {
                nodes.push(domain.bounds()[a].0 + (idx[a] as f64 + 0.5) * spacing[a]);
            }
            // last axis varies fastest
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < resolution[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let cell_volume = spacing.iter().product();
        Ok(Self {
            domain,
            resolution,
            spacing,
            nodes,
            cell_volume,
        })
    }

    /// At least `nodes_per_unit` cells per unit length on every axis (and at
    /// least two).
    pub fn with_density(domain: Domain, nodes_per_unit: f64) -> Self {
        let resolution = domain
            .widths()
            .map(|w| ((nodes_per_unit * w - 1e-9).ceil() as usize).max(2))
            .collect();
        Self::new(domain, resolution).expect("resolution derived from a valid domain")
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim())
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; d];
        for a in (0..d).rev() {
            idx[a] = i % self.resolution[a];
            i /= self.resolution[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.resolution).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Index of the cell containing `t` (points on shared faces go to the
    /// upper cell, the upper boundary to the last cell).
    pub fn cell_of(&self, t: &[f64]) -> usize {
        let idx: Vec<usize> = t
            .iter()
            .enumerate()
            .map(|(a, &x)| {
                let k = ((x - self.domain.bounds()[a].0) / self.spacing[a]).floor();
                (k.max(0.0) as usize).min(self.resolution[a] - 1)
            })
            .collect();
        self.flat_index(&idx)
    }

    /// For a node in a cell touching the boundary, the projections of the
    /// node onto each boundary face its cell touches; `None` for interior
    /// cells.
    pub fn boundary_projection(&self, i: usize) -> Option<Vec<Vec<f64>>> {
        let idx = self.multi_index(i);
        let node = self.node(i);
        let mut out = Vec::new();
        for (a, &k) in idx.iter().enumerate() {
            let (lo, hi) = self.domain.bounds()[a];
            if k == 0 {
                let mut p = node.to_vec();
                p[a] = lo;
                out.push(p);
            }
            if k + 1 == self.resolution[a] {
                let mut p = node.to_vec();
                p[a] = hi;
                out.push(p);
            }
        }
        (!out.is_empty()).then_some(out)
    }

    /// Evaluates `f` at every node.
    pub fn map<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_validation_and_measures() {
        assert!(Domain::new(vec![(1.0, 1.0)]).is_err());
        assert!(Domain::new(vec![]).is_err());
        let d = Domain::new(vec![(-1.0, 1.0), (0.0, 4.0)]).unwrap();
        assert_eq!(d.measure(), 8.0);
        assert_eq!(d.inradius(), 1.0);
        assert!(d.contains(&[0.0, 4.0]));
        assert!(!d.contains(&[0.0, 4.1]));
    }

    #[test]
    fn grid_invariants() {
        let d = Domain::new(vec![(-2.0, 2.0), (0.0, 1.0)]).unwrap();
        let g = Grid::with_density(d.clone(), 8.0);
        assert_eq!(g.resolution(), &[32, 8]);
        assert_eq!(g.len(), 256);
        assert!((g.cell_volume() * g.len() as f64 - d.measure()).abs() < 1e-12);
        for t in g.nodes() {
            assert!(t[0] > -2.0 && t[0] < 2.0 && t[1] > 0.0 && t[1] < 1.0);
        }
        for i in [0, 17, 255] {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
            assert_eq!(g.cell_of(g.node(i)), i);
        }
        assert_eq!(g.cell_of(&[2.0, 1.0]), 255);
        assert_eq!(g.cell_of(&[-2.0, 0.0]), 0);
    }

    #[test]
    fn boundary_cells() {
        let g = Grid::new(Domain::new(vec![(0.0, 1.0)]).unwrap(), vec![4]).unwrap();
        assert_eq!(g.boundary_projection(0), Some(vec![vec![0.0]]));
        assert_eq!(g.boundary_projection(1), None);
        assert_eq!(g.boundary_projection(3), Some(vec![vec![1.0]]));
    }
}
