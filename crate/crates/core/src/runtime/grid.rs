//! Rectangular uniform grids with ghost padding.

use crate::runtime::RuntimeError;

/// A `dim`-dimensional uniform grid. Interior points along axis `a` are
/// `origin[a] + i * h[a]` for `i in 0..n[a]`; storage is padded by `ghost`
/// layers on each side, filled periodically. Axis 0 is contiguous in
/// memory.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    pub dim: usize,
    /// Interior extents.
    pub n: Vec<usize>,
    /// Grid spacing per axis.
    pub h: Vec<f64>,
    /// Coordinate of interior point 0 per axis.
    pub origin: Vec<f64>,
    pub ghost: usize,
}

impl UniformGrid {
    /// Periodic domain `[lo, hi)` per axis: `h = (hi - lo) / n` and the last
    /// interior point sits at `hi - h`.
    pub fn periodic(
        n: &[usize],
        lo: &[f64],
        hi: &[f64],
        ghost: usize,
    ) -> Result<UniformGrid, RuntimeError> {
        let dim = n.len();
        if !(1..=3).contains(&dim) || lo.len() != dim || hi.len() != dim {
            return Err(RuntimeError::InvalidGrid(format!(
                "expected 1-3 matching extents/bounds, got n:{} lo:{} hi:{}",
                n.len(),
                lo.len(),
                hi.len()
            )));
        }
        let mut h = Vec::with_capacity(dim);
        for axis in 0..dim {
            if hi[axis] <= lo[axis] {
                return Err(RuntimeError::InvalidGrid(format!(
                    "axis {axis}: domain [{}, {}) is empty",
                    lo[axis], hi[axis]
                )));
            }
            if n[axis] == 0 {
                return Err(RuntimeError::InvalidGrid(format!("axis {axis}: zero extent")));
            }
            if n[axis] < 2 * ghost {
                return Err(RuntimeError::InvalidGrid(format!(
                    "axis {axis}: extent {} is smaller than twice the ghost width {ghost}",
                    n[axis]
                )));
            }
            h.push((hi[axis] - lo[axis]) / n[axis] as f64);
        }
        Ok(UniformGrid {
            dim,
            n: n.to_vec(),
            h,
            origin: lo.to_vec(),
            ghost,
        })
    }

    pub fn padded(&self, axis: usize) -> usize {
        self.n[axis] + 2 * self.ghost
    }

    /// Row-major strides with axis 0 contiguous.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim];
        for axis in 1..self.dim {
            strides[axis] = strides[axis - 1] * self.padded(axis - 1);
        }
        strides
    }

    pub fn total_padded(&self) -> usize {
        (0..self.dim).map(|a| self.padded(a)).product()
    }

    pub fn interior_count(&self) -> usize {
        self.n.iter().product()
    }

    /// Linear index of an interior multi-index.
    pub fn linear(&self, interior: &[usize]) -> usize {
        let strides = self.strides();
        interior
            .iter()
            .zip(&strides)
            .map(|(i, s)| (i + self.ghost) * s)
            .sum()
    }

    pub fn coord(&self, axis: usize, interior_index: usize) -> f64 {
        self.origin[axis] + interior_index as f64 * self.h[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }
}
