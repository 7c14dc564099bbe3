//! Grid reductions with a deterministic summation order.

use crate::runtime::{RuntimeError, StateVector, UniformGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    L2,
    Linf,
    Sum,
}

impl Reduction {
    pub fn from_name(name: &str) -> Option<Reduction> {
        Some(match name {
            "l2" | "L2" => Reduction::L2,
            "linf" | "Linf" => Reduction::Linf,
            "sum" => Reduction::Sum,
            _ => return None,
        })
    }
}

/// Pairwise (tree) summation: deterministic and independent of worker
/// count, with error growth O(log n) instead of O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Interior values of a field in row-major interior order.
pub fn interior_values(data: &[f64], grid: &UniformGrid) -> Vec<f64> {
    let strides = grid.strides();
    let mut out = Vec::with_capacity(grid.interior_count());
    let n = &grid.n;
    let dims = [
        n.first().copied().unwrap_or(1),
        n.get(1).copied().unwrap_or(1),
        n.get(2).copied().unwrap_or(1),
    ];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            let mut base = (k + if grid.dim > 2 { grid.ghost } else { 0 })
                * strides.get(2).copied().unwrap_or(0)
                + (j + if grid.dim > 1 { grid.ghost } else { 0 })
                    * strides.get(1).copied().unwrap_or(0)
                + grid.ghost;
            for _ in 0..dims[0] {
                out.push(data[base]);
                base += 1;
            }
        }
    }
    out
}

/// Reduce a grid function over the interior:
/// L2 = sqrt(cell_volume * sum f^2), Linf = max |f|,
/// sum = cell_volume * sum f.
pub fn reduce(
    state: &StateVector,
    grid: &UniformGrid,
    field: &str,
    which: Reduction,
) -> Result<f64, RuntimeError> {
    let values = interior_values(state.data(field)?, grid);
    Ok(reduce_values(&values, grid, which))
}

pub fn reduce_values(values: &[f64], grid: &UniformGrid, which: Reduction) -> f64 {
    match which {
        Reduction::Linf => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        Reduction::Sum => grid.cell_volume() * pairwise_sum(values),
        Reduction::L2 => {
            let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
            (grid.cell_volume() * pairwise_sum(&squares)).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, lo: f64, hi: f64) -> UniformGrid {
        UniformGrid::periodic(&[n], &[lo], &[hi], 1).unwrap()
    }

    #[test]
    fn sum_of_a_constant_counts_cells() {
        let grid = grid1(8, 0.0, 4.0);
        let mut data = vec![2.0; grid.total_padded()];
        // Ghosts should not contribute.
        data[0] = 1e9;
        let values = interior_values(&data, &grid);
        assert_eq!(values.len(), 8);
        // 2 * 8 cells * h=0.5
        assert_eq!(reduce_values(&values, &grid, Reduction::Sum), 8.0);
    }

    #[test]
    fn zero_field_reduces_to_zero() {
        let grid = grid1(16, 0.0, 1.0);
        let values = vec![0.0; 16];
        for which in [Reduction::L2, Reduction::Linf, Reduction::Sum] {
            assert_eq!(reduce_values(&values, &grid, which), 0.0);
        }
    }

    #[test]
    fn l2_of_sine_approaches_sqrt_pi() {
        let n = 64;
        let grid = grid1(n, 0.0, std::f64::consts::TAU);
        let values: Vec<f64> = (0..n).map(|i| grid.coord(0, i).sin()).collect();
        let l2 = reduce_values(&values, &grid, Reduction::L2);
        // Riemann-sum oracle: integral of sin^2 over a period is pi.
        assert!((l2 - std::f64::consts::PI.sqrt()).abs() < 1e-3, "{l2}");
    }

    #[test]
    fn pairwise_matches_sequential_on_smooth_data() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let seq: f64 = values.iter().sum();
        assert!((pairwise_sum(&values) - seq).abs() < 1e-9);
    }
}
