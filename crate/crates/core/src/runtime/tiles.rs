//! Tile plans and model-driven tile-size tuning.
//!
//! Sweeps run tile by tile for cache locality and parallelism; tiles cover
//! the interior exactly and disjointly, so the sweep result never depends
//! on the plan. The tuner ranks a small candidate set by a cache-footprint
//! model (working set versus a configurable cache size) and optionally
//! times the best few to pick a winner.

use std::time::Instant;

use crate::runtime::exec::{apply_kernel, BoundKernel};
use crate::runtime::{RuntimeError, StateVector, UniformGrid};

/// Tile extents per axis, in interior units. Tiles are enumerated row-major
/// (axis 0 fastest), each clipped to the interior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub extents: Vec<usize>,
}

/// One tile: `lo..hi` interior index ranges (exclusive), fixed 3-slot form
/// with unused axes pinned to `0..1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl TilePlan {
    /// One tile spanning the whole interior.
    pub fn whole(grid: &UniformGrid) -> TilePlan {
        TilePlan {
            extents: grid.n.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<TilePlan, String> {
        let extents: Result<Vec<usize>, _> = text.split(',').map(|p| p.trim().parse()).collect();
        let extents = extents.map_err(|_| format!("invalid tile extents `{text}`"))?;
        if extents.is_empty() || extents.iter().any(|&e| e == 0) {
            return Err(format!("invalid tile extents `{text}`"));
        }
        Ok(TilePlan { extents })
    }

    /// Tiles covering the interior exactly and disjointly.
    pub fn tiles(&self, grid: &UniformGrid) -> Vec<TileBox> {
        let dim = grid.dim;
        let ext = |axis: usize| -> usize {
            self.extents
                .get(axis)
                .copied()
                .unwrap_or(grid.n[axis])
                .clamp(1, grid.n[axis])
        };
        let counts: Vec<usize> = (0..dim).map(|a| grid.n[a].div_ceil(ext(a))).collect();
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let count = |axis: usize| -> usize { counts.get(axis).copied().unwrap_or(1) };
        for tk in 0..count(2) {
            for tj in 0..count(1) {
                for ti in 0..count(0) {
                    let t = [ti, tj, tk];
                    let mut lo = [0usize; 3];
                    let mut hi = [1usize; 3];
                    for axis in 0..dim {
                        lo[axis] = t[axis] * ext(axis);
                        hi[axis] = (lo[axis] + ext(axis)).min(grid.n[axis]);
                    }
                    out.push(TileBox { lo, hi });
                }
            }
        }
        out
    }
}

impl std::fmt::Display for TilePlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.extents.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    /// Cache-size parameter for the working-set model.
    pub cache_bytes: usize,
    /// Skip timing; pick by model alone (deterministic).
    pub model_only: bool,
    /// How many model-ranked candidates to time.
    pub measure_top: usize,
    /// Timed repetitions per candidate (median wins).
    pub reps: usize,
    pub workers: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            cache_bytes: 256 * 1024,
            model_only: false,
            measure_top: 3,
            reps: 3,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateReport {
    pub plan: TilePlan,
    /// Modelled working set of one tile in bytes.
    pub working_set: usize,
    pub fits_cache: bool,
    pub measured_ms: Option<f64>,
    pub chosen: bool,
}

/// Working set of one tile: read footprint (tile grown by the stencil
/// radius) plus write footprint, 8 bytes per value per field.
fn working_set(plan: &TilePlan, kernel: &BoundKernel, grid: &UniformGrid) -> usize {
    let mut read_points = 1usize;
    let mut write_points = 1usize;
    for axis in 0..grid.dim {
        let e = plan
            .extents
            .get(axis)
            .copied()
            .unwrap_or(grid.n[axis])
            .clamp(1, grid.n[axis]);
        let r = kernel.radius.get(axis).copied().unwrap_or(0) as usize;
        read_points *= e + 2 * r;
        write_points *= e;
    }
    8 * (read_points * kernel.read_fields().len() + write_points * kernel.written_fields().len())
}

/// Model-pruned candidate plans: the contiguous axis is always spanned in
/// full; outer axes take extents from a geometric set.
pub fn candidate_plans(grid: &UniformGrid) -> Vec<TilePlan> {
    let geometric = [4usize, 8, 16, 32, 64, 128];
    let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(grid.dim);
    per_axis.push(vec![grid.n[0]]);
    for axis in 1..grid.dim {
        let mut options: Vec<usize> = geometric
            .iter()
            .copied()
            .filter(|&e| e < grid.n[axis])
            .collect();
        options.push(grid.n[axis]);
        per_axis.push(options);
    }
    let mut plans = vec![Vec::new()];
    for options in &per_axis {
        let mut next = Vec::new();
        for plan in &plans {
            for &e in options {
                let mut p = plan.clone();
                p.push(e);
                next.push(p);
            }
        }
        plans = next;
    }
    plans.into_iter().map(|extents| TilePlan { extents }).collect()
}

/// Pick a tile plan for `kernel` on `grid`: rank candidates by the cache
/// model (prefer the largest tile that fits; among non-fitting plans the
/// smallest working set), then optionally time the best few and return the
/// fastest. Deterministic in `model_only` mode.
pub fn tune_tiles(
    kernel: &BoundKernel,
    state: &mut StateVector,
    grid: &UniformGrid,
    candidates: Option<Vec<TilePlan>>,
    opts: &TuneOptions,
) -> Result<(TilePlan, Vec<CandidateReport>), RuntimeError> {
    let candidates = candidates.unwrap_or_else(|| candidate_plans(grid));
    if candidates.is_empty() {
        return Ok((TilePlan::whole(grid), Vec::new()));
    }

    let mut ranked: Vec<(TilePlan, usize, bool)> = candidates
        .into_iter()
        .map(|plan| {
            let ws = working_set(&plan, kernel, grid);
            let fits = ws <= opts.cache_bytes;
            (plan, ws, fits)
        })
        .collect();
    // Fitting plans first by descending tile volume (fewer, larger tiles);
    // non-fitting by ascending working set. Extents break ties.
    ranked.sort_by(|a, b| {
        let vol = |p: &TilePlan| -> usize { p.extents.iter().product() };
        b.2.cmp(&a.2)
            .then_with(|| {
                if a.2 {
                    vol(&b.0).cmp(&vol(&a.0))
                } else {
                    a.1.cmp(&b.1)
                }
            })
            .then_with(|| b.0.extents.cmp(&a.0.extents))
    });

    let mut reports: Vec<CandidateReport> = ranked
        .iter()
        .map(|(plan, ws, fits)| CandidateReport {
            plan: plan.clone(),
            working_set: *ws,
            fits_cache: *fits,
            measured_ms: None,
            chosen: false,
        })
        .collect();

    let chosen_idx = if opts.model_only {
        0
    } else {
        let top = opts.measure_top.max(1).min(reports.len());
        let mut best = 0usize;
        let mut best_ms = f64::INFINITY;
        for idx in 0..top {
            let plan = reports[idx].plan.clone();
            let mut times = Vec::with_capacity(opts.reps);
            for _ in 0..opts.reps.max(1) {
                let start = Instant::now();
                apply_kernel(kernel, state, grid, &plan, opts.workers, 0.0)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
            let median = times[times.len() / 2];
            reports[idx].measured_ms = Some(median);
            if median < best_ms {
                best_ms = median;
                best = idx;
            }
        }
        best
    };
    reports[chosen_idx].chosen = true;
    Ok((reports[chosen_idx].plan.clone(), reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_cover_the_interior_exactly() {
        let grid = UniformGrid::periodic(&[10, 7], &[0.0; 2], &[1.0; 2], 1).unwrap();
        let plan = TilePlan {
            extents: vec![4, 3],
        };
        let tiles = plan.tiles(&grid);
        let mut seen = vec![false; 10 * 7];
        for t in &tiles {
            for j in t.lo[1]..t.hi[1] {
                for i in t.lo[0]..t.hi[0] {
                    assert!(!seen[i + 10 * j], "point ({i},{j}) covered twice");
                    seen[i + 10 * j] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s), "interior not fully covered");
    }

    #[test]
    fn whole_plan_is_one_tile() {
        let grid = UniformGrid::periodic(&[16, 16, 16], &[0.0; 3], &[1.0; 3], 1).unwrap();
        assert_eq!(TilePlan::whole(&grid).tiles(&grid).len(), 1);
    }

    #[test]
    fn candidates_span_the_contiguous_axis() {
        let grid = UniformGrid::periodic(&[64, 64, 64], &[0.0; 3], &[1.0; 3], 1).unwrap();
        for plan in candidate_plans(&grid) {
            assert_eq!(plan.extents[0], 64);
        }
    }
}
