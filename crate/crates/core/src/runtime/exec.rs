//! Kernel binding and tiled grid sweeps.
//!
//! A [`BoundKernel`] is kernel IR specialized to a grid and parameter set:
//! parameters are inlined as constants, loads carry precomputed linear
//! deltas, and coordinates are computed per point. Sweeps write only the
//! interior; every point is independent (kernels never read what they
//! write), so the result is bitwise identical for any tile plan and worker
//! count.

use std::collections::BTreeMap;

use num::ToPrimitive;

use crate::expand::{CoordRef, Func};
use crate::ir::lower::spacing_param;
use crate::ir::{KernelIr, Op};
use crate::runtime::tiles::TilePlan;
use crate::runtime::{RuntimeError, StateVector, UniformGrid};

#[derive(Debug, Clone)]
enum ExecOp {
    Const(f64),
    /// Spatial coordinate of the sweep point along an axis.
    Coord(u8),
    Time,
    /// Field slot plus linear offset relative to the point's index.
    Load { slot: usize, delta: isize },
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Call(Func, u32),
    Mad(u32, u32, u32),
}

/// A kernel ready to sweep one specific grid.
#[derive(Debug, Clone)]
pub struct BoundKernel {
    pub name: String,
    instrs: Vec<ExecOp>,
    /// `(field slot, value id)` writes.
    outputs: Vec<(usize, u32)>,
    /// Field names by slot; reads first, then written fields.
    fields: Vec<String>,
    read_slots: usize,
    pub radius: Vec<i64>,
}

impl BoundKernel {
    /// Specialize `k` to `grid` with the given parameter values. Spacing
    /// parameters (`dx`, `dy`, `dz`) come from the grid.
    pub fn bind(
        k: &KernelIr,
        grid: &UniformGrid,
        params: &BTreeMap<String, f64>,
    ) -> Result<BoundKernel, RuntimeError> {
        if k.dim != grid.dim {
            return Err(RuntimeError::ShapeMismatch(format!(
                "kernel `{}` is {}-dimensional, grid is {}-dimensional",
                k.name, k.dim, grid.dim
            )));
        }
        let radius = k.radius();
        if let Some(&r) = radius.iter().max() {
            if r > grid.ghost as i64 {
                return Err(RuntimeError::GhostTooSmall {
                    ghost: grid.ghost,
                    radius: r,
                });
            }
        }

        let strides = grid.strides();
        let mut fields: Vec<String> = Vec::new();
        let slot_of = |name: &str, fields: &mut Vec<String>| -> usize {
            match fields.iter().position(|f| f == name) {
                Some(i) => i,
                None => {
                    fields.push(name.to_string());
                    fields.len() - 1
                }
            }
        };

        let mut instrs = Vec::with_capacity(k.body.len());
        for op in &k.body {
            let exec = match op {
                Op::Const(c) => ExecOp::Const(c.to_f64().expect("constant fits in f64")),
                Op::Param(p) => {
                    let axis = (1..=grid.dim as u8).find(|a| spacing_param(*a) == p);
                    let value = match axis {
                        Some(a) => grid.h[(a - 1) as usize],
                        None => *params.get(p).ok_or_else(|| {
                            RuntimeError::MissingParameter(p.clone())
                        })?,
                    };
                    ExecOp::Const(value)
                }
                Op::Coord(CoordRef::Axis(a)) => ExecOp::Coord(*a),
                Op::Coord(CoordRef::Time) => ExecOp::Time,
                Op::Load { field, offsets } => {
                    let delta: isize = offsets
                        .iter()
                        .zip(&strides)
                        .map(|(o, s)| *o as isize * *s as isize)
                        .sum();
                    ExecOp::Load {
                        slot: slot_of(field, &mut fields),
                        delta,
                    }
                }
                Op::Neg(a) => ExecOp::Neg(*a as u32),
                Op::Add(a, b) => ExecOp::Add(*a as u32, *b as u32),
                Op::Sub(a, b) => ExecOp::Sub(*a as u32, *b as u32),
                Op::Mul(a, b) => ExecOp::Mul(*a as u32, *b as u32),
                Op::Div(a, b) => ExecOp::Div(*a as u32, *b as u32),
                Op::Pow(a, n) => ExecOp::Pow(*a as u32, *n),
                Op::Call(f, a) => ExecOp::Call(*f, *a as u32),
                Op::Mad(a, b, c) => ExecOp::Mad(*a as u32, *b as u32, *c as u32),
            };
            instrs.push(exec);
        }
        let read_slots = fields.len();
        let outputs = k
            .outputs
            .iter()
            .map(|(field, vid)| (slot_of(field, &mut fields), *vid as u32))
            .collect();

        Ok(BoundKernel {
            name: k.name.clone(),
            instrs,
            outputs,
            fields,
            read_slots,
            radius,
        })
    }

    pub fn read_fields(&self) -> &[String] {
        &self.fields[..self.read_slots]
    }

    pub fn written_fields(&self) -> &[String] {
        &self.fields[self.read_slots..]
    }
}

/// Shared, Sendable view of the field pointers for one sweep.
#[derive(Clone, Copy)]
struct FieldPtrs<'a> {
    ptrs: &'a [*mut f64],
}

// SAFETY: tiles write disjoint interior points and kernels never read a
// field they write, so concurrent workers touch disjoint memory.
unsafe impl Send for FieldPtrs<'_> {}
unsafe impl Sync for FieldPtrs<'_> {}

/// Sweep a bound kernel over the grid interior. Ghosts of the read fields
/// must already be synced when the kernel has nonzero radius.
pub fn apply_kernel(
    kernel: &BoundKernel,
    state: &mut StateVector,
    grid: &UniformGrid,
    plan: &TilePlan,
    workers: usize,
    time: f64,
) -> Result<(), RuntimeError> {
    let len = state.len();
    if len != grid.total_padded() {
        return Err(RuntimeError::ShapeMismatch(format!(
            "state arrays have {len} entries, grid has {}",
            grid.total_padded()
        )));
    }
    let mut ptrs = Vec::with_capacity(kernel.fields.len());
    for field in &kernel.fields {
        ptrs.push(state.raw(field)?);
    }
    let tiles = plan.tiles(grid);
    let workers = workers.max(1);
    let shared = FieldPtrs { ptrs: &ptrs };

    if workers == 1 {
        let mut scratch = vec![0.0f64; kernel.instrs.len()];
        for tile in &tiles {
            sweep_tile(kernel, grid, shared, tile, time, &mut scratch);
        }
    } else {
        std::thread::scope(|scope| {
            for w in 0..workers {
                let tiles = &tiles;
                let shared = shared;
                scope.spawn(move || {
                    let mut scratch = vec![0.0f64; kernel.instrs.len()];
                    let mut idx = w;
                    while idx < tiles.len() {
                        sweep_tile(kernel, grid, shared, &tiles[idx], time, &mut scratch);
                        idx += workers;
                    }
                });
            }
        });
    }
    Ok(())
}

/// Evaluate the kernel at every point of one tile.
fn sweep_tile(
    kernel: &BoundKernel,
    grid: &UniformGrid,
    fields: FieldPtrs<'_>,
    tile: &crate::runtime::tiles::TileBox,
    time: f64,
    scratch: &mut [f64],
) {
    let strides = grid.strides();
    let g = grid.ghost;
    let lo = tile.lo;
    let hi = tile.hi;
    let dims = grid.dim;

    let mut point = [0usize; 3];
    for k in lo[2]..hi[2] {
        point[2] = k;
        for j in lo[1]..hi[1] {
            point[1] = j;
            // Linear index of (lo[0], j, k), then walk axis 0.
            let mut linear = (lo[0] + g) * strides[0];
            if dims > 1 {
                linear += (j + g) * strides[1];
            }
            if dims > 2 {
                linear += (k + g) * strides[2];
            }
            for i in lo[0]..hi[0] {
                point[0] = i;
                eval_point(kernel, grid, fields, &point, linear, time, scratch);
                linear += 1;
            }
        }
    }
}

#[inline]
fn eval_point(
    kernel: &BoundKernel,
    grid: &UniformGrid,
    fields: FieldPtrs<'_>,
    point: &[usize; 3],
    linear: usize,
    time: f64,
    scratch: &mut [f64],
) {
    for (i, op) in kernel.instrs.iter().enumerate() {
        scratch[i] = match op {
            ExecOp::Const(c) => *c,
            ExecOp::Coord(a) => grid.coord(*a as usize, point[*a as usize]),
            ExecOp::Time => time,
            ExecOp::Load { slot, delta } => {
                // SAFETY: |delta| <= radius * stride and the point is
                // interior with ghost >= radius, so the index is in bounds.
                unsafe { *fields.ptrs[*slot].offset(linear as isize + delta) }
            }
            ExecOp::Neg(a) => -scratch[*a as usize],
            ExecOp::Add(a, b) => scratch[*a as usize] + scratch[*b as usize],
            ExecOp::Sub(a, b) => scratch[*a as usize] - scratch[*b as usize],
            ExecOp::Mul(a, b) => scratch[*a as usize] * scratch[*b as usize],
            ExecOp::Div(a, b) => scratch[*a as usize] / scratch[*b as usize],
            ExecOp::Pow(a, n) => scratch[*a as usize].powi(*n),
            ExecOp::Call(f, a) => f.eval(scratch[*a as usize]),
            ExecOp::Mad(a, b, c) => {
                scratch[*a as usize] * scratch[*b as usize] + scratch[*c as usize]
            }
        };
    }
    for (slot, vid) in &kernel.outputs {
        // SAFETY: interior writes; tiles are disjoint and no other worker
        // touches this point.
        unsafe {
            *fields.ptrs[*slot].add(linear) = scratch[*vid as usize];
        }
    }
}

/// Fill the ghost layers of one field with the periodic image of the
/// opposite interior edge, axis by axis so corners come out consistent.
pub fn sync_ghosts_field(data: &mut [f64], grid: &UniformGrid) {
    let g = grid.ghost;
    if g == 0 {
        return;
    }
    let strides = grid.strides();
    let padded = [
        grid.padded(0),
        if grid.dim > 1 { grid.padded(1) } else { 1 },
        if grid.dim > 2 { grid.padded(2) } else { 1 },
    ];
    for axis in 0..grid.dim {
        let n = grid.n[axis];
        for kk in 0..padded[2] {
            for jj in 0..padded[1] {
                for ii in 0..padded[0] {
                    let p = [ii, jj, kk];
                    let pa = p[axis];
                    let src_a = if pa < g {
                        pa + n
                    } else if pa >= g + n {
                        pa - n
                    } else {
                        continue;
                    };
                    let mut dst_idx = 0;
                    let mut src_idx = 0;
                    for (a, &pv) in p.iter().enumerate().take(grid.dim) {
                        dst_idx += pv * strides[a];
                        src_idx += if a == axis { src_a } else { pv } * strides[a];
                    }
                    data[dst_idx] = data[src_idx];
                }
            }
        }
    }
}

/// Sync ghosts of the named fields.
pub fn sync_ghosts(
    state: &mut StateVector,
    grid: &UniformGrid,
    names: &[String],
) -> Result<(), RuntimeError> {
    for name in names {
        sync_ghosts_field(state.data_mut(name)?, grid);
    }
    Ok(())
}

/// First non-finite interior value among `names`, if any.
pub fn find_nonfinite(
    state: &StateVector,
    grid: &UniformGrid,
    names: &[String],
) -> Option<String> {
    for name in names {
        let Ok(data) = state.data(name) else {
            continue;
        };
        let values = crate::runtime::reduce::interior_values(data, grid);
        if values.iter().any(|v| !v.is_finite()) {
            return Some(name.clone());
        }
    }
    None
}
