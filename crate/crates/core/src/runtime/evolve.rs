//! Simulation assembly and RK4 method-of-lines time integration.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;

use num::ToPrimitive;

use crate::compile::CompiledProgram;
use crate::runtime::exec::{apply_kernel, find_nonfinite, sync_ghosts, BoundKernel};
use crate::runtime::reduce::{interior_values, reduce_values, Reduction};
use crate::runtime::state::FieldRole;
use crate::runtime::tiles::TilePlan;
use crate::runtime::{RuntimeError, StateVector, UniformGrid};

/// A compiled program bound to a grid: state storage, bound kernels, and
/// the integration clock.
#[derive(Debug)]
pub struct Simulation {
    pub grid: UniformGrid,
    pub state: StateVector,
    pub plan: TilePlan,
    pub workers: usize,
    params: BTreeMap<String, f64>,
    /// Init kernels stay as IR and are bound in [`Simulation::run_init`],
    /// so preset-driven runs don't need init-only parameters.
    init_irs: Vec<crate::ir::KernelIr>,
    rhs_kernels: Vec<BoundKernel>,
    analysis_kernels: Vec<BoundKernel>,
    /// Evolved components (declaration order).
    evolved: Vec<String>,
    /// Names synced before stencil kernels run.
    synced: Vec<String>,
    extra: Vec<String>,
    t: f64,
    step: u64,
}

impl Simulation {
    /// Bind `compiled` to `grid`. Parameter values come from declaration
    /// defaults plus `overrides`; unknown overrides are rejected with the
    /// declared list. Kernels of the designated init calculation are bound
    /// lazily by [`Simulation::run_init`], so programs driven by a preset
    /// need not supply init-only parameters.
    pub fn new(
        compiled: &CompiledProgram,
        grid: UniformGrid,
        overrides: &BTreeMap<String, f64>,
    ) -> Result<Simulation, RuntimeError> {
        let radius = compiled.max_radius();
        if (grid.ghost as i64) < radius {
            return Err(RuntimeError::GhostTooSmall {
                ghost: grid.ghost,
                radius,
            });
        }

        let mut params: BTreeMap<String, f64> = BTreeMap::new();
        for (name, info) in &compiled.program.parameters {
            if let Some(default) = &info.default {
                params.insert(
                    name.clone(),
                    default.to_f64().expect("default fits in f64"),
                );
            }
        }
        for (name, value) in overrides {
            if !compiled.program.parameters.contains_key(name) {
                let declared: Vec<&str> = compiled
                    .program
                    .parameters
                    .keys()
                    .map(|s| s.as_str())
                    .collect();
                return Err(RuntimeError::UnknownParameter {
                    name: name.clone(),
                    declared: if declared.is_empty() {
                        "(none)".to_string()
                    } else {
                        declared.join(", ")
                    },
                });
            }
            params.insert(name.clone(), *value);
        }

        let state = StateVector::for_program(compiled, &grid);
        let evolved = state.names_with_role(FieldRole::Evolved);
        let extra = state.names_with_role(FieldRole::Extra);
        let mut synced = evolved.clone();
        synced.extend(extra.iter().cloned());

        let bind_all = |kernels: Vec<&crate::compile::CompiledKernel>|
         -> Result<Vec<BoundKernel>, RuntimeError> {
            kernels
                .into_iter()
                .map(|k| BoundKernel::bind(&k.ir, &grid, &params))
                .collect()
        };
        let rhs_kernels = bind_all(compiled.rhs_kernels())?;
        let analysis_kernels = bind_all(compiled.analysis_kernels())?;
        let init_irs: Vec<crate::ir::KernelIr> = compiled
            .init_kernels()
            .into_iter()
            .map(|k| k.ir.clone())
            .collect();

        let plan = TilePlan::whole(&grid);
        Ok(Simulation {
            grid,
            state,
            plan,
            workers: 1,
            params,
            init_irs,
            rhs_kernels,
            analysis_kernels,
            evolved,
            synced,
            extra,
            t: 0.0,
            step: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn evolved_components(&self) -> &[String] {
        &self.evolved
    }

    pub fn extra_components(&self) -> &[String] {
        &self.extra
    }

    /// Run the designated init calculation at t = 0, then sync ghosts.
    pub fn run_init(&mut self) -> Result<(), RuntimeError> {
        let irs = std::mem::take(&mut self.init_irs);
        for ir in &irs {
            let bound = BoundKernel::bind(ir, &self.grid, &self.params)?;
            apply_kernel(
                &bound,
                &mut self.state,
                &self.grid,
                &self.plan,
                self.workers,
                0.0,
            )?;
        }
        self.init_irs = irs;
        sync_ghosts(&mut self.state, &self.grid, &self.synced)?;
        self.check_finite()?;
        Ok(())
    }

    /// Overwrite a component's interior from a coordinate function and
    /// resync; the preset path around the init calculation.
    pub fn set_field(
        &mut self,
        name: &str,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<(), RuntimeError> {
        let grid = self.grid.clone();
        let data = self.state.data_mut(name)?;
        let strides = grid.strides();
        let dims = [
            grid.n[0],
            if grid.dim > 1 { grid.n[1] } else { 1 },
            if grid.dim > 2 { grid.n[2] } else { 1 },
        ];
        let mut coords = vec![0.0; grid.dim];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = [i, j, k];
                    for (axis, c) in coords.iter_mut().enumerate() {
                        *c = grid.coord(axis, p[axis]);
                    }
                    let mut idx = 0;
                    for axis in 0..grid.dim {
                        idx += (p[axis] + grid.ghost) * strides[axis];
                    }
                    data[idx] = f(&coords);
                }
            }
        }
        crate::runtime::exec::sync_ghosts_field(data, &grid);
        Ok(())
    }

    /// Interior values of a component, row-major.
    pub fn field_interior(&self, name: &str) -> Result<Vec<f64>, RuntimeError> {
        Ok(interior_values(self.state.data(name)?, &self.grid))
    }

    pub fn reduce(&self, name: &str, which: Reduction) -> Result<f64, RuntimeError> {
        crate::runtime::reduce::reduce(&self.state, &self.grid, name, which)
    }

    /// Evaluate the RHS kernels into the `dt_` slots at stage time `t`.
    fn eval_rhs(&mut self, t: f64) -> Result<(), RuntimeError> {
        sync_ghosts(&mut self.state, &self.grid, &self.synced)?;
        for kernel in &self.rhs_kernels {
            apply_kernel(
                kernel,
                &mut self.state,
                &self.grid,
                &self.plan,
                self.workers,
                t,
            )?;
        }
        Ok(())
    }

    /// One classical RK4 step of size `dt`, with a ghost sync before each
    /// stage evaluation. The state is checked for non-finite values on the
    /// way in (naming the corrupted field before it propagates) and on the
    /// way out.
    pub fn rk4_step(&mut self, dt: f64) -> Result<(), RuntimeError> {
        if let Some(field) = find_nonfinite(&self.state, &self.grid, &self.evolved) {
            return Err(RuntimeError::NonFiniteDetected {
                field,
                step: self.step + 1,
                time: self.t,
            });
        }
        let components = self.evolved.clone();
        for c in &components {
            self.state.ensure_scratch(&save_name(c));
            self.state.ensure_scratch(&acc_name(c));
        }
        let t = self.t;

        for c in &components {
            self.state.copy_field(c, &save_name(c))?;
        }
        // Stage 1
        self.eval_rhs(t)?;
        for c in &components {
            let dt_c = format!("dt_{c}");
            self.state.axpy(&acc_name(c), &save_name(c), dt / 6.0, &dt_c)?;
            self.state.axpy(c, &save_name(c), dt / 2.0, &dt_c)?;
        }
        // Stage 2
        self.eval_rhs(t + dt / 2.0)?;
        for c in &components {
            let dt_c = format!("dt_{c}");
            self.state.axpy(&acc_name(c), &acc_name(c), dt / 3.0, &dt_c)?;
            self.state.axpy(c, &save_name(c), dt / 2.0, &dt_c)?;
        }
        // Stage 3
        self.eval_rhs(t + dt / 2.0)?;
        for c in &components {
            let dt_c = format!("dt_{c}");
            self.state.axpy(&acc_name(c), &acc_name(c), dt / 3.0, &dt_c)?;
            self.state.axpy(c, &save_name(c), dt, &dt_c)?;
        }
        // Stage 4
        self.eval_rhs(t + dt)?;
        for c in &components {
            let dt_c = format!("dt_{c}");
            self.state.axpy(c, &acc_name(c), dt / 6.0, &dt_c)?;
        }

        sync_ghosts(&mut self.state, &self.grid, &self.synced)?;
        self.step += 1;
        self.t += dt;
        self.check_finite()?;
        Ok(())
    }

    /// Run analysis kernels (ghosts synced first).
    pub fn run_analysis(&mut self) -> Result<(), RuntimeError> {
        if self.analysis_kernels.is_empty() {
            return Ok(());
        }
        sync_ghosts(&mut self.state, &self.grid, &self.synced)?;
        for kernel in &self.analysis_kernels {
            apply_kernel(
                kernel,
                &mut self.state,
                &self.grid,
                &self.plan,
                self.workers,
                self.t,
            )?;
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<(), RuntimeError> {
        if let Some(field) = find_nonfinite(&self.state, &self.grid, &self.evolved) {
            return Err(RuntimeError::NonFiniteDetected {
                field,
                step: self.step,
                time: self.t,
            });
        }
        Ok(())
    }

    /// A bound RHS kernel, for benchmarking.
    pub fn rhs_kernel(&self, idx: usize) -> Option<&BoundKernel> {
        self.rhs_kernels.get(idx)
    }
}

fn save_name(c: &str) -> String {
    format!("__save_{c}")
}

fn acc_name(c: &str) -> String {
    format!("__acc_{c}")
}

// ---------------------------------------------------------------------------
// Evolution driver

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record diagnostics every this many steps (plus step 0 and the end).
    pub output_every: u64,
    /// Write binary snapshots at the output cadence when set.
    pub snapshot_dir: Option<PathBuf>,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_final: f64) -> EvolutionConfig {
        EvolutionConfig {
            dt,
            t_final,
            output_every: 1,
            snapshot_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub columns: Vec<String>,
    /// One row per record: time followed by the column values.
    pub rows: Vec<Vec<f64>>,
}

impl Diagnostics {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("t,");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Step `sim` until `t >= t_final`, recording reductions at the output
/// cadence: per-component L2 and Linf norms plus total energy when the
/// program defines `eps`. Initial data must already be in place.
pub fn evolve(sim: &mut Simulation, config: &EvolutionConfig) -> Result<Diagnostics, RuntimeError> {
    if config.dt <= 0.0 {
        return Err(RuntimeError::Config("dt must be positive".into()));
    }
    if config.t_final < 0.0 {
        return Err(RuntimeError::Config("t_final must be non-negative".into()));
    }

    let mut columns = Vec::new();
    let mut tracked: Vec<String> = sim.evolved.clone();
    tracked.extend(sim.extra.iter().cloned());
    for name in &tracked {
        columns.push(format!("{name}_L2"));
        columns.push(format!("{name}_Linf"));
    }
    let has_energy = sim.extra.iter().any(|e| e == "eps");
    if has_energy {
        columns.push("energy".to_string());
    }

    let exact = config.t_final / config.dt;
    let steps = if (exact - exact.round()).abs() < 1e-9 {
        exact.round() as u64
    } else {
        exact.ceil() as u64
    };

    let mut diags = Diagnostics {
        columns,
        rows: Vec::new(),
    };
    record(sim, &tracked, has_energy, config, &mut diags)?;
    for step in 1..=steps {
        sim.rk4_step(config.dt)?;
        if step == steps || (config.output_every > 0 && step % config.output_every == 0) {
            record(sim, &tracked, has_energy, config, &mut diags)?;
        }
    }
    Ok(diags)
}

fn record(
    sim: &mut Simulation,
    tracked: &[String],
    has_energy: bool,
    config: &EvolutionConfig,
    diags: &mut Diagnostics,
) -> Result<(), RuntimeError> {
    sim.run_analysis()?;
    let mut row = Vec::with_capacity(1 + diags.columns.len());
    row.push(sim.time());
    for name in tracked {
        let values = interior_values(sim.state.data(name)?, &sim.grid);
        row.push(reduce_values(&values, &sim.grid, Reduction::L2));
        row.push(reduce_values(&values, &sim.grid, Reduction::Linf));
    }
    if has_energy {
        row.push(sim.reduce("eps", Reduction::Sum)?);
    }
    diags.rows.push(row);
    if let Some(dir) = &config.snapshot_dir {
        write_snapshots(sim, tracked, dir)?;
    }
    Ok(())
}

/// Flat little-endian f64 snapshot of each tracked component's interior,
/// with a text sidecar describing the layout.
fn write_snapshots(
    sim: &Simulation,
    tracked: &[String],
    dir: &std::path::Path,
) -> Result<(), RuntimeError> {
    let io_err = |e: std::io::Error| RuntimeError::Config(format!("snapshot I/O: {e}"));
    std::fs::create_dir_all(dir).map_err(io_err)?;
    for name in tracked {
        let values = sim.field_interior(name)?;
        let stem = format!("{name}_step{:08}", sim.step_count());
        let mut bin = std::fs::File::create(dir.join(format!("{stem}.bin"))).map_err(io_err)?;
        for v in &values {
            bin.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        let extents: Vec<String> = sim.grid.n.iter().map(|n| n.to_string()).collect();
        let spacing: Vec<String> = sim.grid.h.iter().map(|h| h.to_string()).collect();
        let origin: Vec<String> = sim.grid.origin.iter().map(|o| o.to_string()).collect();
        let header = format!(
            "field: {name}\ndim: {}\nextents: {}\nspacing: {}\norigin: {}\ntime: {}\n\
             layout: row-major interior, axis 0 contiguous, f64 little-endian\n",
            sim.grid.dim,
            extents.join(" "),
            spacing.join(" "),
            origin.join(" "),
            sim.time()
        );
        std::fs::write(dir.join(format!("{stem}.txt")), header).map_err(io_err)?;
    }
    Ok(())
}
