//! Shared CLI configuration: grid/compile flags, run flags, and the
//! key=value config file. Flags always win over the config file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use edlc::compile::{default_passes, CompileOptions, CompiledProgram};
use edlc::ir::passes::PassKind;
use edlc::runtime::{EvolutionConfig, Simulation, TilePlan, UniformGrid};

use crate::Failure;

#[derive(Args, Debug, Default, Clone)]
pub struct GridArgs {
    /// Spatial dimension (1-3).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Interior points per axis, e.g. `64` or `64,32,32`.
    #[arg(long)]
    pub resolution: Option<String>,
    /// Domain per axis as `lo:hi`, comma-separated; default `0:1` per axis.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Finite-differencing accuracy order (2, 4, 6, ...); half-width is
    /// order/2.
    #[arg(long)]
    pub order: Option<u32>,
    /// Pass pipeline: `default`, `none`, or a comma list of
    /// dce/cse/peephole.
    #[arg(long)]
    pub passes: Option<String>,
    /// Kernel fission spec `CALC:a,b|c` (repeatable).
    #[arg(long = "fission")]
    pub fission: Vec<String>,
    /// Designated init calculation name.
    #[arg(long)]
    pub init_calc: Option<String>,
    /// Key=value config file supplying any of these settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// CFL factor: dt = cfl * min(h).
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Final time.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Record diagnostics every N steps.
    #[arg(long)]
    pub out_every: Option<u64>,
    /// Parameter overrides NAME=VALUE (repeatable).
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Tile plan: `auto` or comma extents like `64,8,8`.
    #[arg(long)]
    pub tiles: Option<String>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Built-in initial-data preset (skips the init calculation).
    #[arg(long)]
    pub init_preset: Option<String>,
    /// Write field snapshots beside records into this directory.
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
}

/// Config-file values for any unset flags (flags win).
fn file_values(path: &PathBuf) -> Result<BTreeMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Usage(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn merged<T: Clone>(
    flag: &Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Option<T>, Failure> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    match file.get(key) {
        Some(raw) => parse(raw)
            .map(Some)
            .map_err(|e| Failure::Usage(format!("config `{key}`: {e}"))),
        None => Ok(None),
    }
}

pub struct GridSettings {
    pub resolution: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Resolve compile options from flags plus config file.
pub fn build_options(grid: &GridArgs) -> Result<CompileOptions, Failure> {
    let file = match &grid.config {
        Some(path) => file_values(path)?,
        None => BTreeMap::new(),
    };
    let dim = merged(&grid.dim, &file, "dim", |s| {
        s.parse::<usize>().map_err(|e| e.to_string())
    })?
    .unwrap_or(1);
    let order = merged(&grid.order, &file, "order", |s| {
        s.parse::<u32>().map_err(|e| e.to_string())
    })?;
    if let Some(order) = order {
        if order == 0 || order % 2 != 0 {
            return Err(Failure::Usage(format!(
                "accuracy order must be a positive even number, got {order}"
            )));
        }
    }
    let passes_text = merged(&grid.passes, &file, "passes", |s| Ok(s.to_string()))?;
    let passes = match passes_text.as_deref() {
        None | Some("default") => default_passes(),
        Some("none") => Vec::new(),
        Some(list) => {
            let mut out = Vec::new();
            for name in list.split(',') {
                let name = name.trim();
                out.push(PassKind::from_name(name).ok_or_else(|| {
                    Failure::Usage(format!(
                        "unknown pass `{name}` (expected dce, cse, peephole)"
                    ))
                })?);
            }
            out
        }
    };

    let mut fission = BTreeMap::new();
    let mut fission_specs = grid.fission.clone();
    if fission_specs.is_empty() {
        if let Some(spec) = file.get("fission") {
            fission_specs.push(spec.clone());
        }
    }
    for spec in &fission_specs {
        let (calc, cells) = spec.split_once(':').ok_or_else(|| {
            Failure::Usage(format!("fission spec `{spec}` must look like CALC:a,b|c"))
        })?;
        let partition: Vec<Vec<String>> = cells
            .split('|')
            .map(|cell| cell.split(',').map(|f| f.trim().to_string()).collect())
            .collect();
        fission.insert(calc.to_string(), partition);
    }

    let init_calc = merged(&grid.init_calc, &file, "init-calc", |s| Ok(s.to_string()))?
        .unwrap_or_else(|| edlc::frontend::DEFAULT_INIT_CALC.to_string());

    Ok(CompileOptions {
        dim,
        half_width: order.map(|o| o / 2),
        init_calc,
        passes,
        fission,
        module_name: None,
    })
}

/// Resolve grid geometry from flags plus config file.
pub fn grid_settings(grid: &GridArgs, dim: usize) -> Result<GridSettings, Failure> {
    let file = match &grid.config {
        Some(path) => file_values(path)?,
        None => BTreeMap::new(),
    };
    let resolution_text = merged(&grid.resolution, &file, "resolution", |s| Ok(s.to_string()))?
        .unwrap_or_else(|| "64".to_string());
    let mut resolution: Vec<usize> = Vec::new();
    for part in resolution_text.split(',') {
        resolution.push(part.trim().parse::<usize>().map_err(|_| {
            Failure::Usage(format!("invalid resolution `{resolution_text}`"))
        })?);
    }
    if resolution.len() == 1 {
        resolution = vec![resolution[0]; dim];
    }
    if resolution.len() != dim {
        return Err(Failure::Usage(format!(
            "resolution lists {} axes but dim is {dim}",
            resolution.len()
        )));
    }

    let domain_text = merged(&grid.domain, &file, "domain", |s| Ok(s.to_string()))?
        .unwrap_or_else(|| "0:1".to_string());
    let mut ranges: Vec<(f64, f64)> = Vec::new();
    for part in domain_text.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("domain `{part}` must be lo:hi")))?;
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("invalid domain bound `{lo}`")))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("invalid domain bound `{hi}`")))?;
        ranges.push((lo, hi));
    }
    if ranges.len() == 1 {
        ranges = vec![ranges[0]; dim];
    }
    if ranges.len() != dim {
        return Err(Failure::Usage(format!(
            "domain lists {} axes but dim is {dim}",
            ranges.len()
        )));
    }

    Ok(GridSettings {
        resolution,
        lo: ranges.iter().map(|r| r.0).collect(),
        hi: ranges.iter().map(|r| r.1).collect(),
    })
}

pub fn parse_param_overrides(params: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    for spec in params {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--param `{spec}` must be NAME=VALUE")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--param `{spec}`: invalid number")))?;
        out.insert(name.trim().to_string(), value);
    }
    Ok(out)
}

/// Assemble a simulation plus evolution settings for `run`/`bench`.
pub fn build_simulation(
    compiled: &CompiledProgram,
    grid_args: &GridArgs,
    run: &RunArgs,
) -> Result<(Simulation, EvolutionConfig), Failure> {
    let settings = grid_settings(grid_args, compiled.dim)?;
    let ghost = compiled.max_radius().max(0) as usize;
    let grid = UniformGrid::periodic(&settings.resolution, &settings.lo, &settings.hi, ghost)
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let file = match &grid_args.config {
        Some(path) => file_values(path)?,
        None => BTreeMap::new(),
    };
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| e.to_string());
    let dt_flag = merged(&run.dt, &file, "dt", parse_f64)?;
    let cfl = merged(&run.cfl, &file, "cfl", parse_f64)?;
    let t_final = merged(&run.t_final, &file, "t-final", parse_f64)?.unwrap_or(0.0);
    let out_every = merged(&run.out_every, &file, "out-every", |s| {
        s.parse::<u64>().map_err(|e| e.to_string())
    })?
    .unwrap_or(1);

    let dt = match (dt_flag, cfl) {
        (Some(dt), _) => dt,
        (None, Some(cfl)) => cfl * grid.min_spacing(),
        (None, None) => 0.25 * grid.min_spacing(),
    };

    let mut overrides = parse_param_overrides(&run.params)?;
    for (key, value) in &file {
        if let Some(name) = key.strip_prefix("param.") {
            if !overrides.contains_key(name) {
                let value: f64 = value.parse().map_err(|_| {
                    Failure::Usage(format!("config `{key}`: invalid number `{value}`"))
                })?;
                overrides.insert(name.to_string(), value);
            }
        }
    }

    let mut sim = Simulation::new(compiled, grid, &overrides)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(workers) = run.workers {
        sim.workers = workers.max(1);
    }
    match merged(&run.tiles, &file, "tiles", |s| Ok(s.to_string()))?.as_deref() {
        None | Some("auto") => {
            // `auto` picks by the cache model; the default whole-interior
            // plan needs no tuning at all.
            if run.tiles.as_deref() == Some("auto") {
                if let Some(kernel) = sim.rhs_kernel(0) {
                    let kernel = kernel.clone();
                    let grid_copy = sim.grid.clone();
                    let opts = edlc::runtime::TuneOptions {
                        model_only: true,
                        ..Default::default()
                    };
                    let (plan, _) =
                        edlc::runtime::tune_tiles(&kernel, &mut sim.state, &grid_copy, None, &opts)
                            .map_err(|e| Failure::Usage(e.to_string()))?;
                    sim.plan = plan;
                }
            }
        }
        Some(text) => {
            sim.plan = TilePlan::parse(text).map_err(Failure::Usage)?;
        }
    }

    let mut evo = EvolutionConfig::new(dt, t_final);
    evo.output_every = out_every;
    evo.snapshot_dir = run.snapshot_dir.clone();
    Ok((sim, evo))
}
