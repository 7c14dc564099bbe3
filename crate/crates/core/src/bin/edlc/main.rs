//! `edlc` — compile, inspect, and run EDL programs.
//!
//! Subcommands: `check`, `compile`, `run`, `bench`, `dump-ir`,
//! `stencil-table`. Diagnostics go to standard error as
//! `file:line:col: severity: message`; data goes to standard output.
//! Exit codes: 0 success, 1 diagnostics, 2 I/O errors.

mod config;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edlc::compile::{compile_source, dump_ir, CompileError, DumpStage};
use edlc::runtime::{evolve, presets, tune_tiles, TuneOptions};
use edlc::stencil::StencilOp;

use config::{build_options, build_simulation, GridArgs, RunArgs};

#[derive(Parser)]
#[command(
    name = "edlc",
    about = "Compiler and uniform-grid runtime for the EDL equation description language",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, resolve, and index-check a program.
    Check {
        file: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Compile a program and write the emitted module directory.
    Compile {
        file: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Output directory (the module lands in OUT/<module>/).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compile and evolve, writing CSV diagnostics.
    Run {
        file: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tile-size autotuning report for the RHS kernels.
    Bench {
        file: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Rank candidates by the cache model only (no timing).
        #[arg(long)]
        model_only: bool,
        /// Cache-size parameter for the model, in KiB.
        #[arg(long, default_value_t = 256)]
        cache_kb: usize,
        /// Parameter overrides needed to bind the kernels.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Print the IR at a pipeline stage.
    #[command(name = "dump-ir")]
    DumpIr {
        file: PathBuf,
        /// expanded | lowered | dce | cse | peephole | final
        #[arg(long)]
        stage: String,
        /// Restrict to one calculation.
        #[arg(long)]
        calc: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Print centered finite-difference coefficients as exact fractions.
    #[command(name = "stencil-table")]
    StencilTable {
        /// Derivative order d >= 1.
        #[arg(long, short = 'd')]
        deriv: u32,
        /// Stencil half-width w >= ceil(d/2).
        #[arg(long, short = 'w')]
        width: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Diagnostics) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    /// Unreadable input, unwritable output.
    Io(String),
    /// Already rendered to standard error.
    Diagnostics,
    Usage(String),
}

fn read_source(path: &PathBuf) -> Result<(String, String), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok((text, path.display().to_string()))
}

fn render_compile_error(err: CompileError, file: &str) -> Failure {
    match err {
        CompileError::Source(diags) => {
            for d in diags {
                eprintln!("{}", d.render(file));
            }
            Failure::Diagnostics
        }
        CompileError::Config(msg) => Failure::Usage(msg),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Check { file, grid } => {
            let (source, name) = read_source(&file)?;
            let opts = build_options(&grid)?;
            let compiled =
                compile_source(&source, &name, &opts).map_err(|e| render_compile_error(e, &name))?;
            for w in &compiled.warnings {
                eprintln!("{}", w.render(&name));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compile { file, grid, out } => {
            let (source, name) = read_source(&file)?;
            let opts = build_options(&grid)?;
            let compiled =
                compile_source(&source, &name, &opts).map_err(|e| render_compile_error(e, &name))?;
            for w in &compiled.warnings {
                eprintln!("{}", w.render(&name));
            }
            let module = edlc::codegen::emit_module(&compiled);
            let root = edlc::codegen::write_module(&module, &out)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", out.display())))?;
            // Pass summary to stderr, path to stdout.
            for kernel in &compiled.kernels {
                eprint!("{}", kernel.report.render(&kernel.ir.name));
            }
            println!("{}", root.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            file,
            grid,
            run,
            out,
        } => {
            let (source, name) = read_source(&file)?;
            let opts = build_options(&grid)?;
            let compiled =
                compile_source(&source, &name, &opts).map_err(|e| render_compile_error(e, &name))?;
            let (mut sim, evo) = build_simulation(&compiled, &grid, &run)?;
            match &run.init_preset {
                Some(preset) => {
                    presets::apply(&mut sim, preset).map_err(|e| Failure::Usage(e.to_string()))?
                }
                None => sim
                    .run_init()
                    .map_err(|e| Failure::Usage(e.to_string()))?,
            }
            let diags = evolve(&mut sim, &evo).map_err(|e| Failure::Usage(e.to_string()))?;
            let csv = diags.to_csv();
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout
                        .write_all(csv.as_bytes())
                        .map_err(|e| Failure::Io(e.to_string()))?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            file,
            grid,
            model_only,
            cache_kb,
            params,
        } => {
            let (source, name) = read_source(&file)?;
            let opts = build_options(&grid)?;
            let compiled =
                compile_source(&source, &name, &opts).map_err(|e| render_compile_error(e, &name))?;
            let run = RunArgs {
                params,
                ..Default::default()
            };
            let (mut sim, _) = build_simulation(&compiled, &grid, &run)?;
            let tune = TuneOptions {
                cache_bytes: cache_kb * 1024,
                model_only,
                workers: run.workers.unwrap_or(1),
                ..Default::default()
            };
            let rhs: Vec<String> = compiled
                .rhs_kernels()
                .iter()
                .map(|k| k.ir.name.clone())
                .collect();
            if rhs.is_empty() {
                return Err(Failure::Usage("program has no RHS kernels to bench".into()));
            }
            for (idx, kernel_name) in rhs.iter().enumerate() {
                let kernel = sim.rhs_kernel(idx).expect("indexed by enumeration").clone();
                let grid_copy = sim.grid.clone();
                let (chosen, reports) =
                    tune_tiles(&kernel, &mut sim.state, &grid_copy, None, &tune)
                        .map_err(|e| Failure::Usage(e.to_string()))?;
                println!("kernel {kernel_name}: chosen tiles {chosen}");
                println!(
                    "{:<16} {:>12} {:>6} {:>12} {}",
                    "tiles", "working-set", "fits", "measured-ms", "chosen"
                );
                for r in &reports {
                    let measured = r
                        .measured_ms
                        .map(|ms| format!("{ms:.3}"))
                        .unwrap_or_else(|| "-".to_string());
                    println!(
                        "{:<16} {:>12} {:>6} {:>12} {}",
                        r.plan.to_string(),
                        r.working_set,
                        if r.fits_cache { "yes" } else { "no" },
                        measured,
                        if r.chosen { "*" } else { "" }
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpIr {
            file,
            stage,
            calc,
            grid,
        } => {
            let (source, name) = read_source(&file)?;
            let stage = DumpStage::from_name(&stage)
                .ok_or_else(|| Failure::Usage(format!("unknown stage `{stage}`")))?;
            let opts = build_options(&grid)?;
            let text = dump_ir(&source, &name, &opts, stage, calc.as_deref())
                .map_err(|e| render_compile_error(e, &name))?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::StencilTable { deriv, width } => {
            let op = StencilOp::centered(deriv, width)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let row: Vec<String> = op
                .dense_row()
                .iter()
                .map(|c| {
                    if c.is_integer() {
                        c.numer().to_string()
                    } else {
                        format!("{}/{}", c.numer(), c.denom())
                    }
                })
                .collect();
            println!(
                "d={deriv} w={width} accuracy={} offsets {}..{} over h^{}",
                op.accuracy_order(),
                -op.radius(),
                op.radius(),
                op.spacing_power()
            );
            println!("{}", row.join(" "));
            println!("{}", op.print_shift_notation());
            Ok(ExitCode::SUCCESS)
        }
    }
}
