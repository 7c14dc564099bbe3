//! Uniform-grid runtime: storage with periodic ghost zones, tiled kernel
//! sweeps, reductions, and RK4 method-of-lines time integration.

pub mod evolve;
pub mod exec;
pub mod grid;
pub mod presets;
pub mod reduce;
pub mod state;
pub mod tiles;

pub use evolve::{evolve, Diagnostics, EvolutionConfig, Simulation};
pub use exec::{apply_kernel, sync_ghosts_field, BoundKernel};
pub use grid::UniformGrid;
pub use reduce::{pairwise_sum, Reduction};
pub use state::{FieldRole, StateVector};
pub use tiles::{tune_tiles, CandidateReport, TilePlan, TuneOptions};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown grid function `{0}`")]
    UnknownFunction(String),
    #[error("unknown parameter `{name}`; declared parameters: {declared}")]
    UnknownParameter { name: String, declared: String },
    #[error("parameter `{0}` has no value and no default; pass --param {0}=VALUE")]
    MissingParameter(String),
    #[error("ghost width {ghost} is smaller than the stencil radius {radius}")]
    GhostTooSmall { ghost: usize, radius: i64 },
    #[error("non-finite value in `{field}` at step {step} (t = {time})")]
    NonFiniteDetected { field: String, step: u64, time: f64 },
    #[error("{0}")]
    Config(String),
}
