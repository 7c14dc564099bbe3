//! Built-in initial-data presets for validation runs.

use crate::runtime::{RuntimeError, Simulation};

/// Names of the available presets.
pub const PRESETS: &[&str] = &["plane-wave"];

/// Apply a preset by name instead of running the program's init
/// calculation.
pub fn apply(sim: &mut Simulation, name: &str) -> Result<(), RuntimeError> {
    match name {
        "plane-wave" => plane_wave(sim),
        other => Err(RuntimeError::Config(format!(
            "unknown preset `{other}`; available: {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Right-moving plane wave for the first-order scalar wave system in one
/// dimension: u = sin(x - t), rho = -cos(x - t), v1 = cos(x - t) at t = 0.
/// Exact on a periodic domain of length 2*pi.
pub fn plane_wave(sim: &mut Simulation) -> Result<(), RuntimeError> {
    if sim.grid.dim != 1 {
        return Err(RuntimeError::Config(
            "the plane-wave preset is one-dimensional".into(),
        ));
    }
    sim.set_field("u", |x| x[0].sin())?;
    sim.set_field("rho", |x| -x[0].cos())?;
    sim.set_field("v1", |x| x[0].cos())?;
    Ok(())
}

/// The plane wave at time `t`, for error measurement.
pub fn plane_wave_exact(x: f64, t: f64) -> (f64, f64, f64) {
    ((x - t).sin(), -(x - t).cos(), (x - t).cos())
}
