//! Shared helpers for the integration suites.

use std::collections::BTreeMap;

use edlc::compile::{compile_source, CompileOptions, CompiledProgram};
use edlc::ir::interp::{interpret, KernelEnv};
use edlc::ir::KernelIr;

pub const WAVE_SRC: &str = include_str!("../../../../fixtures/wave.edl");

pub fn compile_wave(dim: usize, half_width: Option<u32>) -> CompiledProgram {
    let opts = CompileOptions {
        dim,
        half_width,
        ..Default::default()
    };
    compile_source(WAVE_SRC, "wave.edl", &opts).expect("wave program compiles")
}

/// The raw (unoptimized) lowering of one wave calculation.
pub fn lowered_wave_kernel(calc: &str, dim: usize) -> KernelIr {
    let opts = CompileOptions {
        dim,
        passes: Vec::new(),
        ..Default::default()
    };
    let compiled = compile_source(WAVE_SRC, "wave.edl", &opts).expect("wave program compiles");
    compiled.kernels_for_calc(calc)[0].ir.clone()
}

/// Simple deterministic PRNG (splitmix64) so the suites don't need to agree
/// on a rand version; returns values in (-1, 1).
pub struct Rng(pub u64);

impl Rng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }

    pub fn usize(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }
}

/// Random environment covering every input `k` reads.
pub fn random_env_for(k: &KernelIr, rng: &mut Rng) -> KernelEnv {
    edlc::ir::interp::random_env(k, &mut || rng.f64())
}

/// Relative agreement within `tol` on every output of both kernels.
pub fn outputs_agree(a: &KernelIr, b: &KernelIr, env: &KernelEnv, tol: f64) -> Result<(), String> {
    let out_a = interpret(a, env).map_err(|e| e.to_string())?;
    let out_b = interpret(b, env).map_err(|e| e.to_string())?;
    if out_a.len() != out_b.len() {
        return Err(format!("output sets differ: {out_a:?} vs {out_b:?}"));
    }
    for (field, va) in &out_a {
        let vb = out_b
            .get(field)
            .ok_or_else(|| format!("missing output {field}"))?;
        let scale = va.abs().max(vb.abs()).max(1.0);
        if (va - vb).abs() > tol * scale {
            return Err(format!("{field}: {va} vs {vb} (relative {})", (va - vb).abs() / scale));
        }
    }
    Ok(())
}
