//! edlc: a compiler and uniform-grid runtime for EDL, a small equation
//! description language for systems of PDEs.
//!
//! The pipeline:
//!
//! 1. [`frontend`] — tokenize, parse, and resolve an EDL file into a
//!    validated program with spanned diagnostics.
//! 2. [`expand`] — check Einstein index usage and expand tensor equations
//!    into per-component scalar assignments.
//! 3. [`stencil`] — finite-difference operators of arbitrary order with
//!    exact rational coefficients.
//! 4. [`ir`] — lower assignments into straight-line kernel IR and run the
//!    optimization passes (dead-code elimination, CSE, peephole rewrites,
//!    kernel fission/fusion).
//! 5. [`codegen`] — emit portable loop source and a module manifest.
//! 6. [`runtime`] — execute kernels on a uniform periodic grid with tiled
//!    sweeps and RK4 method-of-lines integration.
//!
//! [`compile`] ties 1–4 together behind one call; the `edlc` binary adds the
//! command-line surface.

pub mod codegen;
pub mod compile;
pub mod diag;
pub mod expand;
pub mod frontend;
pub mod ir;
pub mod runtime;
pub mod span;
pub mod stencil;

pub use compile::{compile_source, CompileOptions, CompiledProgram};
pub use diag::{DiagCode, Diagnostic, Severity};
pub use span::SourceSpan;
