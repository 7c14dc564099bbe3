//! Golden-file tests: emitted output is byte-stable across runs and
//! platforms. Regenerate with `UPDATE_GOLDEN=1 cargo test -p edlc --test
//! golden` after an intentional emission change.

mod common;

use std::path::PathBuf;

use common::compile_wave;
use edlc::codegen::emit_module;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check(name: &str, content: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, content).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    assert_eq!(
        expected,
        content,
        "emitted output drifted from {}",
        path.display()
    );
}

#[test]
fn wave_dim1_order2_module() {
    let module = emit_module(&compile_wave(1, Some(1)));
    check("wave_dim1_order2/manifest", &module.manifest);
    check("wave_dim1_order2/README", &module.readme);
    for (name, source) in &module.kernels {
        check(&format!("wave_dim1_order2/kernels/{name}.src"), source);
    }
}

#[test]
fn wave_dim1_order4_rhs_kernel() {
    let module = emit_module(&compile_wave(1, Some(2)));
    let rhs = module
        .kernels
        .iter()
        .find(|(name, _)| name == "RHS")
        .expect("RHS kernel");
    check("wave_dim1_order4/RHS.src", &rhs.1);
}

#[test]
fn wave_dim3_order2_rhs_kernel() {
    let module = emit_module(&compile_wave(3, Some(1)));
    let rhs = module
        .kernels
        .iter()
        .find(|(name, _)| name == "RHS")
        .expect("RHS kernel");
    check("wave_dim3_order2/RHS.src", &rhs.1);
}

#[test]
fn dump_ir_final_is_stable() {
    use edlc::compile::{dump_ir, CompileOptions, DumpStage};
    let text = dump_ir(
        common::WAVE_SRC,
        "wave.edl",
        &CompileOptions::with_dim(1),
        DumpStage::Final,
        None,
    )
    .unwrap();
    check("wave_dim1_order2/final.ir", &text);
}
