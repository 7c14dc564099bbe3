//! End-to-end tests of the `edlc` binary: exit codes, stream discipline,
//! determinism, and diagnostics quality on malformed programs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn edlc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edlc"))
}

fn wave_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/wave.edl")
}

fn run(args: &[&str]) -> Output {
    edlc().args(args).output().expect("edlc runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn check_accepts_the_wave_program_silently() {
    let out = run(&["check", wave_path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    assert!(stderr(&out).is_empty());
}

#[test]
fn check_rejects_missing_files_with_exit_2() {
    let out = run(&["check", "no/such/file.edl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn check_reports_diagnostics_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.edl");
    std::fs::write(
        &path,
        "begin group Evolved\n  rho: \"r\"\n  v_i: \"v\"\nend group\n\
         begin calculation C\n  D_t rho = v_i\nend calculation C\n",
    )
    .unwrap();
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("bad.edl:6:"), "{err}");
    assert!(err.contains("free indices"), "{err}");
}

#[test]
fn dump_ir_rejects_unknown_stage() {
    let out = run(&[
        "dump-ir",
        wave_path().to_str().unwrap(),
        "--stage",
        "bogus",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown stage"));
}

#[test]
fn dump_ir_stages_show_the_pipeline() {
    let wave = wave_path();
    let wave = wave.to_str().unwrap();
    let lowered = run(&["dump-ir", wave, "--stage", "lowered", "--calc", "RHS"]);
    assert_eq!(lowered.status.code(), Some(0));
    assert!(stdout(&lowered).contains("load v1 @ [1]"));
    assert!(stdout(&lowered).contains("load v1 @ [-1]"));
    let final_ = run(&["dump-ir", wave, "--stage", "final", "--calc", "RHS"]);
    assert_eq!(final_.status.code(), Some(0));
    // Repeated dumps are byte-identical.
    let again = run(&["dump-ir", wave, "--stage", "final", "--calc", "RHS"]);
    assert_eq!(stdout(&final_), stdout(&again));
}

#[test]
fn compile_writes_a_module_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "compile",
        wave_path().to_str().unwrap(),
        "--dim",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let root = out_dir.join("wave");
    assert!(root.join("manifest").is_file());
    assert!(root.join("README").is_file());
    for kernel in ["Init", "RHS", "Energy"] {
        assert!(root.join("kernels").join(format!("{kernel}.src")).is_file());
    }
    // The pass summary goes to stderr, the module path to stdout.
    assert!(stdout(&out).trim().ends_with("wave"));
    assert!(stderr(&out).contains("peephole"));
}

#[test]
fn compile_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = run(&[
            "compile",
            wave_path().to_str().unwrap(),
            "--dim",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["manifest", "README", "kernels/RHS.src", "kernels/Init.src"] {
        let fa = std::fs::read(a.join("wave").join(file)).unwrap();
        let fb = std::fs::read(b.join("wave").join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs between runs");
    }
}

#[test]
fn fission_splits_kernel_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "compile",
        wave_path().to_str().unwrap(),
        "--dim",
        "3",
        "--fission",
        "RHS:dt_u,dt_rho|dt_v1,dt_v2,dt_v3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let kernels = out_dir.join("wave").join("kernels");
    let mut names: Vec<String> = std::fs::read_dir(&kernels)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec!["Energy.src", "Init.src", "RHS_1.src", "RHS_2.src"]
    );
}

#[test]
fn run_with_zero_final_time_prints_one_row() {
    let out = run(&[
        "run",
        wave_path().to_str().unwrap(),
        "--dim",
        "1",
        "--resolution",
        "32",
        "--t-final",
        "0",
        "--param",
        "A=1",
        "--param",
        "W=0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("t,"));
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn run_amplitude_override_scales_initial_linf() {
    let out = run(&[
        "run",
        wave_path().to_str().unwrap(),
        "--dim",
        "1",
        "--resolution",
        "64",
        "--domain",
        "-3.141592653589793:3.141592653589793",
        "--t-final",
        "0",
        "--param",
        "A=2",
        "--param",
        "W=0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|c| *c == "rho_Linf").unwrap();
    let linf: f64 = row[col].parse().unwrap();
    assert_eq!(linf, 2.0);
}

#[test]
fn run_rejects_unknown_parameters_naming_declared_ones() {
    let out = run(&[
        "run",
        wave_path().to_str().unwrap(),
        "--dim",
        "1",
        "--t-final",
        "0",
        "--param",
        "Q=1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("unknown parameter `Q`"), "{err}");
    assert!(err.contains("A, W"), "{err}");
}

#[test]
fn run_is_deterministic_and_preset_driven() {
    let wave = wave_path();
    let args = [
        "run",
        wave.to_str().unwrap(),
        "--dim",
        "1",
        "--resolution",
        "64",
        "--domain",
        "0:6.283185307179586",
        "--cfl",
        "0.25",
        "--t-final",
        "0.5",
        "--init-preset",
        "plane-wave",
        "--out-every",
        "8",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    // Time column is strictly monotone.
    let text = stdout(&a);
    let times: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]), "{times:?}");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        "dim = 1\nresolution = 16\nt-final = 0\nparam.A = 3\nparam.W = 0.5\n",
    )
    .unwrap();
    let out = run(&[
        "run",
        wave_path().to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // Flag overrides the config's amplitude.
    let out2 = run(&[
        "run",
        wave_path().to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--param",
        "A=5",
    ]);
    let linf_of = |o: &Output| -> f64 {
        let text = stdout(o);
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let col = header.iter().position(|c| *c == "rho_Linf").unwrap();
        row[col].parse().unwrap()
    };
    assert_eq!(linf_of(&out), 3.0);
    assert_eq!(linf_of(&out2), 5.0);
}

#[test]
fn bench_model_only_is_deterministic() {
    let wave = wave_path();
    let args = [
        "bench",
        wave.to_str().unwrap(),
        "--dim",
        "2",
        "--resolution",
        "32",
        "--model-only",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("chosen tiles"));
}

#[test]
fn bench_small_grid_chooses_the_whole_interior() {
    let out = run(&[
        "bench",
        wave_path().to_str().unwrap(),
        "--dim",
        "2",
        "--resolution",
        "16",
        "--model-only",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("chosen tiles 16,16"), "{}", stdout(&out));
}

#[test]
fn stencil_table_prints_published_rows() {
    let out = run(&["stencil-table", "-d", "2", "-w", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("1 -2 1"), "{}", stdout(&out));
    let out = run(&["stencil-table", "-d", "1", "-w", "1"]);
    assert!(stdout(&out).contains("-1/2 0 1/2"), "{}", stdout(&out));
    let out = run(&["stencil-table", "-d", "1", "-w", "2"]);
    assert!(
        stdout(&out).contains("1/12 -2/3 0 2/3 -1/12"),
        "{}",
        stdout(&out)
    );
    // Infeasible pair.
    let out = run(&["stencil-table", "-d", "3", "-w", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn snapshots_are_written_with_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let snaps = dir.path().join("snaps");
    let out = run(&[
        "run",
        wave_path().to_str().unwrap(),
        "--dim",
        "1",
        "--resolution",
        "16",
        "--t-final",
        "0",
        "--param",
        "A=1",
        "--param",
        "W=0.5",
        "--snapshot-dir",
        snaps.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bin = snaps.join("rho_step00000000.bin");
    let txt = snaps.join("rho_step00000000.txt");
    assert!(bin.is_file() && txt.is_file());
    let bytes = std::fs::read(&bin).unwrap();
    assert_eq!(bytes.len(), 16 * 8);
    let header = std::fs::read_to_string(&txt).unwrap();
    assert!(header.contains("extents: 16"), "{header}");
    assert!(header.contains("little-endian"), "{header}");
}
