//! Runtime integration tests: sweeps, RK4, reductions, and evolution.

use std::collections::BTreeMap;

use edlc::compile::{compile_source, CompileOptions};
use edlc::runtime::reduce::interior_values;
use edlc::runtime::{
    apply_kernel, evolve, presets, EvolutionConfig, Reduction, Simulation, TilePlan, UniformGrid,
};

const WAVE_SRC: &str = include_str!("../../../fixtures/wave.edl");

fn wave_sim(dim: usize, n: usize, order: u32, params: &[(&str, f64)]) -> Simulation {
    let opts = CompileOptions {
        dim,
        half_width: Some(order / 2),
        ..Default::default()
    };
    let compiled = compile_source(WAVE_SRC, "wave.edl", &opts).unwrap();
    let ghost = compiled.max_radius().max(1) as usize;
    let tau = std::f64::consts::TAU;
    let grid = UniformGrid::periodic(
        &vec![n; dim],
        &vec![-std::f64::consts::PI; dim],
        &vec![tau - std::f64::consts::PI; dim],
        ghost,
    )
    .unwrap();
    let overrides: BTreeMap<String, f64> =
        params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Simulation::new(&compiled, grid, &overrides).unwrap()
}

#[test]
fn init_kernel_sets_the_gaussian_peak() {
    let mut sim = wave_sim(1, 64, 2, &[("A", 1.0), ("W", 1.0)]);
    sim.run_init().unwrap();
    // Domain [-pi, pi): x = 0 is interior point n/2.
    let rho = sim.field_interior("rho").unwrap();
    assert_eq!(rho[32], 1.0);
    let linf = sim.reduce("rho", Reduction::Linf).unwrap();
    assert_eq!(linf, 1.0);
    // u and v1 start at zero.
    assert_eq!(sim.reduce("u", Reduction::Linf).unwrap(), 0.0);
    assert_eq!(sim.reduce("v1", Reduction::Linf).unwrap(), 0.0);
}

#[test]
fn amplitude_parameter_scales_the_initial_data() {
    let mut sim = wave_sim(1, 64, 2, &[("A", 2.0), ("W", 0.5)]);
    sim.run_init().unwrap();
    assert_eq!(sim.reduce("rho", Reduction::Linf).unwrap(), 2.0);
}

#[test]
fn unknown_parameter_lists_declared_names() {
    let opts = CompileOptions::with_dim(1);
    let compiled = compile_source(WAVE_SRC, "wave.edl", &opts).unwrap();
    let grid = UniformGrid::periodic(&[16], &[0.0], &[1.0], 1).unwrap();
    let overrides: BTreeMap<String, f64> = [("Q".to_string(), 1.0)].into_iter().collect();
    let err = Simulation::new(&compiled, grid, &overrides).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("`Q`"), "{message}");
    assert!(message.contains("A, W"), "{message}");
}

#[test]
fn centered_difference_is_exact_on_linears() {
    // With rho = x the gradient RHS must give dt_v1 = 1 at every interior
    // point (centered differences are exact on degree-1 polynomials).
    let mut sim = wave_sim(1, 32, 2, &[("A", 1.0), ("W", 1.0)]);
    sim.set_field("rho", |x| x[0]).unwrap();
    sim.set_field("u", |_| 0.0).unwrap();
    sim.set_field("v1", |_| 0.0).unwrap();
    // A zero-length step evaluates the RHS but leaves the state alone.
    sim.rk4_step(0.0).unwrap();
    // The periodic wrap breaks linearity at the edges, so check only
    // points away from the boundary.
    let dt_v1 = sim.field_interior("dt_v1").unwrap();
    for (i, v) in dt_v1.iter().enumerate().take(31).skip(1) {
        assert!((v - 1.0).abs() < 1e-12, "point {i}: {v}");
    }
}

#[test]
fn rk4_matches_exponential_decay() {
    // Synthetic system du/dt = -u integrated from u0 = 1 over t = 1 in ten
    // steps. The oracle is the exact solution exp(-1); classical RK4 with
    // dt = 0.1 lands 3.33e-7 above it (measured against the oracle, global
    // truncation O(dt^4)), so assert within 5e-7.
    let src = "begin group Evolved\n  u: \"u\"\nend group\n\
               begin calculation Init\n  u = 1\nend calculation Init\n\
               begin calculation RHS\n  D_t u = -u\nend calculation RHS\n";
    let compiled = compile_source(src, "decay.edl", &CompileOptions::with_dim(1)).unwrap();
    let grid = UniformGrid::periodic(&[8], &[0.0], &[1.0], 0).unwrap();
    let mut sim = Simulation::new(&compiled, grid, &BTreeMap::new()).unwrap();
    sim.run_init().unwrap();
    for _ in 0..10 {
        sim.rk4_step(0.1).unwrap();
    }
    let u = sim.field_interior("u").unwrap();
    let exact = (-1.0f64).exp();
    for v in u {
        assert!((v - exact).abs() < 5e-7, "u = {v}, exact = {exact}");
    }
    assert!((sim.time() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_rhs_leaves_the_state_bitwise_unchanged() {
    let src = "begin group Evolved\n  u: \"u\"\nend group\n\
               begin calculation Init\n  u = 0\nend calculation Init\n\
               begin calculation RHS\n  D_t u = 0\nend calculation RHS\n";
    let compiled = compile_source(src, "frozen.edl", &CompileOptions::with_dim(1)).unwrap();
    let grid = UniformGrid::periodic(&[16], &[0.0], &[1.0], 0).unwrap();
    let mut sim = Simulation::new(&compiled, grid, &BTreeMap::new()).unwrap();
    sim.set_field("u", |x| 1.0 + x[0] * 0.37).unwrap();
    let before = sim.field_interior("u").unwrap();
    for _ in 0..5 {
        sim.rk4_step(0.25).unwrap();
    }
    let after = sim.field_interior("u").unwrap();
    assert_eq!(
        before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn plane_wave_returns_after_one_period() {
    let opts = CompileOptions {
        dim: 1,
        half_width: Some(1),
        ..Default::default()
    };
    let compiled = compile_source(WAVE_SRC, "wave.edl", &opts).unwrap();
    let tau = std::f64::consts::TAU;
    let n = 128;
    let grid = UniformGrid::periodic(&[n], &[0.0], &[tau], 1).unwrap();
    let mut sim = Simulation::new(&compiled, grid, &BTreeMap::new()).unwrap();
    presets::apply(&mut sim, "plane-wave").unwrap();
    let before = sim.field_interior("rho").unwrap();
    let dt = 0.25 * tau / n as f64;
    let steps = (tau / dt).round() as usize;
    for _ in 0..steps {
        sim.rk4_step(dt).unwrap();
    }
    let after = sim.field_interior("rho").unwrap();
    let err: f64 = before
        .iter()
        .zip(&after)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    // Second-order scheme at n = 128: the profile returns to itself within
    // the truncation error.
    assert!(err < 5e-3, "max drift over one period: {err}");
}

#[test]
fn nan_injection_is_detected_with_field_and_step() {
    let mut sim = wave_sim(1, 32, 2, &[("A", 1.0), ("W", 0.5)]);
    sim.run_init().unwrap();
    sim.rk4_step(0.01).unwrap();
    // Poison one interior point of v1.
    let grid = sim.grid.clone();
    let data = sim.state.data_mut("v1").unwrap();
    let idx = grid.linear(&[7]);
    data[idx] = f64::NAN;
    let err = sim.rk4_step(0.01).unwrap_err();
    match err {
        edlc::runtime::RuntimeError::NonFiniteDetected { field, step, .. } => {
            assert_eq!(field, "v1");
            assert_eq!(step, 2);
        }
        other => panic!("expected NonFiniteDetected, got {other}"),
    }
}

#[test]
fn tile_plans_and_workers_do_not_change_results() {
    let mut sim = wave_sim(2, 24, 2, &[("A", 1.0), ("W", 0.8)]);
    sim.run_init().unwrap();
    let opts = CompileOptions {
        dim: 2,
        half_width: Some(1),
        ..Default::default()
    };
    let compiled = compile_source(WAVE_SRC, "wave.edl", &opts).unwrap();
    let rhs_ir = &compiled.rhs_kernels()[0].ir;
    let bound = edlc::runtime::BoundKernel::bind(rhs_ir, &sim.grid, &BTreeMap::new()).unwrap();

    let reference = {
        let grid = sim.grid.clone();
        apply_kernel(&bound, &mut sim.state, &grid, &TilePlan::whole(&grid), 1, 0.0).unwrap();
        sim.field_interior("dt_rho").unwrap()
    };
    for plan in [
        TilePlan { extents: vec![24, 1] },
        TilePlan { extents: vec![5, 3] },
        TilePlan { extents: vec![24, 7] },
        TilePlan { extents: vec![1, 24] },
    ] {
        for workers in [1usize, 4] {
            let grid = sim.grid.clone();
            apply_kernel(&bound, &mut sim.state, &grid, &plan, workers, 0.0).unwrap();
            let got = sim.field_interior("dt_rho").unwrap();
            assert_eq!(
                reference.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                "plan {plan}, workers {workers}"
            );
        }
    }
}

#[test]
fn evolve_with_zero_final_time_emits_one_record() {
    let mut sim = wave_sim(1, 32, 2, &[("A", 1.0), ("W", 0.5)]);
    sim.run_init().unwrap();
    let diags = evolve(&mut sim, &EvolutionConfig::new(0.1, 0.0)).unwrap();
    assert_eq!(diags.rows.len(), 1);
    assert_eq!(diags.rows[0][0], 0.0);
    // Columns: per-component L2/Linf plus energy.
    assert_eq!(diags.columns.last().unwrap(), "energy");
}

#[test]
fn evolve_records_monotone_time() {
    let mut sim = wave_sim(1, 32, 2, &[("A", 1.0), ("W", 0.5)]);
    sim.run_init().unwrap();
    let mut config = EvolutionConfig::new(0.05, 1.0);
    config.output_every = 4;
    let diags = evolve(&mut sim, &config).unwrap();
    let times: Vec<f64> = diags.rows.iter().map(|r| r[0]).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]), "{times:?}");
    assert!((times.last().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn analysis_runs_at_records_and_energy_is_positive() {
    let mut sim = wave_sim(1, 64, 2, &[("A", 1.0), ("W", 0.5)]);
    sim.run_init().unwrap();
    let diags = evolve(&mut sim, &EvolutionConfig::new(0.01, 0.1)).unwrap();
    let energy_col = diags.columns.iter().position(|c| c == "energy").unwrap() + 1;
    for row in &diags.rows {
        assert!(row[energy_col] > 0.0);
    }
}

#[test]
fn interior_values_match_set_field() {
    let mut sim = wave_sim(2, 16, 2, &[("A", 1.0), ("W", 0.5)]);
    sim.set_field("u", |x| x[0] + 10.0 * x[1]).unwrap();
    let values = interior_values(sim.state.data("u").unwrap(), &sim.grid);
    assert_eq!(values.len(), 16 * 16);
    let x0 = sim.grid.coord(0, 3);
    let y0 = sim.grid.coord(1, 5);
    assert_eq!(values[3 + 16 * 5], x0 + 10.0 * y0);
}
