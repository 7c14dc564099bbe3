//! Reference interpreter for kernel IR.
//!
//! Evaluates a kernel body on one point's worth of inputs with IEEE double
//! semantics. This is the oracle against which every optimization pass is
//! differentially tested; `Mad` evaluates as `a * b + c` with two roundings.

use std::collections::{BTreeMap, HashMap};

use num::ToPrimitive;
use thiserror::Error;

use crate::expand::CoordRef;
use crate::ir::{KernelIr, Op};

#[derive(Debug, Error, PartialEq)]
pub enum InterpError {
    #[error("missing input: {0}")]
    MissingInput(String),
}

/// One point's inputs: grid reads, parameter values, and coordinates.
#[derive(Debug, Clone, Default)]
pub struct KernelEnv {
    pub loads: HashMap<(String, Vec<i64>), f64>,
    pub params: HashMap<String, f64>,
    /// Spatial coordinates of the point (unused axes ignored).
    pub coords: [f64; 3],
    pub time: f64,
}

impl KernelEnv {
    pub fn load(&mut self, field: &str, offsets: &[i64], value: f64) -> &mut Self {
        self.loads.insert((field.to_string(), offsets.to_vec()), value);
        self
    }

    pub fn param(&mut self, name: &str, value: f64) -> &mut Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

/// Evaluate `k` on `env`, returning each output's value.
pub fn interpret(k: &KernelIr, env: &KernelEnv) -> Result<BTreeMap<String, f64>, InterpError> {
    let mut values = vec![0.0f64; k.body.len()];
    for (i, op) in k.body.iter().enumerate() {
        values[i] = match op {
            Op::Const(c) => c.to_f64().expect("rational fits in f64"),
            Op::Param(p) => *require(env.params.get(p), || format!("parameter `{p}`"))?,
            Op::Coord(CoordRef::Axis(a)) => env.coords[*a as usize],
            Op::Coord(CoordRef::Time) => env.time,
            Op::Load { field, offsets } => {
                *require(env.loads.get(&(field.clone(), offsets.clone())), || {
                    let offs: Vec<String> = offsets.iter().map(|o| o.to_string()).collect();
                    format!("load `{field}` at [{}]", offs.join(","))
                })?
            }
            Op::Neg(a) => -values[*a],
            Op::Add(a, b) => values[*a] + values[*b],
            Op::Sub(a, b) => values[*a] - values[*b],
            Op::Mul(a, b) => values[*a] * values[*b],
            Op::Div(a, b) => values[*a] / values[*b],
            Op::Pow(a, n) => values[*a].powi(*n),
            Op::Call(f, a) => f.eval(values[*a]),
            Op::Mad(a, b, c) => values[*a] * values[*b] + values[*c],
        };
    }
    Ok(k.outputs
        .iter()
        .map(|(field, vid)| (field.clone(), values[*vid]))
        .collect())
}

fn require<'v>(
    value: Option<&'v f64>,
    describe: impl FnOnce() -> String,
) -> Result<&'v f64, InterpError> {
    value.ok_or_else(|| InterpError::MissingInput(describe()))
}

/// Populate an environment with deterministic pseudo-random values for every
/// input a kernel reads; used by differential tests.
pub fn random_env(k: &KernelIr, rng: &mut impl FnMut() -> f64) -> KernelEnv {
    let mut env = KernelEnv::default();
    for (field, offsets) in k.reads() {
        env.loads.insert((field, offsets), rng());
    }
    for p in k.params() {
        // Spacing-like parameters stay away from zero: they divide.
        let v = rng();
        env.params.insert(p, 0.5 + v.abs());
    }
    env.coords = [rng(), rng(), rng()];
    env.time = rng().abs();
    env
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{KernelBuilder, KernelIr, Op};
    use num::BigRational;

    fn wave_rhs_dim1() -> KernelIr {
        use crate::frontend::{parse_source, resolve, DEFAULT_INIT_CALC};
        use crate::stencil::{build_table, derivative_needs};
        let src = include_str!("../../../../fixtures/wave.edl");
        let program = resolve(parse_source(src, "wave.edl").unwrap(), DEFAULT_INIT_CALC).unwrap();
        let (decl, _) = program.calculation("RHS").unwrap();
        let assignments = crate::expand::expand_calculation(decl, &program, 1).unwrap();
        let needs = derivative_needs(&assignments);
        let table = build_table(&program, &needs, 1, None, &mut Vec::new()).unwrap();
        crate::ir::lower::lower("RHS", &assignments, &table, 1).unwrap()
    }

    #[test]
    fn centered_difference_by_hand() {
        let k = wave_rhs_dim1();
        let mut env = KernelEnv::default();
        env.load("v1", &[1], 2.0)
            .load("v1", &[-1], 0.0)
            .load("rho", &[0], 0.0)
            .load("rho", &[1], 0.0)
            .load("rho", &[-1], 0.0)
            .param("dx", 1.0);
        let out = interpret(&k, &env).unwrap();
        // (2 - 0) / (2 * 1)
        assert_eq!(out["dt_rho"], 1.0);
    }

    #[test]
    fn gaussian_amplitude_at_origin() {
        use crate::frontend::{parse_source, resolve, DEFAULT_INIT_CALC};
        use crate::stencil::build_table;
        let src = include_str!("../../../../fixtures/wave.edl");
        let program = resolve(parse_source(src, "wave.edl").unwrap(), DEFAULT_INIT_CALC).unwrap();
        let (decl, _) = program.calculation("Init").unwrap();
        let assignments = crate::expand::expand_calculation(decl, &program, 1).unwrap();
        let table = build_table(&program, &Default::default(), 1, None, &mut Vec::new()).unwrap();
        let k = crate::ir::lower::lower("Init", &assignments, &table, 1).unwrap();
        let mut env = KernelEnv::default();
        env.param("A", 1.0).param("W", 1.0);
        env.coords = [0.0, 0.0, 0.0];
        let out = interpret(&k, &env).unwrap();
        // exp(0) at the origin
        assert_eq!(out["rho"], 1.0);
        assert_eq!(out["u"], 0.0);
    }

    #[test]
    fn empty_kernel_yields_empty_outputs() {
        let k = KernelIr {
            name: "empty".into(),
            dim: 1,
            body: vec![],
            outputs: vec![],
        };
        assert!(interpret(&k, &KernelEnv::default()).unwrap().is_empty());
    }

    #[test]
    fn missing_input_is_reported() {
        let mut b = KernelBuilder::default();
        let a = b.push(Op::Param("A".into()));
        let k = KernelIr {
            name: "k".into(),
            dim: 1,
            body: b.body,
            outputs: vec![("out".into(), a)],
        };
        let err = interpret(&k, &KernelEnv::default()).unwrap_err();
        assert_eq!(err, InterpError::MissingInput("parameter `A`".into()));
    }

    #[test]
    fn mad_is_multiply_add() {
        let mut b = KernelBuilder::default();
        let two = b.push(Op::Const(BigRational::from_integer(2.into())));
        let three = b.push(Op::Const(BigRational::from_integer(3.into())));
        let four = b.push(Op::Const(BigRational::from_integer(4.into())));
        let mad = b.push(Op::Mad(two, three, four));
        let k = KernelIr {
            name: "k".into(),
            dim: 1,
            body: b.body,
            outputs: vec![("out".into(), mad)],
        };
        assert_eq!(interpret(&k, &KernelEnv::default()).unwrap()["out"], 10.0);
    }
}
