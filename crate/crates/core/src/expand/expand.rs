//! Expansion of tensor equations into per-component scalar assignments.
//!
//! Free index letters range over `1..=dim`, one assignment per combination;
//! every contracted pair becomes a sum of `dim` terms at the node where it
//! is bound. Kronecker deltas evaluate to 0/1 and are folded away on the
//! spot, and the radial coordinate `r` is rewritten to
//! `sqrt(x*x + y*y + z*z)` over the active axes.

use std::collections::{BTreeMap, BTreeSet};

use num::ToPrimitive;

use crate::diag::{DiagCode, DiagResult, Diagnostic};
use crate::expand::indices::check_indices;
use crate::expand::{component_name, ComponentAssignment, CoordRef, Func, ScalarExpr};
use crate::frontend::ast::{BinOp, CalculationDecl, Equation, Expr, ExprKind};
use crate::frontend::resolve::Program;
use crate::span::SourceSpan;

type Binding = BTreeMap<char, u8>;

struct Ctx<'a> {
    program: &'a Program,
    dim: usize,
}

/// Expand one equation into `dim^f` component assignments, `f` being the
/// number of free index letters.
pub fn expand_equation(
    eq: &Equation,
    program: &Program,
    dim: usize,
) -> DiagResult<Vec<ComponentAssignment>> {
    assert!((1..=3).contains(&dim), "dim must be 1..=3");
    check_indices(eq)?;
    let ctx = Ctx { program, dim };

    let letters: Vec<char> = eq.target.indices.iter().map(|s| s.letter).collect();
    let mut out = Vec::new();
    for assignment in enumerate_axes(letters.len(), dim) {
        let binding: Binding = letters.iter().copied().zip(assignment.iter().copied()).collect();
        let rhs = instantiate(&eq.rhs, &binding, &ctx)?;
        out.push(ComponentAssignment {
            var: eq.target.name.text.clone(),
            components: assignment,
            time_deriv: eq.time_deriv,
            rhs,
            span: eq.span,
        });
    }
    Ok(out)
}

/// Expand every equation of a calculation, preserving source order, and
/// reject duplicate component-level targets.
pub fn expand_calculation(
    calc: &CalculationDecl,
    program: &Program,
    dim: usize,
) -> DiagResult<Vec<ComponentAssignment>> {
    let mut out: Vec<ComponentAssignment> = Vec::new();
    let mut seen: BTreeMap<String, SourceSpan> = BTreeMap::new();
    for eq in &calc.equations {
        for assignment in expand_equation(eq, program, dim)? {
            let target = assignment.output_field();
            if seen.insert(target.clone(), assignment.span).is_some() {
                return Err(Diagnostic::error(
                    DiagCode::DuplicateComponentTarget,
                    assignment.span,
                    format!(
                        "component `{target}` is assigned more than once in calculation `{}`",
                        calc.name.text
                    ),
                ));
            }
            out.push(assignment);
        }
    }
    Ok(out)
}

/// Row-major enumeration of `count` letters over axes `1..=dim`.
fn enumerate_axes(count: usize, dim: usize) -> Vec<Vec<u8>> {
    let mut combos = vec![Vec::new()];
    for _ in 0..count {
        let mut next = Vec::with_capacity(combos.len() * dim);
        for combo in &combos {
            for axis in 1..=dim as u8 {
                let mut c = combo.clone();
                c.push(axis);
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

fn instantiate(expr: &Expr, binding: &Binding, ctx: &Ctx) -> DiagResult<ScalarExpr> {
    match &expr.kind {
        ExprKind::Number(n) => Ok(ScalarExpr::Const(n.clone())),
        ExprKind::Var(..) | ExprKind::Delta(..) | ExprKind::Deriv { .. } => {
            instantiate_leaf(expr, binding, ctx)
        }
        ExprKind::Neg(a) => Ok(neg(instantiate(a, binding, ctx)?)),
        ExprKind::Call(name, a) => {
            let func = Func::from_name(name).expect("parser admits built-in functions only");
            Ok(ScalarExpr::Call(func, Box::new(instantiate(a, binding, ctx)?)))
        }
        ExprKind::Pow(a, n) => Ok(ScalarExpr::Pow(Box::new(instantiate(a, binding, ctx)?), *n)),
        ExprKind::Bin(BinOp::Add, a, b) => Ok(ScalarExpr::add(
            instantiate(a, binding, ctx)?,
            instantiate(b, binding, ctx)?,
        )),
        ExprKind::Bin(BinOp::Sub, a, b) => {
            let lhs = instantiate(a, binding, ctx)?;
            let rhs = instantiate(b, binding, ctx)?;
            if rhs.is_zero() {
                Ok(lhs)
            } else if lhs.is_zero() {
                Ok(neg(rhs))
            } else {
                Ok(ScalarExpr::Sub(Box::new(lhs), Box::new(rhs)))
            }
        }
        ExprKind::Bin(BinOp::Div, a, b) => Ok(ScalarExpr::Div(
            Box::new(instantiate(a, binding, ctx)?),
            Box::new(instantiate(b, binding, ctx)?),
        )),
        ExprKind::Bin(BinOp::Mul, a, b) => {
            let bound: BTreeSet<char> = binding.keys().copied().collect();
            let va = visible_letters(a, &bound);
            let vb = visible_letters(b, &bound);
            let new: Vec<char> = va.intersection(&vb).copied().collect();
            sum_over(&new, binding, ctx.dim, &mut |binding| {
                Ok(ScalarExpr::mul(
                    instantiate(a, binding, ctx)?,
                    instantiate(b, binding, ctx)?,
                ))
            })
        }
    }
}

fn neg(e: ScalarExpr) -> ScalarExpr {
    if e.is_zero() {
        e
    } else {
        ScalarExpr::Neg(Box::new(e))
    }
}

/// Sum an instantiation over every axis assignment of `letters`; with no
/// letters this is a single plain instantiation.
fn sum_over(
    letters: &[char],
    binding: &Binding,
    dim: usize,
    build: &mut dyn FnMut(&Binding) -> DiagResult<ScalarExpr>,
) -> DiagResult<ScalarExpr> {
    if letters.is_empty() {
        return build(binding);
    }
    let mut acc = ScalarExpr::int(0);
    for assignment in enumerate_axes(letters.len(), dim) {
        let mut b = binding.clone();
        for (letter, axis) in letters.iter().zip(assignment) {
            b.insert(*letter, axis);
        }
        acc = ScalarExpr::add(acc, build(&b)?);
    }
    Ok(acc)
}

/// Instantiate a variable reference, delta, or (possibly nested) derivative
/// application. Letters not in the binding occur exactly twice within the
/// leaf (a local trace) and are summed here.
fn instantiate_leaf(expr: &Expr, binding: &Binding, ctx: &Ctx) -> DiagResult<ScalarExpr> {
    let letters = leaf_letters(expr);
    let local: Vec<char> = {
        let mut counts: BTreeMap<char, u32> = BTreeMap::new();
        for &c in &letters {
            if !binding.contains_key(&c) {
                *counts.entry(c).or_default() += 1;
            }
        }
        debug_assert!(counts.values().all(|&c| c == 2), "index checking admits pairs only");
        counts.keys().copied().collect()
    };
    sum_over(&local, binding, ctx.dim, &mut |binding| {
        build_leaf(expr, binding, ctx)
    })
}

fn leaf_letters(expr: &Expr) -> Vec<char> {
    match &expr.kind {
        ExprKind::Var(_, indices) => indices.iter().map(|s| s.letter).collect(),
        ExprKind::Delta(a, b) => vec![a.letter, b.letter],
        ExprKind::Deriv { index, arg } => {
            let mut letters = vec![index.letter];
            letters.extend(leaf_letters(arg));
            letters
        }
        _ => unreachable!("leaf_letters on non-leaf"),
    }
}

fn build_leaf(expr: &Expr, binding: &Binding, ctx: &Ctx) -> DiagResult<ScalarExpr> {
    match &expr.kind {
        ExprKind::Delta(a, b) => {
            let ia = binding[&a.letter];
            let ib = binding[&b.letter];
            Ok(ScalarExpr::int(if ia == ib { 1 } else { 0 }))
        }
        ExprKind::Var(name, indices) => {
            let axes: Vec<u8> = indices.iter().map(|s| binding[&s.letter]).collect();
            build_value(name, &axes, expr.span, ctx)
        }
        ExprKind::Deriv { .. } => {
            let mut deriv_axes = Vec::new();
            let mut inner = expr;
            loop {
                match &inner.kind {
                    ExprKind::Deriv { index, arg } => {
                        deriv_axes.push(binding[&index.letter]);
                        inner = arg;
                    }
                    ExprKind::Var(name, indices) => {
                        let axes: Vec<u8> =
                            indices.iter().map(|s| binding[&s.letter]).collect();
                        return Ok(ScalarExpr::deriv(component_name(name, &axes), deriv_axes));
                    }
                    _ => unreachable!("resolve grounds derivatives in variables"),
                }
            }
        }
        _ => unreachable!("build_leaf on non-leaf"),
    }
}

/// A scalar value reference: grid-function component, parameter, or
/// coordinate (with `r` expanded to the radial distance).
fn build_value(name: &str, axes: &[u8], span: SourceSpan, ctx: &Ctx) -> DiagResult<ScalarExpr> {
    if ctx.program.variables.contains_key(name) {
        return Ok(ScalarExpr::Field(component_name(name, axes)));
    }
    if ctx.program.parameters.contains_key(name) {
        return Ok(ScalarExpr::Param(name.to_string()));
    }
    match name {
        "t" => Ok(ScalarExpr::Coord(CoordRef::Time)),
        "x" | "y" | "z" => {
            let axis = match name {
                "x" => 0u8,
                "y" => 1,
                _ => 2,
            };
            if (axis as usize) < ctx.dim {
                Ok(ScalarExpr::Coord(CoordRef::Axis(axis)))
            } else {
                Err(Diagnostic::error(
                    DiagCode::UnknownIdentifier,
                    span,
                    format!(
                        "coordinate `{name}` is not available in a {}-dimensional program",
                        ctx.dim
                    ),
                ))
            }
        }
        "r" => {
            let mut sum = ScalarExpr::int(0);
            for axis in 0..ctx.dim as u8 {
                let c = ScalarExpr::Coord(CoordRef::Axis(axis));
                sum = ScalarExpr::add(sum, ScalarExpr::mul(c.clone(), c));
            }
            Ok(ScalarExpr::Call(Func::Sqrt, Box::new(sum)))
        }
        _ => unreachable!("resolve rejects unknown identifiers"),
    }
}

/// Letters of `expr` neither bound nor internally contracted, as seen from
/// an enclosing product.
fn visible_letters(expr: &Expr, bound: &BTreeSet<char>) -> BTreeSet<char> {
    match &expr.kind {
        ExprKind::Number(_) => BTreeSet::new(),
        ExprKind::Var(..) | ExprKind::Delta(..) | ExprKind::Deriv { .. } => {
            let mut counts: BTreeMap<char, u32> = BTreeMap::new();
            for c in leaf_letters(expr) {
                if !bound.contains(&c) {
                    *counts.entry(c).or_default() += 1;
                }
            }
            counts
                .into_iter()
                .filter_map(|(c, n)| (n == 1).then_some(c))
                .collect()
        }
        ExprKind::Neg(a) => visible_letters(a, bound),
        ExprKind::Bin(BinOp::Mul, a, b) => {
            let va = visible_letters(a, bound);
            let vb = visible_letters(b, bound);
            va.symmetric_difference(&vb).copied().collect()
        }
        ExprKind::Bin(BinOp::Div, a, _) => visible_letters(a, bound),
        ExprKind::Bin(BinOp::Add | BinOp::Sub, a, _) => visible_letters(a, bound),
        ExprKind::Pow(..) | ExprKind::Call(..) => BTreeSet::new(),
    }
}

impl ScalarExpr {
    /// Evaluate a closed-form expression (no fields, derivatives, or
    /// coordinates); used by tests and default-value handling.
    pub fn eval_const(&self, params: &BTreeMap<String, f64>) -> Option<f64> {
        Some(match self {
            ScalarExpr::Const(c) => c.to_f64()?,
            ScalarExpr::Param(p) => *params.get(p)?,
            ScalarExpr::Neg(a) => -a.eval_const(params)?,
            ScalarExpr::Add(a, b) => a.eval_const(params)? + b.eval_const(params)?,
            ScalarExpr::Sub(a, b) => a.eval_const(params)? - b.eval_const(params)?,
            ScalarExpr::Mul(a, b) => a.eval_const(params)? * b.eval_const(params)?,
            ScalarExpr::Div(a, b) => a.eval_const(params)? / b.eval_const(params)?,
            ScalarExpr::Pow(a, n) => a.eval_const(params)?.powi(*n as i32),
            ScalarExpr::Call(f, a) => f.eval(a.eval_const(params)?),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, resolve, DEFAULT_INIT_CALC};

    fn program(src: &str) -> Program {
        let ast = parse_source(src, "t.edl").expect("parse");
        resolve(ast, DEFAULT_INIT_CALC).expect("resolve")
    }

    fn wave_program() -> Program {
        program(include_str!("../../../../fixtures/wave.edl"))
    }

    fn expand_named(p: &Program, calc: &str, dim: usize) -> Vec<ComponentAssignment> {
        let (decl, _) = p.calculation(calc).expect("calculation exists");
        expand_calculation(decl, p, dim).expect("expansion")
    }

    #[test]
    fn gradient_expands_per_component() {
        let p = wave_program();
        let rhs = expand_named(&p, "RHS", 3);
        let rendered: Vec<String> = rhs.iter().map(|a| a.to_string()).collect();
        assert_eq!(
            rendered,
            vec![
                "dt_u = rho",
                "dt_rho = PD(v1,1) + PD(v2,2) + PD(v3,3)",
                "dt_v1 = PD(rho,1)",
                "dt_v2 = PD(rho,2)",
                "dt_v3 = PD(rho,3)",
            ]
        );
    }

    #[test]
    fn contraction_collapses_in_one_dimension() {
        let p = wave_program();
        let rhs = expand_named(&p, "RHS", 1);
        let rendered: Vec<String> = rhs.iter().map(|a| a.to_string()).collect();
        assert_eq!(rendered, vec!["dt_u = rho", "dt_rho = PD(v1,1)", "dt_v1 = PD(rho,1)"]);
    }

    #[test]
    fn energy_expands_to_component_squares() {
        let p = wave_program();
        let energy = expand_named(&p, "Energy", 3);
        assert_eq!(
            energy[0].to_string(),
            "eps = 1 / 2 * (rho**2 + (v1 * v1 + v2 * v2 + v3 * v3))"
        );
    }

    #[test]
    fn init_uses_radial_coordinate_in_one_dimension() {
        let p = wave_program();
        let init = expand_named(&p, "Init", 1);
        let rendered: Vec<String> = init.iter().map(|a| a.to_string()).collect();
        assert_eq!(
            rendered,
            vec![
                "u = 0",
                "rho = A * exp(-1 / 2 * (sqrt(x * x) / W)**2)",
                "v1 = 0",
            ]
        );
    }

    #[test]
    fn expansion_count_is_dim_to_the_free_letters() {
        let src = "begin group Evolved\n  T_ij: \"t\"\n  u: \"u\"\nend group\n\
                   begin calculation C\n  T_ij = D_i D_j u\nend calculation C\n";
        let p = program(src);
        for dim in 1..=3usize {
            let out = expand_named(&p, "C", dim);
            assert_eq!(out.len(), dim * dim);
        }
    }

    #[test]
    fn second_derivatives_are_canonicalized() {
        let src = "begin group Evolved\n  T_ij: \"t\"\n  u: \"u\"\nend group\n\
                   begin calculation C\n  T_ij = D_j D_i u\nend calculation C\n";
        let p = program(src);
        let out = expand_named(&p, "C", 2);
        // The (i=1, j=2) component applies D_2 D_1 and must print sorted.
        assert_eq!(out[1].to_string(), "T12 = PD(u,1,2)");
        assert_eq!(out[2].to_string(), "T21 = PD(u,1,2)");
    }

    #[test]
    fn distinct_second_derivative_components_in_3d() {
        let src = "begin group Evolved\n  T_ij: \"t\"\n  u: \"u\"\nend group\n\
                   begin calculation C\n  T_ij = D_i D_j u\nend calculation C\n";
        let p = program(src);
        let out = expand_named(&p, "C", 3);
        let distinct: std::collections::BTreeSet<String> =
            out.iter().map(|a| a.rhs.to_string()).collect();
        // Enumerating all (i, j) pairs leaves 6 canonical forms.
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn delta_contraction_matches_dot_product() {
        // delta^ij a_i b_j evaluated on random components equals the plain
        // dot product, for each dimension.
        let src = "begin group Evolved\n  a_i: \"a\"\n  b_i: \"b\"\n  u: \"u\"\nend group\n\
                   begin calculation C\n  u = delta^ij a_i b_j\nend calculation C\n";
        let p = program(src);
        let values = [0.37, -1.25, 2.0, 0.5, -0.75, 1.5];
        for dim in 1..=3usize {
            let out = expand_named(&p, "C", dim);
            let rhs = &out[0].rhs;
            let mut env = BTreeMap::new();
            let mut expected = 0.0;
            for axis in 0..dim {
                let (a, b) = (values[axis], values[axis + 3]);
                env.insert(format!("a{}", axis + 1), a);
                env.insert(format!("b{}", axis + 1), b);
                expected += a * b;
            }
            let got = eval_fields(rhs, &env);
            assert!((got - expected).abs() < 1e-14, "dim {dim}: {got} vs {expected}");
        }
    }

    #[test]
    fn dummy_relabeling_is_structurally_invariant() {
        let a = program(
            "begin group Evolved\n  rho: \"r\"\n  v_i: \"v\"\nend group\n\
             begin calculation C\n  D_t rho = delta^ij D_i v_j\nend calculation C\n",
        );
        let b = program(
            "begin group Evolved\n  rho: \"r\"\n  v_i: \"v\"\nend group\n\
             begin calculation C\n  D_t rho = delta^kj D_k v_j\nend calculation C\n",
        );
        assert_eq!(expand_named(&a, "C", 3), expand_named(&b, "C", 3));
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let p = wave_program();
        for assignment in expand_named(&p, "RHS", 3) {
            let once = crate::expand::canonicalize_derivatives(&assignment.rhs);
            let twice = crate::expand::canonicalize_derivatives(&once);
            assert_eq!(once, twice);
        }
    }

    /// Small field-only evaluator for expansion tests.
    fn eval_fields(e: &ScalarExpr, env: &BTreeMap<String, f64>) -> f64 {
        match e {
            ScalarExpr::Const(c) => c.to_f64().unwrap(),
            ScalarExpr::Field(f) => env[f],
            ScalarExpr::Neg(a) => -eval_fields(a, env),
            ScalarExpr::Add(a, b) => eval_fields(a, env) + eval_fields(b, env),
            ScalarExpr::Sub(a, b) => eval_fields(a, env) - eval_fields(b, env),
            ScalarExpr::Mul(a, b) => eval_fields(a, env) * eval_fields(b, env),
            ScalarExpr::Div(a, b) => eval_fields(a, env) / eval_fields(b, env),
            ScalarExpr::Pow(a, n) => eval_fields(a, env).powi(*n as i32),
            ScalarExpr::Call(f, a) => f.eval(eval_fields(a, env)),
            other => panic!("unexpected node {other:?}"),
        }
    }
}
