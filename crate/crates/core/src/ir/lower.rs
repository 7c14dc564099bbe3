//! Lowering of expanded component assignments into kernel IR.
//!
//! Each derivative application becomes the linear combination of grid loads
//! given by the stencil table, written as an integer-coefficient numerator
//! over a common divisor so that the second-order first derivative lowers
//! to the familiar `(f[i+1] - f[i-1]) / (2 * dx)` shape.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, Integer, One, Signed, Zero};

use crate::diag::{DiagCode, DiagResult, Diagnostic};
use crate::expand::{ComponentAssignment, ScalarExpr};
use crate::ir::{KernelBuilder, KernelIr, Op, ValueId};
use crate::stencil::DerivativeTable;

/// Grid-spacing parameter name for a 1-based axis.
pub fn spacing_param(axis: u8) -> &'static str {
    match axis {
        1 => "dx",
        2 => "dy",
        _ => "dz",
    }
}

/// Lower a calculation's assignments into one kernel.
pub fn lower(
    name: &str,
    assignments: &[ComponentAssignment],
    table: &DerivativeTable,
    dim: usize,
) -> DiagResult<KernelIr> {
    let mut builder = KernelBuilder::default();
    let mut outputs = Vec::new();
    for assignment in assignments {
        let vid = emit(&assignment.rhs, &mut builder, table, dim).map_err(|msg| {
            Diagnostic::error(DiagCode::MissingDerivativeDefinition, assignment.span, msg)
        })?;
        outputs.push((assignment.output_field(), vid));
    }
    let kernel = KernelIr {
        name: name.to_string(),
        dim,
        body: builder.body,
        outputs,
    };
    let writes = kernel.writes();
    if let Some((field, _)) = kernel.reads().into_iter().find(|(f, _)| writes.contains(f)) {
        let span = assignments
            .first()
            .map(|a| a.span)
            .unwrap_or(crate::span::SourceSpan::DUMMY);
        return Err(Diagnostic::error(
            DiagCode::IntraKernelRecurrence,
            span,
            format!(
                "calculation `{name}` reads `{field}` which it also writes; split it into \
                 two calculations"
            ),
        ));
    }
    debug_assert_eq!(kernel.validate(), Ok(()));
    Ok(kernel)
}

fn emit(
    expr: &ScalarExpr,
    b: &mut KernelBuilder,
    table: &DerivativeTable,
    dim: usize,
) -> Result<ValueId, String> {
    Ok(match expr {
        ScalarExpr::Const(c) => b.push(Op::Const(c.clone())),
        ScalarExpr::Param(p) => b.push(Op::Param(p.clone())),
        ScalarExpr::Coord(c) => b.push(Op::Coord(*c)),
        ScalarExpr::Field(f) => b.push(Op::Load {
            field: f.clone(),
            offsets: vec![0; dim],
        }),
        ScalarExpr::Deriv { field, axes } => emit_derivative(field, axes, b, table, dim)?,
        ScalarExpr::Neg(a) => {
            let a = emit(a, b, table, dim)?;
            b.push(Op::Neg(a))
        }
        ScalarExpr::Add(x, y) => {
            let (x, y) = (emit(x, b, table, dim)?, emit(y, b, table, dim)?);
            b.push(Op::Add(x, y))
        }
        ScalarExpr::Sub(x, y) => {
            let (x, y) = (emit(x, b, table, dim)?, emit(y, b, table, dim)?);
            b.push(Op::Sub(x, y))
        }
        ScalarExpr::Mul(x, y) => {
            let (x, y) = (emit(x, b, table, dim)?, emit(y, b, table, dim)?);
            b.push(Op::Mul(x, y))
        }
        ScalarExpr::Div(x, y) => {
            let (x, y) = (emit(x, b, table, dim)?, emit(y, b, table, dim)?);
            b.push(Op::Div(x, y))
        }
        ScalarExpr::Pow(a, n) => {
            let a = emit(a, b, table, dim)?;
            b.push(Op::Pow(a, *n as i32))
        }
        ScalarExpr::Call(f, a) => {
            let a = emit(a, b, table, dim)?;
            b.push(Op::Call(*f, a))
        }
    })
}

/// Expand `PD(field, axes)` into loads: per-axis stencils are combined as a
/// tensor product, scaled by `1 / (q * h^p ...)` with `q` the common
/// denominator of all coefficients.
fn emit_derivative(
    field: &str,
    axes: &[u8],
    b: &mut KernelBuilder,
    table: &DerivativeTable,
    dim: usize,
) -> Result<ValueId, String> {
    let mut multiplicity: BTreeMap<u8, u32> = BTreeMap::new();
    for a in axes {
        *multiplicity.entry(*a).or_default() += 1;
    }

    // Tensor product of the per-axis stencils.
    let mut terms: Vec<(Vec<i64>, BigRational)> = vec![(vec![0; dim], BigRational::one())];
    let mut spacing: Vec<(u8, u32)> = Vec::new();
    for (&axis, &mult) in &multiplicity {
        let stencil = table.get(mult, axis).ok_or_else(|| {
            format!("no derivative operator for axis {axis} multiplicity {mult}")
        })?;
        spacing.push((axis, stencil.spacing_power()));
        let mut next = Vec::with_capacity(terms.len() * stencil.coefficients().len());
        for (offsets, coeff) in &terms {
            for (k, c) in stencil.coefficients() {
                let mut o = offsets.clone();
                o[(axis - 1) as usize] += k;
                next.push((o, coeff * c));
            }
        }
        terms = next;
    }
    terms.retain(|(_, c)| !c.is_zero());
    if terms.is_empty() {
        return Ok(b.push(Op::Const(BigRational::zero())));
    }

    // Integer numerators over the common denominator q.
    let q: BigInt = terms
        .iter()
        .fold(BigInt::one(), |acc, (_, c)| acc.lcm(c.denom()));
    let mut numerators: Vec<(Vec<i64>, BigInt)> = terms
        .into_iter()
        .map(|(o, c)| {
            let scaled = c * BigRational::from_integer(q.clone());
            debug_assert!(scaled.is_integer());
            (o, scaled.to_integer())
        })
        .collect();
    // Largest offsets first: yields `f[i+1] - f[i-1]` rather than the
    // reversed form.
    numerators.sort_by(|(a, _), (b, _)| b.cmp(a));

    let mut acc: Option<ValueId> = None;
    for (offsets, n) in numerators {
        let load = b.push(Op::Load {
            field: field.to_string(),
            offsets,
        });
        let magnitude = n.abs();
        let term = if magnitude.is_one() {
            load
        } else {
            let c = b.push(Op::Const(BigRational::from_integer(magnitude)));
            b.push(Op::Mul(c, load))
        };
        acc = Some(match acc {
            None if n.is_negative() => b.push(Op::Neg(term)),
            None => term,
            Some(prev) if n.is_negative() => b.push(Op::Sub(prev, term)),
            Some(prev) => b.push(Op::Add(prev, term)),
        });
    }
    let numerator = acc.expect("at least one term");

    // Divisor: q * h^p per axis, in axis order.
    let mut divisor: Option<ValueId> = None;
    if !q.is_one() {
        divisor = Some(b.push(Op::Const(BigRational::from_integer(q))));
    }
    for (axis, power) in spacing {
        if power == 0 {
            continue;
        }
        let h = b.push(Op::Param(spacing_param(axis).to_string()));
        let h_pow = if power == 1 {
            h
        } else {
            b.push(Op::Pow(h, power as i32))
        };
        divisor = Some(match divisor {
            None => h_pow,
            Some(d) => b.push(Op::Mul(d, h_pow)),
        });
    }
    Ok(match divisor {
        None => numerator,
        Some(d) => b.push(Op::Div(numerator, d)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, resolve, DEFAULT_INIT_CALC};
    use crate::stencil::{build_table, derivative_needs};

    fn wave_kernel(calc: &str, dim: usize, half_width: Option<u32>) -> KernelIr {
        let src = include_str!("../../../../fixtures/wave.edl");
        let ast = parse_source(src, "wave.edl").unwrap();
        let program = resolve(ast, DEFAULT_INIT_CALC).unwrap();
        let (decl, _) = program.calculation(calc).unwrap();
        let assignments = crate::expand::expand_calculation(decl, &program, dim).unwrap();
        let needs = derivative_needs(&assignments);
        let mut diags = Vec::new();
        let table = build_table(&program, &needs, dim, half_width, &mut diags).unwrap();
        assert!(diags.is_empty());
        lower(calc, &assignments, &table, dim).unwrap()
    }

    #[test]
    fn rhs_dim1_matches_reference_shape() {
        let k = wave_kernel("RHS", 1, None);
        assert_eq!(
            k.to_text(),
            "kernel RHS dim=1 radius=[1]\n\
             \x20 t0 = load rho @ [0]\n\
             \x20 t1 = load v1 @ [1]\n\
             \x20 t2 = load v1 @ [-1]\n\
             \x20 t3 = sub t1 t2\n\
             \x20 t4 = const 2\n\
             \x20 t5 = param dx\n\
             \x20 t6 = mul t4 t5\n\
             \x20 t7 = div t3 t6\n\
             \x20 t8 = load rho @ [1]\n\
             \x20 t9 = load rho @ [-1]\n\
             \x20 t10 = sub t8 t9\n\
             \x20 t11 = const 2\n\
             \x20 t12 = param dx\n\
             \x20 t13 = mul t11 t12\n\
             \x20 t14 = div t10 t13\n\
             \x20 write dt_u = t0\n\
             \x20 write dt_rho = t7\n\
             \x20 write dt_v1 = t14\n"
        );
    }

    #[test]
    fn zero_radius_kernels_have_no_offsets() {
        let k = wave_kernel("Energy", 3, None);
        assert_eq!(k.radius(), vec![0, 0, 0]);
        assert_eq!(k.writes().into_iter().collect::<Vec<_>>(), vec!["eps"]);
    }

    #[test]
    fn constant_assignment_is_a_single_const() {
        let k = wave_kernel("Init", 1, None);
        // First output (u = 0) is a bare constant.
        let (field, vid) = &k.outputs[0];
        assert_eq!(field, "u");
        assert_eq!(k.body[*vid], Op::Const(BigRational::zero()));
    }

    #[test]
    fn fourth_order_widens_the_radius() {
        let k = wave_kernel("RHS", 1, Some(2));
        assert_eq!(k.radius(), vec![2]);
    }

    #[test]
    fn mixed_second_derivative_is_a_product_stencil() {
        let src = "begin group Evolved\n  T_ij: \"t\"\n  u: \"u\"\nend group\n\
                   begin calculation C\n  T_ij = D_i D_j u\nend calculation C\n\
                   begin derivatives\n  D_i = FiniteDifferencingOperator[1,1,i]\nend derivatives\n";
        let ast = parse_source(src, "t.edl").unwrap();
        let program = resolve(ast, DEFAULT_INIT_CALC).unwrap();
        let (decl, _) = program.calculation("C").unwrap();
        let assignments = crate::expand::expand_calculation(decl, &program, 2).unwrap();
        let needs = derivative_needs(&assignments);
        let mut diags = Vec::new();
        let table = build_table(&program, &needs, 2, None, &mut diags).unwrap();
        let k = lower("C", &assignments, &table, 2).unwrap();
        // T12 = PD(u,1,2): product of two 3-point stencils has 4 nonzero
        // points (the zero-coefficient centers drop out), divisor 4*dx*dy.
        let loads_for_t12: Vec<_> = k
            .reads()
            .into_iter()
            .filter(|(_, o)| o.iter().all(|&v| v != 0))
            .collect();
        assert_eq!(loads_for_t12.len(), 4);
        assert!(k.params().contains("dy"));
    }

    #[test]
    fn reading_a_written_field_is_rejected() {
        let src = "begin group Extra\n  a: \"a\"\n  c: \"b\"\nend group\n\
                   begin calculation C\n  a = 1\n  c = a\nend calculation C\n";
        let ast = parse_source(src, "t.edl").unwrap();
        let program = resolve(ast, DEFAULT_INIT_CALC).unwrap();
        let (decl, _) = program.calculation("C").unwrap();
        let assignments = crate::expand::expand_calculation(decl, &program, 1).unwrap();
        let table = build_table(&program, &Default::default(), 1, None, &mut Vec::new()).unwrap();
        let err = lower("C", &assignments, &table, 1).unwrap_err();
        assert_eq!(err.code, DiagCode::IntraKernelRecurrence);
    }
}
