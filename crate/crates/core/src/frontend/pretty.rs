//! Pretty-printer producing valid EDL source from an AST.
//!
//! Printing is deterministic and reparses to a structurally identical AST
//! (spans aside); this is the round-trip property the parser tests rely on.

use num::{BigInt, BigRational, One, Signed, Zero};

use crate::frontend::ast::*;

pub fn print_program(ast: &ProgramAst) -> String {
    let mut out = String::new();
    for group in &ast.groups {
        out.push_str(&format!("begin group {}\n", group.name.text));
        for entry in &group.entries {
            out.push_str(&format!(
                "  {}: \"{}\"\n",
                name_with_indices(&entry.name.text, &entry.indices),
                entry.description
            ));
        }
        out.push_str("end group\n\n");
    }
    if !ast.parameters.is_empty() {
        out.push_str("begin parameters\n");
        for p in &ast.parameters {
            out.push_str(&format!("  {}: {}", p.name.text, p.kind.as_str()));
            if !p.description.is_empty() {
                out.push_str(&format!(" \"{}\"", p.description));
            }
            if let Some(d) = &p.default {
                out.push_str(&format!(" = {}", print_number(d)));
            }
            out.push('\n');
        }
        out.push_str("end parameters\n\n");
    }
    for calc in &ast.calculations {
        out.push_str(&format!("begin calculation {}\n", calc.name.text));
        for eq in &calc.equations {
            let lhs = name_with_indices(&eq.target.name.text, &eq.target.indices);
            let lhs = if eq.time_deriv {
                format!("D_t {lhs}")
            } else {
                lhs
            };
            out.push_str(&format!("  {} = {}\n", lhs, print_expr(&eq.rhs)));
        }
        out.push_str(&format!("end calculation {}\n\n", calc.name.text));
    }
    if !ast.derivatives.is_empty() {
        out.push_str("begin derivatives\n");
        for d in &ast.derivatives {
            out.push_str(&format!(
                "  {}_{} = {}\n",
                d.symbol.text,
                d.index.letter,
                print_deriv_def(&d.def)
            ));
        }
        out.push_str("end derivatives\n");
    }
    out
}

fn name_with_indices(name: &str, indices: &[IndexSlot]) -> String {
    let mut out = name.to_string();
    let mut last_pos: Option<IndexPosition> = None;
    for slot in indices {
        if last_pos != Some(slot.position) {
            out.push(match slot.position {
                IndexPosition::Lower => '_',
                IndexPosition::Upper => '^',
            });
            last_pos = Some(slot.position);
        }
        out.push(slot.letter);
    }
    out
}

fn print_deriv_def(def: &DerivDef) -> String {
    match def {
        DerivDef::BuiltinFd {
            deriv_order,
            half_width,
            direction,
        } => format!("FiniteDifferencingOperator[{deriv_order},{half_width},{direction}]"),
        DerivDef::Shift(s) => print_shift_expr(s),
    }
}

pub fn print_shift_expr(s: &ShiftExpr) -> String {
    let mut out = String::from("(");
    for (i, (offset, coeff)) in s.terms.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push(if coeff.is_negative() { '-' } else { '+' });
        out.push_str(&print_rational(&coeff.abs()));
        out.push_str(" shift^");
        if *offset == 0 {
            out.push('0');
        } else {
            out.push_str(&format!("({offset:+})"));
        }
    }
    out.push_str(&format!(")/dx^{}", s.spacing_power));
    out
}

/// `p/q` form for stencil coefficients.
fn print_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact decimal form for number literals. Literals always have
/// denominators of the form 2^a 5^b, so this never falls back; synthesized
/// ASTs with other denominators print as `p/q` (which reparses as a
/// division, still semantically equal).
pub fn print_number(r: &BigRational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let mut denom = r.denom().clone();
    let mut a = 0u32;
    let mut b = 0u32;
    while (&denom % &two).is_zero() {
        denom /= &two;
        a += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        b += 1;
    }
    if !denom.is_one() {
        return print_rational(r);
    }
    let digits = a.max(b);
    let scaled = r * BigRational::from_integer(BigInt::from(10).pow(digits));
    debug_assert!(scaled.is_integer());
    let mut s = scaled.to_integer().abs().to_string();
    while s.len() <= digits as usize {
        s.insert(0, '0');
    }
    s.insert(s.len() - digits as usize, '.');
    if r.is_negative() {
        s.insert(0, '-');
    }
    s
}

// Precedence levels used by the expression printer; higher binds tighter.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        ExprKind::Bin(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        ExprKind::Neg(..) => PREC_NEG,
        ExprKind::Pow(..) => PREC_POW,
        ExprKind::Number(n) if n.is_negative() => PREC_NEG,
        _ => PREC_ATOM,
    }
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Number(n) => print_number(n),
        ExprKind::Var(name, indices) => name_with_indices(name, indices),
        ExprKind::Delta(a, b) => {
            let marker = match a.position {
                IndexPosition::Lower => '_',
                IndexPosition::Upper => '^',
            };
            format!("delta{marker}{}{}", a.letter, b.letter)
        }
        ExprKind::Deriv { index, arg } => {
            // The argument of a derivative is a primary; parenthesize
            // anything that is not one.
            let arg_str = if prec(arg) >= PREC_ATOM {
                print_expr(arg)
            } else {
                format!("({})", print_expr(arg))
            };
            format!("D_{} {}", index.letter, arg_str)
        }
        ExprKind::Call(f, arg) => format!("{f}({})", print_expr(arg)),
        ExprKind::Neg(a) => format!("-{}", child(a, PREC_NEG)),
        ExprKind::Bin(op, a, b) => {
            let p = prec(e);
            let op_str = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            };
            // Left-associative: the right child needs parentheses at equal
            // precedence, the left child does not.
            format!("{} {} {}", child(a, p), op_str, strict_child(b, p))
        }
        ExprKind::Pow(base, exp) => format!("{}**{exp}", strict_child(base, PREC_POW)),
    }
}

fn child(e: &Expr, parent_prec: u8) -> String {
    if prec(e) < parent_prec {
        format!("({})", print_expr(e))
    } else {
        print_expr(e)
    }
}

fn strict_child(e: &Expr, parent_prec: u8) -> String {
    if prec(e) <= parent_prec {
        format!("({})", print_expr(e))
    } else {
        print_expr(e)
    }
}
