//! Index-usage validation for the Einstein summation convention.
//!
//! Within any product, an index letter may appear at most twice; a repeated
//! letter is contracted (a dummy) and does not escape the product. Additive
//! operands must expose the same free letters, denominators and function
//! arguments none at all, and the free letters of an equation's two sides
//! must agree. A letter contracted inside a scalar subexpression may be
//! reused in a sibling term (`(delta^ij v_i v_j) + (delta^ij w_i w_j)`), but
//! not against a visible occurrence in the same product.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{DiagCode, DiagResult, Diagnostic};
use crate::frontend::ast::{BinOp, Equation, Expr, ExprKind};
use crate::span::SourceSpan;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexReport {
    /// Free letters with the positions where they occur.
    pub free: BTreeMap<char, Vec<SourceSpan>>,
    /// Letters contracted somewhere in the equation.
    pub dummy: BTreeSet<char>,
}

/// Validate index usage of a resolved equation.
pub fn check_indices(eq: &Equation) -> DiagResult<IndexReport> {
    // Left-hand side: plain variable reference, distinct letters.
    let mut lhs_letters: BTreeMap<char, Vec<SourceSpan>> = BTreeMap::new();
    for slot in &eq.target.indices {
        let spans = lhs_letters.entry(slot.letter).or_default();
        if !spans.is_empty() {
            return Err(Diagnostic::error(
                DiagCode::FreeIndexMismatch,
                eq.target.span,
                format!(
                    "index letter `{}` is repeated on the left-hand side",
                    slot.letter
                ),
            ));
        }
        spans.push(eq.target.span);
    }

    let rhs = usage(&eq.rhs)?;

    // The sides must expose the same free letters. One asymmetry is part of
    // the language: an index-free right-hand side assigns the same scalar to
    // every component (`v_i = 0`).
    let lhs_set: BTreeSet<char> = lhs_letters.keys().copied().collect();
    let rhs_set: BTreeSet<char> = rhs.visible.keys().copied().collect();
    if lhs_set != rhs_set && !rhs_set.is_empty() {
        return Err(Diagnostic::error(
            DiagCode::FreeIndexMismatch,
            eq.span,
            format!(
                "free indices differ between the sides: left has {}, right has {}",
                fmt_set(&lhs_set),
                fmt_set(&rhs_set)
            ),
        ));
    }

    let mut free = lhs_letters;
    for (letter, spans) in rhs.visible {
        free.entry(letter).or_default().extend(spans);
    }
    Ok(IndexReport {
        free,
        dummy: rhs.bound,
    })
}

fn fmt_set(set: &BTreeSet<char>) -> String {
    if set.is_empty() {
        "none".to_string()
    } else {
        let letters: Vec<String> = set.iter().map(|c| format!("`{c}`")).collect();
        letters.join(", ")
    }
}

type Visible = BTreeMap<char, Vec<SourceSpan>>;

#[derive(Debug, Default)]
struct Usage {
    /// Letters uncontracted as seen from outside the subtree.
    visible: Visible,
    /// Letters contracted inside the subtree.
    bound: BTreeSet<char>,
}

fn usage(expr: &Expr) -> DiagResult<Usage> {
    match &expr.kind {
        ExprKind::Number(_) => Ok(Usage::default()),
        ExprKind::Var(_, indices) => {
            let letters: Vec<char> = indices.iter().map(|s| s.letter).collect();
            leaf_usage(&letters, expr.span)
        }
        ExprKind::Delta(a, b) => leaf_usage(&[a.letter, b.letter], expr.span),
        ExprKind::Deriv { index, arg } => {
            let arg_usage = usage(arg)?;
            merge_product(leaf_usage(&[index.letter], expr.span)?, arg_usage, expr.span)
        }
        ExprKind::Neg(a) => usage(a),
        ExprKind::Bin(BinOp::Mul, a, b) => {
            let va = usage(a)?;
            let vb = usage(b)?;
            merge_product(va, vb, expr.span)
        }
        ExprKind::Bin(BinOp::Div, a, b) => {
            let va = usage(a)?;
            let vb = usage(b)?;
            if !vb.visible.is_empty() {
                return Err(Diagnostic::error(
                    DiagCode::FreeIndexMismatch,
                    b.span,
                    format!(
                        "a denominator must not carry free indices (found {})",
                        fmt_set(&vb.visible.keys().copied().collect())
                    ),
                ));
            }
            Ok(Usage {
                visible: va.visible,
                bound: &va.bound | &vb.bound,
            })
        }
        ExprKind::Bin(BinOp::Add | BinOp::Sub, a, b) => {
            let va = usage(a)?;
            let vb = usage(b)?;
            let sa: BTreeSet<char> = va.visible.keys().copied().collect();
            let sb: BTreeSet<char> = vb.visible.keys().copied().collect();
            if sa != sb {
                return Err(Diagnostic::error(
                    DiagCode::FreeIndexMismatch,
                    expr.span,
                    format!(
                        "additive terms expose different free indices: {} vs {}",
                        fmt_set(&sa),
                        fmt_set(&sb)
                    ),
                ));
            }
            let mut visible = va.visible;
            for (letter, spans) in vb.visible {
                visible.entry(letter).or_default().extend(spans);
            }
            Ok(Usage {
                visible,
                bound: &va.bound | &vb.bound,
            })
        }
        ExprKind::Pow(a, _) => {
            let va = usage(a)?;
            if !va.visible.is_empty() {
                return Err(Diagnostic::error(
                    DiagCode::FreeIndexMismatch,
                    expr.span,
                    format!(
                        "the base of a power must be a scalar (free indices {}); contract \
                         explicitly, e.g. `delta^ij v_i v_j`",
                        fmt_set(&va.visible.keys().copied().collect())
                    ),
                ));
            }
            Ok(va)
        }
        ExprKind::Call(name, a) => {
            let va = usage(a)?;
            if !va.visible.is_empty() {
                return Err(Diagnostic::error(
                    DiagCode::FreeIndexMismatch,
                    expr.span,
                    format!(
                        "the argument of `{name}` must be a scalar (free indices {})",
                        fmt_set(&va.visible.keys().copied().collect())
                    ),
                ));
            }
            Ok(va)
        }
    }
}

/// Usage of a leaf carrying `letters` directly: a letter twice is a local
/// contraction (trace), three times an error.
fn leaf_usage(letters: &[char], span: SourceSpan) -> DiagResult<Usage> {
    let mut counts: BTreeMap<char, u32> = BTreeMap::new();
    for &c in letters {
        *counts.entry(c).or_default() += 1;
    }
    let mut out = Usage::default();
    for (letter, count) in counts {
        match count {
            1 => {
                out.visible.insert(letter, vec![span]);
            }
            2 => {
                out.bound.insert(letter);
            }
            _ => return Err(tripled(letter, span)),
        }
    }
    Ok(out)
}

/// Combine two product operands: letters visible on both sides contract
/// here; a letter visible on one side and already contracted on the other
/// would be its third occurrence.
fn merge_product(a: Usage, b: Usage, span: SourceSpan) -> DiagResult<Usage> {
    let mut out = Usage {
        visible: Visible::new(),
        bound: &a.bound | &b.bound,
    };
    for (letter, spans) in &a.visible {
        if b.visible.contains_key(letter) {
            out.bound.insert(*letter);
        } else if b.bound.contains(letter) {
            return Err(tripled(*letter, span));
        } else {
            out.visible.insert(*letter, spans.clone());
        }
    }
    for (letter, spans) in b.visible {
        if a.visible.contains_key(&letter) {
            // contracted above
        } else if a.bound.contains(&letter) {
            return Err(tripled(letter, span));
        } else {
            out.visible.insert(letter, spans);
        }
    }
    Ok(out)
}

fn tripled(letter: char, span: SourceSpan) -> Diagnostic {
    Diagnostic::error(
        DiagCode::IndexTripled,
        span,
        format!("index letter `{letter}` appears more than twice in a product"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn equation(decls: &str, eq: &str) -> Equation {
        let src = format!("{decls}begin calculation C\n  {eq}\nend calculation C\n");
        let ast = parse_source(&src, "t.edl").expect("parse");
        ast.calculations[0].equations[0].clone()
    }

    const WAVE_DECLS: &str =
        "begin group Evolved\n  u: \"u\"\n  rho: \"r\"\n  v_i: \"v\"\n  w_i: \"w\"\nend group\n";

    #[test]
    fn gradient_equation_has_matching_free_index() {
        let eq = equation(WAVE_DECLS, "D_t v_i = D_i rho");
        let report = check_indices(&eq).unwrap();
        assert_eq!(report.free.keys().copied().collect::<Vec<_>>(), vec!['i']);
        assert!(report.dummy.is_empty());
    }

    #[test]
    fn contraction_is_a_dummy_pair() {
        let eq = equation(WAVE_DECLS, "D_t rho = delta^ij D_i v_j");
        let report = check_indices(&eq).unwrap();
        assert!(report.free.is_empty());
        assert_eq!(report.dummy, ['i', 'j'].into_iter().collect());
    }

    #[test]
    fn free_index_mismatch_is_rejected() {
        let eq = equation(WAVE_DECLS, "D_t rho = v_i");
        let err = check_indices(&eq).unwrap_err();
        assert_eq!(err.code, DiagCode::FreeIndexMismatch);
    }

    #[test]
    fn tripled_index_is_rejected() {
        let eq = equation(WAVE_DECLS, "D_t rho = delta^ii v_i");
        let err = check_indices(&eq).unwrap_err();
        assert_eq!(err.code, DiagCode::IndexTripled);
    }

    #[test]
    fn additive_terms_must_agree() {
        let eq = equation(WAVE_DECLS, "D_t v_i = D_i rho + u");
        let err = check_indices(&eq).unwrap_err();
        assert_eq!(err.code, DiagCode::FreeIndexMismatch);
    }

    #[test]
    fn divergence_contraction_without_delta() {
        let eq = equation(WAVE_DECLS, "D_t rho = D_i v_i");
        let report = check_indices(&eq).unwrap();
        assert!(report.free.is_empty());
        assert_eq!(report.dummy, ['i'].into_iter().collect());
    }

    #[test]
    fn dummy_letters_may_be_reused_across_terms() {
        let eq = equation(
            WAVE_DECLS,
            "D_t rho = delta^ij v_i v_j + delta^ij w_i w_j",
        );
        let report = check_indices(&eq).unwrap();
        assert!(report.free.is_empty());
        assert_eq!(report.dummy, ['i', 'j'].into_iter().collect());
    }

    #[test]
    fn scalar_rhs_broadcasts_to_indexed_target() {
        let eq = equation(WAVE_DECLS, "v_i = 0");
        let report = check_indices(&eq).unwrap();
        assert_eq!(report.free.keys().copied().collect::<Vec<_>>(), vec!['i']);
    }

    #[test]
    fn partial_free_index_overlap_is_still_rejected() {
        let decls = "begin group Evolved\n  T_ij: \"t\"\n  v_i: \"v\"\nend group\n";
        let eq = equation(decls, "T_ij = v_i");
        let err = check_indices(&eq).unwrap_err();
        assert_eq!(err.code, DiagCode::FreeIndexMismatch);
    }

    #[test]
    fn repeated_lhs_index_is_rejected() {
        let decls = "begin group Evolved\n  T_ij: \"tensor\"\n  u: \"u\"\nend group\n";
        let eq = equation(decls, "T_ii = u");
        let err = check_indices(&eq).unwrap_err();
        assert_eq!(err.code, DiagCode::FreeIndexMismatch);
    }
}
