//! EDL frontend: tokenizer, parser, pretty-printer, and resolver.

pub mod ast;
pub mod parser;
pub mod pretty;
pub mod resolve;
pub mod token;

pub use ast::ProgramAst;
pub use parser::{parse, parse_source};
pub use resolve::{resolve, CalcKind, Program};
pub use token::{tokenize, Token, TokenKind};

/// Default name of the designated init calculation.
pub const DEFAULT_INIT_CALC: &str = "Init";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::DiagCode;

    /// The scalar-wave program used throughout the test suite.
    pub const WAVE_SRC: &str = include_str!("../../../../fixtures/wave.edl");

    fn resolved(src: &str) -> Program {
        let ast = parse_source(src, "test.edl").expect("parse");
        resolve(ast, DEFAULT_INIT_CALC).expect("resolve")
    }

    #[test]
    fn wave_program_structure() {
        let ast = parse_source(WAVE_SRC, "wave.edl").expect("parse");
        assert_eq!(ast.groups.len(), 2);
        assert_eq!(ast.groups[0].name.text, "Evolved");
        assert_eq!(
            ast.groups[0]
                .entries
                .iter()
                .map(|e| e.name.text.as_str())
                .collect::<Vec<_>>(),
            vec!["u", "rho", "v"]
        );
        assert_eq!(ast.groups[0].entries[2].indices.len(), 1);
        assert_eq!(ast.groups[1].entries[0].name.text, "eps");
        assert_eq!(ast.parameters.len(), 2);
        assert_eq!(ast.calculations.len(), 3);
        assert_eq!(ast.derivatives.len(), 1);
    }

    #[test]
    fn wave_program_classification() {
        let p = resolved(WAVE_SRC);
        let kinds: Vec<(&str, CalcKind)> = p
            .calculations
            .iter()
            .map(|c| (c.name.as_str(), c.kind))
            .collect();
        assert_eq!(
            kinds,
            vec![
                ("Init", CalcKind::Initial),
                ("RHS", CalcKind::Rhs),
                ("Energy", CalcKind::Analysis),
            ]
        );
        assert_eq!(p.init_calc, Some(0));
    }

    #[test]
    fn unclosed_block_points_at_begin_line() {
        let err = parse_source("begin group G\n  u: \"x\"", "t.edl").unwrap_err();
        assert_eq!(err.code, DiagCode::UnclosedBlock);
        assert_eq!(err.span.line_start, 1);
    }

    #[test]
    fn mismatched_end_name_points_at_end_line() {
        let err = parse_source(
            "begin calculation Init\n u = 0\nend calculation RHS",
            "t.edl",
        )
        .unwrap_err();
        assert_eq!(err.code, DiagCode::MismatchedEndName);
        assert_eq!(err.span.line_start, 3);
    }

    #[test]
    fn unknown_identifier_has_the_use_span() {
        let src = "begin group Evolved\n  u: \"u\"\nend group\n\
                   begin calculation Init\n  u = Q\nend calculation Init\n";
        let ast = parse_source(src, "t.edl").unwrap();
        let errs = resolve(ast, DEFAULT_INIT_CALC).unwrap_err();
        assert!(errs
            .iter()
            .any(|d| d.code == DiagCode::UnknownIdentifier && d.span.line_start == 5));
    }

    #[test]
    fn mixed_calculation_kind_is_rejected() {
        let src = "begin group Evolved\n  u: \"u\"\n  rho: \"r\"\nend group\n\
                   begin group Extra\n  eps: \"e\"\nend group\n\
                   begin calculation C\n  D_t u = rho\n  eps = rho\nend calculation C\n";
        let ast = parse_source(src, "t.edl").unwrap();
        let errs = resolve(ast, DEFAULT_INIT_CALC).unwrap_err();
        assert!(errs.iter().any(|d| d.code == DiagCode::MixedCalculationKind));
    }

    #[test]
    fn juxtaposition_reads_like_the_figure() {
        use ast::{BinOp, ExprKind};
        // -1/2 (r/W)**2  ==  ((-1)/2) * ((r/W)**2)
        let src = "begin group Evolved\n  rho: \"r\"\nend group\n\
                   begin parameters\n  W: real \"w\"\nend parameters\n\
                   begin calculation Init\n  rho = -1/2 (r/W)**2\nend calculation Init\n";
        let ast = parse_source(src, "t.edl").unwrap();
        let rhs = &ast.calculations[0].equations[0].rhs;
        let ExprKind::Bin(BinOp::Mul, lhs, pow) = &rhs.kind else {
            panic!("expected multiplication at the top, got {rhs:?}");
        };
        let ExprKind::Bin(BinOp::Div, neg, _two) = &lhs.kind else {
            panic!("expected (-1)/2 on the left, got {lhs:?}");
        };
        assert!(matches!(neg.kind, ExprKind::Neg(_)));
        assert!(matches!(pow.kind, ExprKind::Pow(_, 2)));
    }

    #[test]
    fn statements_end_at_line_breaks() {
        let src = "begin group Evolved\n  u: \"u\"\n  rho: \"r\"\nend group\n\
                   begin calculation Init\n  u = 0\n  rho = 1\nend calculation Init\n";
        let ast = parse_source(src, "t.edl").unwrap();
        assert_eq!(ast.calculations[0].equations.len(), 2);
    }

    #[test]
    fn round_trip_is_structurally_identical() {
        let ast = parse_source(WAVE_SRC, "wave.edl").unwrap();
        let printed = pretty::print_program(&ast);
        let reparsed = parse_source(&printed, "wave.edl").expect("printed source reparses");
        assert_eq!(ast.with_dummy_spans(), reparsed.with_dummy_spans());
    }

    #[test]
    fn comment_insensitivity() {
        let ast = parse_source(WAVE_SRC, "wave.edl").unwrap();
        let mut commented = String::new();
        for line in WAVE_SRC.lines() {
            commented.push_str("# noise comment\n");
            commented.push_str(line);
            commented.push('\n');
        }
        let reparsed = parse_source(&commented, "wave.edl").expect("commented source parses");
        assert_eq!(ast.with_dummy_spans(), reparsed.with_dummy_spans());
    }

    /// Deleting any single token from the wave program must either still
    /// parse or produce a spanned diagnostic, never a panic.
    #[test]
    fn token_deletion_fuzz() {
        let tokens = tokenize(WAVE_SRC).unwrap();
        for skip in 0..tokens.len() {
            let mutated: Vec<Token> = tokens
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, t)| t.clone())
                .collect();
            match parse(&mutated, "wave.edl") {
                Ok(_) => {}
                Err(d) => {
                    assert!(d.span.line_start >= 1, "diagnostic must carry a span");
                }
            }
        }
    }

    #[test]
    fn duplicate_declaration_is_rejected() {
        let src = "begin group Evolved\n  u: \"a\"\n  u: \"b\"\nend group\n";
        let err = parse_source(src, "t.edl").unwrap_err();
        assert_eq!(err.code, DiagCode::DuplicateDeclaration);
        assert_eq!(err.span.line_start, 3);
    }

    #[test]
    fn reserved_names_cannot_be_declared() {
        let src = "begin group Evolved\n  x: \"coordinate clash\"\nend group\n";
        let ast = parse_source(src, "t.edl").unwrap();
        let errs = resolve(ast, DEFAULT_INIT_CALC).unwrap_err();
        assert!(errs.iter().any(|d| d.code == DiagCode::ReservedName));
    }

    #[test]
    fn time_derivative_on_rhs_is_a_parse_error() {
        let src = "begin group Evolved\n  u: \"u\"\nend group\n\
                   begin calculation C\n  u = D_t u\nend calculation C\n";
        let err = parse_source(src, "t.edl").unwrap_err();
        assert_eq!(err.code, DiagCode::ParseError);
        assert_eq!(err.span.line_start, 5);
    }
}
