//! Recursive-descent parser for EDL.
//!
//! Statements are line-oriented: juxtaposition (implicit multiplication)
//! never crosses a line break, which is what lets consecutive equations be
//! parsed without an explicit statement terminator. Explicit operators may
//! continue onto the next line.
//!
//! Precedence, loosest to tightest:
//! `+ -`, then `* /` and juxtaposition (one chain, left-associative), then
//! unary minus, then `**`. A juxtaposed factor is a power expression, so
//! `-1/2 (r/W)**2` reads as `((-1)/2) * (r/W)**2` and `A exp(x)` as
//! `A * exp(x)`.

use num::BigRational;

use crate::diag::{DiagCode, DiagResult, Diagnostic};
use crate::frontend::ast::*;
use crate::frontend::token::{tokenize, Keyword, Token, TokenKind};
use crate::span::SourceSpan;

/// Tokenize and parse a complete EDL program.
pub fn parse_source(source: &str, file: &str) -> DiagResult<ProgramAst> {
    let tokens = tokenize(source)?;
    parse(&tokens, file)
}

/// Parse a token stream (as produced by [`tokenize`]) into a program.
pub fn parse(tokens: &[Token], file: &str) -> DiagResult<ProgramAst> {
    let mut p = Parser { tokens, pos: 0 };
    let mut ast = ProgramAst {
        file: file.to_string(),
        groups: Vec::new(),
        parameters: Vec::new(),
        calculations: Vec::new(),
        derivatives: Vec::new(),
    };

    while !p.at_end() {
        let begin_span = p.expect_keyword(Keyword::Begin, "a `begin` block")?;
        match p.peek_kind() {
            Some(TokenKind::Keyword(Keyword::Group)) => {
                p.bump();
                ast.groups.push(p.parse_group(begin_span)?);
            }
            Some(TokenKind::Keyword(Keyword::Parameters)) => {
                p.bump();
                ast.parameters.extend(p.parse_parameters(begin_span)?);
            }
            Some(TokenKind::Keyword(Keyword::Calculation)) => {
                p.bump();
                ast.calculations.push(p.parse_calculation(begin_span)?);
            }
            Some(TokenKind::Keyword(Keyword::Derivatives)) => {
                p.bump();
                ast.derivatives.extend(p.parse_derivatives(begin_span)?);
            }
            _ => {
                return Err(p.err_here(
                    "expected `group`, `parameters`, `calculation`, or `derivatives` after `begin`",
                ))
            }
        }
    }

    check_duplicates(&ast)?;
    Ok(ast)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&'a TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + n)
    }

    fn bump(&mut self) -> &'a Token {
        let t = &self.tokens[self.pos];
        self.pos += 1;
        t
    }

    /// Span to attach to an "unexpected token / end of input" error.
    fn here(&self) -> SourceSpan {
        match self.peek() {
            Some(t) => t.span,
            None => self
                .tokens
                .last()
                .map(|t| t.span)
                .unwrap_or(SourceSpan::point(1, 1)),
        }
    }

    fn err_here(&self, message: impl Into<String>) -> Diagnostic {
        let mut msg = message.into();
        match self.peek() {
            Some(t) => msg = format!("{msg}, found {}", t.kind.describe()),
            None => msg = format!("{msg}, found end of input"),
        }
        Diagnostic::error(DiagCode::ParseError, self.here(), msg)
    }

    fn expect_keyword(&mut self, kw: Keyword, what: &str) -> DiagResult<SourceSpan> {
        match self.peek_kind() {
            Some(TokenKind::Keyword(k)) if *k == kw => Ok(self.bump().span),
            _ => Err(self.err_here(format!("expected {what} (`{}`)", kw.as_str()))),
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> DiagResult<SourceSpan> {
        match self.peek_kind() {
            Some(k) if k == kind => Ok(self.bump().span),
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> DiagResult<Ident> {
        match self.peek_kind() {
            Some(TokenKind::Ident(_)) => {
                let t = self.bump();
                let TokenKind::Ident(name) = &t.kind else {
                    unreachable!()
                };
                Ok(Ident::new(name.clone(), t.span))
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_string(&mut self, what: &str) -> DiagResult<(String, SourceSpan)> {
        match self.peek_kind() {
            Some(TokenKind::Str(_)) => {
                let t = self.bump();
                let TokenKind::Str(s) = &t.kind else {
                    unreachable!()
                };
                Ok((s.clone(), t.span))
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_number(&mut self, what: &str) -> DiagResult<(BigRational, SourceSpan)> {
        match self.peek_kind() {
            Some(TokenKind::Number(_)) => {
                let t = self.bump();
                let TokenKind::Number(n) = &t.kind else {
                    unreachable!()
                };
                Ok((n.clone(), t.span))
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_integer(&mut self, what: &str) -> DiagResult<(i64, SourceSpan)> {
        let (n, span) = self.expect_number(what)?;
        if !n.is_integer() {
            return Err(Diagnostic::error(
                DiagCode::ParseError,
                span,
                format!("expected {what}, found a non-integer number"),
            ));
        }
        num::ToPrimitive::to_i64(&n.to_integer())
            .map(|v| (v, span))
            .ok_or_else(|| {
                Diagnostic::error(DiagCode::ParseError, span, format!("{what} is out of range"))
            })
    }

    /// `end <kw> [name]`; validates the optional name against `open_name`.
    /// On a missing `end` before end-of-input or the next `begin`, reports
    /// UnclosedBlock at the opening line.
    fn expect_block_end(
        &mut self,
        kw: Keyword,
        open_span: SourceSpan,
        open_name: Option<&str>,
    ) -> DiagResult<()> {
        if !matches!(self.peek_kind(), Some(TokenKind::Keyword(Keyword::End))) {
            return Err(Diagnostic::error(
                DiagCode::UnclosedBlock,
                open_span,
                format!("`begin {}` block is never closed", kw.as_str()),
            ));
        }
        self.bump();
        self.expect_keyword(kw, &format!("`{}` after `end`", kw.as_str()))?;
        if let Some(TokenKind::Ident(_)) = self.peek_kind() {
            let name = self.expect_ident("block name")?;
            match open_name {
                Some(open) if open == name.text => {}
                Some(open) => {
                    return Err(Diagnostic::error(
                        DiagCode::MismatchedEndName,
                        name.span,
                        format!(
                            "`end {} {}` does not match `begin {} {}`",
                            kw.as_str(),
                            name.text,
                            kw.as_str(),
                            open
                        ),
                    ))
                }
                None => {
                    return Err(Diagnostic::error(
                        DiagCode::MismatchedEndName,
                        name.span,
                        format!("`end {}` block was opened without a name", kw.as_str()),
                    ))
                }
            }
        }
        Ok(())
    }

    /// True when the current block body has run out of statements
    /// (an `end`, a stray `begin`, or end of input).
    fn at_block_boundary(&self) -> bool {
        matches!(
            self.peek_kind(),
            None | Some(TokenKind::Keyword(Keyword::End)) | Some(TokenKind::Keyword(Keyword::Begin))
        )
    }

    // -- blocks ------------------------------------------------------------

    fn parse_group(&mut self, begin_span: SourceSpan) -> DiagResult<GroupDecl> {
        let name = self.expect_ident("a group name")?;
        let mut entries = Vec::new();
        while !self.at_block_boundary() {
            let entry_name = self.expect_ident("a grid-function name")?;
            let indices = self.parse_index_suffixes()?;
            self.expect(&TokenKind::Colon, "`:` after the grid-function name")?;
            let (description, dspan) = self.expect_string("a description string")?;
            let span = entry_name.span.join(dspan);
            entries.push(GroupEntry {
                name: entry_name,
                indices,
                description,
                span,
            });
        }
        self.expect_block_end(Keyword::Group, begin_span, Some(&name.text))?;
        let role = if name.text == "Evolved" {
            GroupRole::Evolved
        } else {
            GroupRole::Extra
        };
        let span = begin_span.join(self.prev_span());
        Ok(GroupDecl {
            name,
            role,
            entries,
            span,
        })
    }

    fn parse_parameters(&mut self, begin_span: SourceSpan) -> DiagResult<Vec<ParamDecl>> {
        let mut params = Vec::new();
        while !self.at_block_boundary() {
            let name = self.expect_ident("a parameter name")?;
            self.expect(&TokenKind::Colon, "`:` after the parameter name")?;
            let kind_ident = self.expect_ident("a parameter kind (`real` or `int`)")?;
            let kind = match kind_ident.text.as_str() {
                "real" => ParamKind::Real,
                "int" => ParamKind::Int,
                other => {
                    return Err(Diagnostic::error(
                        DiagCode::ParseError,
                        kind_ident.span,
                        format!("unknown parameter kind `{other}` (expected `real` or `int`)"),
                    ))
                }
            };
            let mut span = name.span.join(kind_ident.span);
            let mut description = String::new();
            if let Some(TokenKind::Str(_)) = self.peek_kind() {
                let (d, dspan) = self.expect_string("description")?;
                description = d;
                span = span.join(dspan);
            }
            let mut default = None;
            if matches!(self.peek_kind(), Some(TokenKind::Eq)) {
                self.bump();
                let negative = if matches!(self.peek_kind(), Some(TokenKind::Minus)) {
                    self.bump();
                    true
                } else {
                    false
                };
                let (value, vspan) = self.expect_number("a default value")?;
                default = Some(if negative { -value } else { value });
                span = span.join(vspan);
            }
            params.push(ParamDecl {
                name,
                kind,
                description,
                default,
                span,
            });
        }
        self.expect_block_end(Keyword::Parameters, begin_span, None)?;
        Ok(params)
    }

    fn parse_calculation(&mut self, begin_span: SourceSpan) -> DiagResult<CalculationDecl> {
        let name = self.expect_ident("a calculation name")?;
        let mut equations = Vec::new();
        while !self.at_block_boundary() {
            equations.push(self.parse_equation()?);
        }
        self.expect_block_end(Keyword::Calculation, begin_span, Some(&name.text))?;
        let span = begin_span.join(self.prev_span());
        Ok(CalculationDecl {
            name,
            equations,
            span,
        })
    }

    fn parse_equation(&mut self) -> DiagResult<Equation> {
        let start = self.here();
        let mut time_deriv = false;
        // `D_t` wrapper.
        if let (Some(TokenKind::Ident(d)), Some(t1), Some(t2)) =
            (self.peek_kind(), self.peek_at(1), self.peek_at(2))
        {
            if d == "D"
                && t1.kind == TokenKind::Underscore
                && matches!(&t2.kind, TokenKind::Ident(s) if s == "t")
            {
                self.bump();
                self.bump();
                self.bump();
                time_deriv = true;
            }
        }
        let name = self.expect_ident("a variable name on the left-hand side")?;
        if name.text == "D" && !time_deriv {
            return Err(Diagnostic::error(
                DiagCode::ParseError,
                name.span,
                "left-hand side must be a plain variable; derivative applications are not \
                 allowed there",
            ));
        }
        let indices = self.parse_index_suffixes()?;
        let target_span = name.span;
        let target = VarTerm {
            name,
            indices,
            span: target_span,
        };
        self.expect(&TokenKind::Eq, "`=` after the left-hand side")?;
        let rhs = self.parse_expr()?;
        let span = start.join(rhs.span);
        Ok(Equation {
            time_deriv,
            target,
            rhs,
            span,
        })
    }

    fn parse_derivatives(&mut self, begin_span: SourceSpan) -> DiagResult<Vec<DerivativeDecl>> {
        let mut decls = Vec::new();
        while !self.at_block_boundary() {
            let symbol = self.expect_ident("a derivative symbol (`D`)")?;
            if symbol.text != "D" {
                return Err(Diagnostic::error(
                    DiagCode::ParseError,
                    symbol.span,
                    format!(
                        "unknown derivative symbol `{}`; the spatial derivative symbol is `D`",
                        symbol.text
                    ),
                ));
            }
            self.expect(&TokenKind::Underscore, "`_` after the derivative symbol")?;
            let index = self.parse_index_letter(IndexPosition::Lower)?;
            self.expect(&TokenKind::Eq, "`=` in the derivative definition")?;
            let def = self.parse_deriv_def()?;
            let span = symbol.span.join(self.prev_span());
            decls.push(DerivativeDecl {
                symbol,
                index,
                def,
                span,
            });
        }
        self.expect_block_end(Keyword::Derivatives, begin_span, None)?;
        Ok(decls)
    }

    fn parse_deriv_def(&mut self) -> DiagResult<DerivDef> {
        match self.peek_kind() {
            Some(TokenKind::Ident(name)) if name == "FiniteDifferencingOperator" => {
                self.bump();
                self.expect(&TokenKind::LBracket, "`[` after `FiniteDifferencingOperator`")?;
                let (deriv_order, ospan) = self.expect_integer("the derivative order")?;
                if deriv_order < 1 {
                    return Err(Diagnostic::error(
                        DiagCode::ParseError,
                        ospan,
                        "derivative order must be at least 1",
                    ));
                }
                self.expect(&TokenKind::Comma, "`,`")?;
                let (half_width, wspan) = self.expect_integer("the stencil half-width")?;
                if half_width < 1 {
                    return Err(Diagnostic::error(
                        DiagCode::ParseError,
                        wspan,
                        "stencil half-width must be at least 1",
                    ));
                }
                self.expect(&TokenKind::Comma, "`,`")?;
                let dir = self.expect_ident("the direction index letter")?;
                let direction = single_index_letter(&dir)?;
                self.expect(&TokenKind::RBracket, "`]`")?;
                Ok(DerivDef::BuiltinFd {
                    deriv_order: deriv_order as u32,
                    half_width: half_width as u32,
                    direction,
                })
            }
            Some(TokenKind::LParen) => Ok(DerivDef::Shift(self.parse_shift_expr()?)),
            _ => Err(self.err_here(
                "expected `FiniteDifferencingOperator[...]` or a stencil in shift notation",
            )),
        }
    }

    /// `(c1 shift^(k1) c2 shift^(k2) ...)/dx^p`
    fn parse_shift_expr(&mut self) -> DiagResult<ShiftExpr> {
        let open = self.expect(&TokenKind::LParen, "`(`")?;
        let mut terms: Vec<(i64, BigRational)> = Vec::new();
        loop {
            match self.peek_kind() {
                Some(TokenKind::RParen) => {
                    self.bump();
                    break;
                }
                None => {
                    return Err(Diagnostic::error(
                        DiagCode::MalformedStencilExpr,
                        open,
                        "unterminated stencil expression",
                    ))
                }
                _ => {}
            }
            // [+|-] [coefficient] [*] shift ^ offset
            let mut sign = BigRational::from_integer(1.into());
            match self.peek_kind() {
                Some(TokenKind::Plus) => {
                    self.bump();
                }
                Some(TokenKind::Minus) => {
                    self.bump();
                    sign = -sign;
                }
                _ => {}
            }
            let mut coeff = BigRational::from_integer(1.into());
            if let Some(TokenKind::Number(_)) = self.peek_kind() {
                let (n, _) = self.expect_number("a coefficient")?;
                coeff = n;
                // Rational coefficient written as `p/q`.
                if matches!(self.peek_kind(), Some(TokenKind::Slash))
                    && matches!(self.peek_at(1).map(|t| &t.kind), Some(TokenKind::Number(_)))
                {
                    self.bump();
                    let (d, dspan) = self.expect_number("a denominator")?;
                    if d == BigRational::from_integer(0.into()) {
                        return Err(Diagnostic::error(
                            DiagCode::NonRationalCoefficient,
                            dspan,
                            "stencil coefficient has a zero denominator",
                        ));
                    }
                    coeff /= d;
                }
                if matches!(self.peek_kind(), Some(TokenKind::Star)) {
                    self.bump();
                }
            }
            // `shift^k` | `shift^(k)` | `shift^(+k)` | `shift^(-k)`
            let shift_ident = self.expect_ident("`shift`")?;
            if shift_ident.text != "shift" {
                return Err(Diagnostic::error(
                    DiagCode::MalformedStencilExpr,
                    shift_ident.span,
                    format!("expected `shift`, found `{}`", shift_ident.text),
                ));
            }
            self.expect(&TokenKind::Caret, "`^` after `shift`")?;
            let offset = match self.peek_kind() {
                Some(TokenKind::LParen) => {
                    self.bump();
                    let neg = match self.peek_kind() {
                        Some(TokenKind::Plus) => {
                            self.bump();
                            false
                        }
                        Some(TokenKind::Minus) => {
                            self.bump();
                            true
                        }
                        _ => false,
                    };
                    let (k, _) = self.expect_integer("an integer shift offset")?;
                    self.expect(&TokenKind::RParen, "`)` after the shift offset")?;
                    if neg {
                        -k
                    } else {
                        k
                    }
                }
                _ => self.expect_integer("an integer shift offset")?.0,
            };
            terms.push((offset, sign * coeff));
        }
        if terms.is_empty() {
            return Err(Diagnostic::error(
                DiagCode::MalformedStencilExpr,
                open,
                "stencil expression has no terms",
            ));
        }
        // `/ dx [^ p]`
        self.expect(&TokenKind::Slash, "`/dx^p` after the stencil terms")?;
        let dx = self.expect_ident("`dx`")?;
        if dx.text != "dx" {
            return Err(Diagnostic::error(
                DiagCode::MalformedStencilExpr,
                dx.span,
                format!("expected `dx` in the stencil divisor, found `{}`", dx.text),
            ));
        }
        let spacing_power = if matches!(self.peek_kind(), Some(TokenKind::Caret)) {
            self.bump();
            let (p, pspan) = self.expect_integer("the spacing power")?;
            if p < 0 {
                return Err(Diagnostic::error(
                    DiagCode::MalformedStencilExpr,
                    pspan,
                    "spacing power must be non-negative",
                ));
            }
            p as u32
        } else {
            1
        };
        let span = open.join(self.prev_span());
        Ok(ShiftExpr {
            terms,
            spacing_power,
            span,
        })
    }

    // -- expressions ---------------------------------------------------------

    fn parse_expr(&mut self) -> DiagResult<Expr> {
        self.parse_additive()
    }

    fn parse_additive(&mut self) -> DiagResult<Expr> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Plus) => BinOp::Add,
                Some(TokenKind::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_multiplicative()?;
            let span = lhs.span.join(rhs.span);
            lhs = Expr::new(ExprKind::Bin(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn parse_multiplicative(&mut self) -> DiagResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek_kind() {
                Some(TokenKind::Star) => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    let span = lhs.span.join(rhs.span);
                    lhs = Expr::new(ExprKind::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs)), span);
                }
                Some(TokenKind::Slash) => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    let span = lhs.span.join(rhs.span);
                    lhs = Expr::new(ExprKind::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs)), span);
                }
                // Juxtaposition: an adjacent factor on the same line.
                Some(kind) if starts_factor(kind) && self.same_line_as(lhs.span) => {
                    let rhs = self.parse_power()?;
                    let span = lhs.span.join(rhs.span);
                    lhs = Expr::new(ExprKind::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs)), span);
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn same_line_as(&self, span: SourceSpan) -> bool {
        self.peek()
            .map(|t| t.span.line_start == span.line_end)
            .unwrap_or(false)
    }

    fn parse_unary(&mut self) -> DiagResult<Expr> {
        if matches!(self.peek_kind(), Some(TokenKind::Minus)) {
            let minus = self.bump().span;
            let inner = self.parse_unary()?;
            let span = minus.join(inner.span);
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), span));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> DiagResult<Expr> {
        let base = self.parse_primary()?;
        if matches!(self.peek_kind(), Some(TokenKind::StarStar)) {
            self.bump();
            let neg = if matches!(self.peek_kind(), Some(TokenKind::Minus)) {
                self.bump();
                true
            } else {
                false
            };
            let (exp, espan) = self.expect_integer("an integer exponent after `**`")?;
            let exp = if neg { -exp } else { exp };
            let span = base.span.join(espan);
            return Ok(Expr::new(ExprKind::Pow(Box::new(base), exp), span));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> DiagResult<Expr> {
        match self.peek_kind() {
            Some(TokenKind::Number(_)) => {
                let t = self.bump();
                let TokenKind::Number(n) = &t.kind else {
                    unreachable!()
                };
                Ok(Expr::new(ExprKind::Number(n.clone()), t.span))
            }
            Some(TokenKind::LParen) => {
                self.bump();
                let inner = self.parse_expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                if name == "delta" {
                    return self.parse_delta();
                }
                if name == "D" {
                    return self.parse_deriv_application();
                }
                let ident = self.expect_ident("an identifier")?;
                if is_function(&ident.text) {
                    let open = self.expect(&TokenKind::LParen, "`(` after a function name")?;
                    let _ = open;
                    let arg = self.parse_expr()?;
                    let close = self.expect(&TokenKind::RParen, "`)` closing the call")?;
                    let span = ident.span.join(close);
                    return Ok(Expr::new(
                        ExprKind::Call(ident.text, Box::new(arg)),
                        span,
                    ));
                }
                let indices = self.parse_index_suffixes()?;
                let span = ident.span.join(self.prev_span_if_after(ident.span));
                Ok(Expr::new(ExprKind::Var(ident.text, indices), span))
            }
            _ => Err(self.err_here("expected an expression")),
        }
    }

    fn parse_delta(&mut self) -> DiagResult<Expr> {
        let ident = self.expect_ident("`delta`")?;
        let pos = match self.peek_kind() {
            Some(TokenKind::Caret) => IndexPosition::Upper,
            Some(TokenKind::Underscore) => IndexPosition::Lower,
            _ => {
                return Err(Diagnostic::error(
                    DiagCode::ParseError,
                    ident.span,
                    "`delta` requires two index letters, e.g. `delta^ij`",
                ))
            }
        };
        self.bump();
        let letters = self.expect_ident("two index letters")?;
        let chars: Vec<char> = letters.text.chars().collect();
        if chars.len() != 2 || !chars.iter().all(|c| c.is_ascii_lowercase()) {
            return Err(Diagnostic::error(
                DiagCode::ParseError,
                letters.span,
                "`delta` requires exactly two lowercase index letters",
            ));
        }
        let span = ident.span.join(letters.span);
        Ok(Expr::new(
            ExprKind::Delta(
                IndexSlot {
                    letter: chars[0],
                    position: pos,
                },
                IndexSlot {
                    letter: chars[1],
                    position: pos,
                },
            ),
            span,
        ))
    }

    fn parse_deriv_application(&mut self) -> DiagResult<Expr> {
        let d = self.expect_ident("`D`")?;
        self.expect(&TokenKind::Underscore, "`_` after the derivative symbol `D`")?;
        let index = self.parse_index_letter(IndexPosition::Lower)?;
        if index.letter == 't' {
            return Err(Diagnostic::error(
                DiagCode::ParseError,
                d.span,
                "a time derivative `D_t` is only allowed on the left-hand side",
            ));
        }
        let arg = self.parse_primary()?;
        let span = d.span.join(arg.span);
        Ok(Expr::new(
            ExprKind::Deriv {
                index,
                arg: Box::new(arg),
            },
            span,
        ))
    }

    fn parse_index_letter(&mut self, position: IndexPosition) -> DiagResult<IndexSlot> {
        let ident = self.expect_ident("an index letter")?;
        let letter = single_index_letter(&ident)?;
        Ok(IndexSlot { letter, position })
    }

    /// Zero or more `_abc` / `^ij` suffix groups following an identifier.
    fn parse_index_suffixes(&mut self) -> DiagResult<Vec<IndexSlot>> {
        let mut slots = Vec::new();
        loop {
            let position = match self.peek_kind() {
                Some(TokenKind::Underscore) => IndexPosition::Lower,
                Some(TokenKind::Caret) => IndexPosition::Upper,
                _ => break,
            };
            self.bump();
            let letters = self.expect_ident("index letters")?;
            for c in letters.text.chars() {
                if !c.is_ascii_lowercase() {
                    return Err(Diagnostic::error(
                        DiagCode::ParseError,
                        letters.span,
                        format!("index letters must be single lowercase letters, found `{c}`"),
                    ));
                }
                slots.push(IndexSlot {
                    letter: c,
                    position,
                });
            }
        }
        Ok(slots)
    }

    fn prev_span(&self) -> SourceSpan {
        self.tokens
            .get(self.pos.wrapping_sub(1))
            .map(|t| t.span)
            .unwrap_or(SourceSpan::DUMMY)
    }

    fn prev_span_if_after(&self, base: SourceSpan) -> SourceSpan {
        let prev = self.prev_span();
        if prev == SourceSpan::DUMMY {
            base
        } else {
            prev
        }
    }
}

fn starts_factor(kind: &TokenKind) -> bool {
    matches!(
        kind,
        TokenKind::Number(_) | TokenKind::Ident(_) | TokenKind::LParen
    )
}

fn single_index_letter(ident: &Ident) -> DiagResult<char> {
    let mut chars = ident.text.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_lowercase() => Ok(c),
        _ => Err(Diagnostic::error(
            DiagCode::ParseError,
            ident.span,
            format!(
                "expected a single lowercase index letter, found `{}`",
                ident.text
            ),
        )),
    }
}

/// Declared-name uniqueness within each namespace: grid functions and
/// parameters share one namespace, calculation names another, group names
/// and derivative symbols their own.
fn check_duplicates(ast: &ProgramAst) -> DiagResult<()> {
    use std::collections::HashMap;

    let mut value_names: HashMap<&str, SourceSpan> = HashMap::new();
    for group in &ast.groups {
        for entry in &group.entries {
            if let Some(_first) = value_names.insert(&entry.name.text, entry.name.span) {
                return Err(Diagnostic::error(
                    DiagCode::DuplicateDeclaration,
                    entry.name.span,
                    format!("grid function `{}` is declared twice", entry.name.text),
                ));
            }
            let mut seen = std::collections::HashSet::new();
            for slot in &entry.indices {
                if !seen.insert(slot.letter) {
                    return Err(Diagnostic::error(
                        DiagCode::DuplicateDeclaration,
                        entry.name.span,
                        format!(
                            "tensor declaration `{}` repeats index letter `{}`",
                            entry.name.text, slot.letter
                        ),
                    ));
                }
            }
        }
    }
    for param in &ast.parameters {
        if value_names.insert(&param.name.text, param.name.span).is_some() {
            return Err(Diagnostic::error(
                DiagCode::DuplicateDeclaration,
                param.name.span,
                format!(
                    "`{}` is declared both as a parameter and as another value",
                    param.name.text
                ),
            ));
        }
    }

    let mut group_names: HashMap<&str, SourceSpan> = HashMap::new();
    for group in &ast.groups {
        if group_names.insert(&group.name.text, group.name.span).is_some() {
            return Err(Diagnostic::error(
                DiagCode::DuplicateDeclaration,
                group.name.span,
                format!("group `{}` is declared twice", group.name.text),
            ));
        }
    }

    let mut calc_names: HashMap<&str, SourceSpan> = HashMap::new();
    for calc in &ast.calculations {
        if calc_names.insert(&calc.name.text, calc.name.span).is_some() {
            return Err(Diagnostic::error(
                DiagCode::DuplicateDeclaration,
                calc.name.span,
                format!("calculation `{}` is declared twice", calc.name.text),
            ));
        }
    }

    if let Some(second) = ast.derivatives.get(1) {
        return Err(Diagnostic::error(
            DiagCode::DuplicateDeclaration,
            second.span,
            "the derivative symbol `D` is defined more than once",
        ));
    }

    Ok(())
}
