//! Abstract syntax tree for EDL programs.

use num::BigRational;

use crate::span::SourceSpan;

/// An identifier together with where it was written.
#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub text: String,
    pub span: SourceSpan,
}

impl Ident {
    pub fn new(text: impl Into<String>, span: SourceSpan) -> Self {
        Ident {
            text: text.into(),
            span,
        }
    }
}

/// Whether an index slot was written as a subscript (`v_i`) or a
/// superscript (`delta^ij`). Contraction treats both alike (flat space);
/// the distinction is kept for faithful printing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexPosition {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexSlot {
    pub letter: char,
    pub position: IndexPosition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramAst {
    /// Source file name, used when rendering diagnostics.
    pub file: String,
    pub groups: Vec<GroupDecl>,
    pub parameters: Vec<ParamDecl>,
    pub calculations: Vec<CalculationDecl>,
    pub derivatives: Vec<DerivativeDecl>,
}

/// The group named `Evolved` holds the state vector; every other group
/// holds extra (analysis) quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRole {
    Evolved,
    Extra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDecl {
    pub name: Ident,
    pub role: GroupRole,
    pub entries: Vec<GroupEntry>,
    pub span: SourceSpan,
}

/// One line of a group block: a tensor of grid functions with `indices.len()`
/// slots plus a documentation string.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEntry {
    pub name: Ident,
    pub indices: Vec<IndexSlot>,
    pub description: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Int,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Real => "real",
            ParamKind::Int => "int",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: Ident,
    pub kind: ParamKind,
    pub description: String,
    pub default: Option<BigRational>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalculationDecl {
    pub name: Ident,
    pub equations: Vec<Equation>,
    pub span: SourceSpan,
}

/// `lhs = rhs`, optionally with a `D_t` wrapper on the left. The left-hand
/// side is always a plain (possibly indexed) variable reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub time_deriv: bool,
    pub target: VarTerm,
    pub rhs: Expr,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarTerm {
    pub name: Ident,
    pub indices: Vec<IndexSlot>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Exact numeric literal.
    Number(BigRational),
    /// Variable, parameter, or built-in coordinate; classified in resolve.
    Var(String, Vec<IndexSlot>),
    /// Kronecker delta with two index letters.
    Delta(IndexSlot, IndexSlot),
    /// Spatial derivative application `D_i <factor>`.
    Deriv { index: IndexSlot, arg: Box<Expr> },
    /// Built-in single-argument function call.
    Call(String, Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Integer power `base ** exponent`.
    Pow(Box<Expr>, i64),
}

impl Expr {
    pub fn new(kind: ExprKind, span: SourceSpan) -> Self {
        Expr { kind, span }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeDecl {
    /// Operator symbol; the language reserves `D`.
    pub symbol: Ident,
    pub index: IndexSlot,
    pub def: DerivDef,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DerivDef {
    /// `FiniteDifferencingOperator[deriv_order, half_width, direction]`.
    BuiltinFd {
        deriv_order: u32,
        half_width: u32,
        direction: char,
    },
    /// Explicit stencil in shift notation:
    /// `(c shift^(k) ...)/dx^p` with exact rational coefficients.
    Shift(ShiftExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftExpr {
    /// (offset, coefficient) pairs in source order.
    pub terms: Vec<(i64, BigRational)>,
    /// Power of the grid spacing in the divisor.
    pub spacing_power: u32,
    pub span: SourceSpan,
}

/// Built-in coordinates usable in calculations.
pub const COORDINATES: &[&str] = &["r", "x", "y", "z", "t"];

/// Built-in single-argument functions.
pub const FUNCTIONS: &[&str] = &["exp", "sin", "cos", "sqrt", "log", "abs"];

/// Names with fixed meaning in the language; not declarable as variables or
/// parameters. `dx`/`dy`/`dz` are the grid-spacing symbols of emitted code.
pub const RESERVED: &[&str] = &[
    "D", "delta", "shift", "dx", "dy", "dz", "FiniteDifferencingOperator",
];

pub fn is_coordinate(name: &str) -> bool {
    COORDINATES.contains(&name)
}

pub fn is_function(name: &str) -> bool {
    FUNCTIONS.contains(&name)
}

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name) || is_coordinate(name) || is_function(name)
}

// ---------------------------------------------------------------------------
// Span erasure, for structural comparisons (round-trip tests and the like).

impl ProgramAst {
    /// A copy of the AST with every span replaced by `SourceSpan::DUMMY`,
    /// so two parses can be compared structurally.
    pub fn with_dummy_spans(&self) -> ProgramAst {
        ProgramAst {
            file: self.file.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupDecl {
                    name: strip_ident(&g.name),
                    role: g.role,
                    entries: g
                        .entries
                        .iter()
                        .map(|e| GroupEntry {
                            name: strip_ident(&e.name),
                            indices: e.indices.clone(),
                            description: e.description.clone(),
                            span: SourceSpan::DUMMY,
                        })
                        .collect(),
                    span: SourceSpan::DUMMY,
                })
                .collect(),
            parameters: self
                .parameters
                .iter()
                .map(|p| ParamDecl {
                    name: strip_ident(&p.name),
                    kind: p.kind,
                    description: p.description.clone(),
                    default: p.default.clone(),
                    span: SourceSpan::DUMMY,
                })
                .collect(),
            calculations: self
                .calculations
                .iter()
                .map(|c| CalculationDecl {
                    name: strip_ident(&c.name),
                    equations: c
                        .equations
                        .iter()
                        .map(|eq| Equation {
                            time_deriv: eq.time_deriv,
                            target: VarTerm {
                                name: strip_ident(&eq.target.name),
                                indices: eq.target.indices.clone(),
                                span: SourceSpan::DUMMY,
                            },
                            rhs: strip_expr(&eq.rhs),
                            span: SourceSpan::DUMMY,
                        })
                        .collect(),
                    span: SourceSpan::DUMMY,
                })
                .collect(),
            derivatives: self
                .derivatives
                .iter()
                .map(|d| DerivativeDecl {
                    symbol: strip_ident(&d.symbol),
                    index: d.index,
                    def: match &d.def {
                        DerivDef::BuiltinFd {
                            deriv_order,
                            half_width,
                            direction,
                        } => DerivDef::BuiltinFd {
                            deriv_order: *deriv_order,
                            half_width: *half_width,
                            direction: *direction,
                        },
                        DerivDef::Shift(s) => DerivDef::Shift(ShiftExpr {
                            terms: s.terms.clone(),
                            spacing_power: s.spacing_power,
                            span: SourceSpan::DUMMY,
                        }),
                    },
                    span: SourceSpan::DUMMY,
                })
                .collect(),
        }
    }
}

fn strip_ident(i: &Ident) -> Ident {
    Ident::new(i.text.clone(), SourceSpan::DUMMY)
}

fn strip_expr(e: &Expr) -> Expr {
    let kind = match &e.kind {
        ExprKind::Number(n) => ExprKind::Number(n.clone()),
        ExprKind::Var(n, idx) => ExprKind::Var(n.clone(), idx.clone()),
        ExprKind::Delta(a, b) => ExprKind::Delta(*a, *b),
        ExprKind::Deriv { index, arg } => ExprKind::Deriv {
            index: *index,
            arg: Box::new(strip_expr(arg)),
        },
        ExprKind::Call(f, a) => ExprKind::Call(f.clone(), Box::new(strip_expr(a))),
        ExprKind::Neg(a) => ExprKind::Neg(Box::new(strip_expr(a))),
        ExprKind::Bin(op, a, b) => {
            ExprKind::Bin(*op, Box::new(strip_expr(a)), Box::new(strip_expr(b)))
        }
        ExprKind::Pow(a, n) => ExprKind::Pow(Box::new(strip_expr(a)), *n),
    };
    Expr::new(kind, SourceSpan::DUMMY)
}
