//! Einstein-summation index checking and tensor-to-component expansion.
//!
//! After expansion, no index letters remain: every assignment targets one
//! concrete grid-function component and its right-hand side is a scalar
//! expression over components, parameters, coordinates, and derivative
//! applications with concrete (sorted) axis lists.

mod expand;
mod indices;

pub use expand::{expand_calculation, expand_equation};
pub use indices::{check_indices, IndexReport};

use num::{BigRational, Signed};

use crate::span::SourceSpan;

/// Built-in single-argument functions, post-resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Log,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sqrt => x.sqrt(),
            Func::Log => x.ln(),
            Func::Abs => x.abs(),
        }
    }
}

/// A point coordinate reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoordRef {
    /// Spatial axis, 0-based.
    Axis(u8),
    Time,
}

/// Scalar expression over concrete components; the result of expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Const(BigRational),
    Param(String),
    Coord(CoordRef),
    /// Point value of a grid-function component.
    Field(String),
    /// Partial derivative of a component along `axes` (1-based, sorted).
    Deriv { field: String, axes: Vec<u8> },
    Neg(Box<ScalarExpr>),
    Add(Box<ScalarExpr>, Box<ScalarExpr>),
    Sub(Box<ScalarExpr>, Box<ScalarExpr>),
    Mul(Box<ScalarExpr>, Box<ScalarExpr>),
    Div(Box<ScalarExpr>, Box<ScalarExpr>),
    Pow(Box<ScalarExpr>, i64),
    Call(Func, Box<ScalarExpr>),
}

impl ScalarExpr {
    pub fn int(v: i64) -> ScalarExpr {
        ScalarExpr::Const(BigRational::from_integer(v.into()))
    }

    fn is_zero(&self) -> bool {
        matches!(self, ScalarExpr::Const(c) if c == &BigRational::from_integer(0.into()))
    }

    fn is_one(&self) -> bool {
        matches!(self, ScalarExpr::Const(c) if c == &BigRational::from_integer(1.into()))
    }

    /// Multiplication with 0/1 identities folded, which is how contracted
    /// Kronecker deltas disappear from expansions.
    pub fn mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
        if a.is_zero() || b.is_zero() {
            return ScalarExpr::int(0);
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        ScalarExpr::Mul(Box::new(a), Box::new(b))
    }

    /// Addition with the 0 identity folded.
    pub fn add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        ScalarExpr::Add(Box::new(a), Box::new(b))
    }

    /// Derivative application in canonical (ascending-axis) form.
    pub fn deriv(field: String, mut axes: Vec<u8>) -> ScalarExpr {
        axes.sort_unstable();
        ScalarExpr::Deriv { field, axes }
    }
}

/// Recursively put every derivative application into canonical sorted-axis
/// form. Idempotent.
pub fn canonicalize_derivatives(expr: &ScalarExpr) -> ScalarExpr {
    use ScalarExpr::*;
    match expr {
        Const(_) | Param(_) | Coord(_) | Field(_) => expr.clone(),
        Deriv { field, axes } => ScalarExpr::deriv(field.clone(), axes.clone()),
        Neg(a) => Neg(Box::new(canonicalize_derivatives(a))),
        Add(a, b) => Add(
            Box::new(canonicalize_derivatives(a)),
            Box::new(canonicalize_derivatives(b)),
        ),
        Sub(a, b) => Sub(
            Box::new(canonicalize_derivatives(a)),
            Box::new(canonicalize_derivatives(b)),
        ),
        Mul(a, b) => Mul(
            Box::new(canonicalize_derivatives(a)),
            Box::new(canonicalize_derivatives(b)),
        ),
        Div(a, b) => Div(
            Box::new(canonicalize_derivatives(a)),
            Box::new(canonicalize_derivatives(b)),
        ),
        Pow(a, n) => Pow(Box::new(canonicalize_derivatives(a)), *n),
        Call(f, a) => Call(*f, Box::new(canonicalize_derivatives(a))),
    }
}

/// Component name for a variable instantiated at concrete axes:
/// rank 0 keeps the name, `v` at axis 2 becomes `v2`, `T` at (1,2) `T12`.
pub fn component_name(var: &str, axes: &[u8]) -> String {
    let mut name = var.to_string();
    for a in axes {
        name.push_str(&a.to_string());
    }
    name
}

/// One scalar assignment produced by expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentAssignment {
    /// Declared variable this targets.
    pub var: String,
    /// Concrete component axes (empty for scalars).
    pub components: Vec<u8>,
    /// True when the source equation was a `D_t` assignment.
    pub time_deriv: bool,
    pub rhs: ScalarExpr,
    pub span: SourceSpan,
}

impl ComponentAssignment {
    /// The component this assignment is about, e.g. `v1` or `rho`.
    pub fn component(&self) -> String {
        component_name(&self.var, &self.components)
    }

    /// The grid function written: `dt_<component>` for time derivatives.
    pub fn output_field(&self) -> String {
        if self.time_deriv {
            format!("dt_{}", self.component())
        } else {
            self.component()
        }
    }
}

impl std::fmt::Display for ComponentAssignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} = {}", self.output_field(), self.rhs)
    }
}

// Precedence-aware printing; the textual form is stable and used by
// `dump-ir --stage=expanded`.
impl std::fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", print_scalar(self, 0))
    }
}

fn print_scalar(e: &ScalarExpr, parent_prec: u8) -> String {
    let (prec, text) = match e {
        ScalarExpr::Const(c) => {
            let p = if c.is_negative() { 3 } else { 5 };
            let s = if c.is_integer() {
                c.numer().to_string()
            } else {
                format!("{}/{}", c.numer(), c.denom())
            };
            (p, s)
        }
        ScalarExpr::Param(name) => (5, name.clone()),
        ScalarExpr::Coord(CoordRef::Axis(a)) => (5, ["x", "y", "z"][*a as usize].to_string()),
        ScalarExpr::Coord(CoordRef::Time) => (5, "t".to_string()),
        ScalarExpr::Field(name) => (5, name.clone()),
        ScalarExpr::Deriv { field, axes } => {
            let axes: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
            (5, format!("PD({},{})", field, axes.join(",")))
        }
        ScalarExpr::Call(func, a) => (5, format!("{}({})", func.name(), print_scalar(a, 0))),
        ScalarExpr::Neg(a) => (3, format!("-{}", print_scalar(a, 3))),
        ScalarExpr::Add(a, b) => (1, format!("{} + {}", print_scalar(a, 1), print_scalar(b, 2))),
        ScalarExpr::Sub(a, b) => (1, format!("{} - {}", print_scalar(a, 1), print_scalar(b, 2))),
        ScalarExpr::Mul(a, b) => (2, format!("{} * {}", print_scalar(a, 2), print_scalar(b, 3))),
        ScalarExpr::Div(a, b) => (2, format!("{} / {}", print_scalar(a, 2), print_scalar(b, 3))),
        ScalarExpr::Pow(a, n) => (4, format!("{}**{}", print_scalar(a, 5), n)),
    };
    if prec < parent_prec {
        format!("({text})")
    } else {
        text
    }
}
