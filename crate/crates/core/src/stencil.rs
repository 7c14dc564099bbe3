//! Finite-difference stencil operators with exact rational coefficients.
//!
//! A stencil approximating the d-th derivative satisfies the moment
//! conditions `sum_k c_k k^m = d! * [m == d]` for `0 <= m < order + d`;
//! coefficients are generated by solving that linear system over the
//! rationals, so the conditions hold exactly and printed tables are
//! reproducible. Conversion to floating point happens at code generation
//! and execution time only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num::{BigInt, BigRational, One, Signed, Zero};
use thiserror::Error;

use crate::diag::{DiagCode, Diagnostic};
use crate::frontend::ast::{DerivDef, ShiftExpr};
use crate::frontend::resolve::Program;
use crate::span::SourceSpan;

#[derive(Debug, Error, PartialEq)]
pub enum StencilError {
    #[error("half-width {half_width} is too small for derivative order {deriv_order}")]
    Infeasible { deriv_order: u32, half_width: u32 },
    #[error("malformed stencil expression: {0}")]
    Malformed(String),
    #[error("the program applies spatial derivatives but declares no derivative operator")]
    MissingDefinition,
}

/// A 1-D derivative operator: integer offsets to exact rational
/// coefficients, scaling as `h^-spacing_power`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StencilOp {
    coeffs: BTreeMap<i64, BigRational>,
    spacing_power: u32,
    deriv_order: u32,
}

impl StencilOp {
    /// Build from raw terms, dropping zero coefficients and summing
    /// duplicates. The derivative order is inferred as the smallest `d`
    /// with `moment(m) = d! * [m == d]` for all `m <= d`; when no such `d`
    /// exists up to `2 * radius`, the operator is kept (order = first
    /// nonzero moment) and flagged inconsistent.
    pub fn from_terms(
        terms: impl IntoIterator<Item = (i64, BigRational)>,
        spacing_power: u32,
    ) -> (StencilOp, bool) {
        let mut coeffs: BTreeMap<i64, BigRational> = BTreeMap::new();
        for (offset, c) in terms {
            let entry = coeffs.entry(offset).or_insert_with(BigRational::zero);
            *entry += c;
        }
        coeffs.retain(|_, c| !c.is_zero());
        let mut op = StencilOp {
            coeffs,
            spacing_power,
            deriv_order: 0,
        };
        let radius = op.radius();
        for d in 0..=(2 * radius as u32) {
            if (0..=d).all(|m| op.moment(m) == expected_moment(d, m)) {
                op.deriv_order = d;
                return (op, true);
            }
        }
        op.deriv_order = (0..).find(|&m| !op.moment(m).is_zero()).unwrap_or(0);
        (op, false)
    }

    /// Centered stencil for the `deriv_order`-th derivative on offsets
    /// `-half_width ..= half_width`, from the exact moment system.
    pub fn centered(deriv_order: u32, half_width: u32) -> Result<StencilOp, StencilError> {
        if deriv_order < 1 || deriv_order > 2 * half_width {
            return Err(StencilError::Infeasible {
                deriv_order,
                half_width,
            });
        }
        let w = half_width as i64;
        let n = (2 * half_width + 1) as usize;
        // Vandermonde system: rows are moments m = 0..2w, columns offsets.
        let mut matrix = vec![vec![BigRational::zero(); n + 1]; n];
        for (m, row) in matrix.iter_mut().enumerate() {
            for (j, k) in (-w..=w).enumerate() {
                row[j] = int_pow(k, m as u32);
            }
            row[n] = expected_moment(deriv_order, m as u32);
        }
        let solution = solve_rational(matrix).expect("Vandermonde system is nonsingular");
        let coeffs = (-w..=w).zip(solution);
        let (op, consistent) = StencilOp::from_terms(coeffs, deriv_order);
        debug_assert!(consistent);
        debug_assert_eq!(op.deriv_order, deriv_order);
        Ok(op)
    }

    /// Identity operator (`shift^0 / dx^0`).
    pub fn identity() -> StencilOp {
        StencilOp {
            coeffs: [(0, BigRational::one())].into_iter().collect(),
            spacing_power: 0,
            deriv_order: 0,
        }
    }

    pub fn coefficients(&self) -> &BTreeMap<i64, BigRational> {
        &self.coeffs
    }

    pub fn spacing_power(&self) -> u32 {
        self.spacing_power
    }

    pub fn deriv_order(&self) -> u32 {
        self.deriv_order
    }

    /// Largest absolute offset with a nonzero coefficient.
    pub fn radius(&self) -> i64 {
        self.coeffs.keys().map(|k| k.abs()).max().unwrap_or(0)
    }

    /// Formal accuracy order: `2w + 1 - d` rounded up to even, the parity
    /// gain of centered stencils.
    pub fn accuracy_order(&self) -> u32 {
        let raw = (2 * self.radius() as u32 + 1).saturating_sub(self.deriv_order);
        raw + raw % 2
    }

    /// `sum_k c_k k^m`.
    pub fn moment(&self, m: u32) -> BigRational {
        self.coeffs
            .iter()
            .map(|(k, c)| c * int_pow(*k, m))
            .fold(BigRational::zero(), |a, b| a + b)
    }

    /// Largest degree `m <= max_m` such that the stencil differentiates
    /// every polynomial of degree `<= m` exactly, determined by applying
    /// the stencil symbolically to `(X + k)^m` and comparing polynomial
    /// coefficients against the true derivative. `None` if it fails
    /// already on constants.
    pub fn verify_order(&self, max_m: u32) -> Option<u32> {
        let mut best = None;
        for m in 0..=max_m {
            // sum_k c_k (X + k)^m as coefficients in X.
            let mut applied = vec![BigRational::zero(); m as usize + 1];
            for (k, c) in &self.coeffs {
                for j in 0..=m {
                    // binomial(m, j) * k^(m - j) X^j
                    applied[j as usize] += c * binomial(m, j) * int_pow(*k, m - j);
                }
            }
            // d-th derivative of X^m: m! / (m - d)! X^(m - d).
            let d = self.deriv_order;
            let mut expected = vec![BigRational::zero(); m as usize + 1];
            if m >= d {
                let mut coeff = BigRational::one();
                for i in 0..d {
                    coeff *= BigRational::from_integer(BigInt::from(m - i));
                }
                expected[(m - d) as usize] = coeff;
            }
            if applied == expected {
                best = Some(m);
            } else {
                break;
            }
        }
        best
    }

    /// Compose with another stencil applied along the same axis:
    /// coefficients convolve, spacing powers and derivative orders add.
    pub fn compose(&self, other: &StencilOp) -> StencilOp {
        let mut coeffs: BTreeMap<i64, BigRational> = BTreeMap::new();
        for (ka, ca) in &self.coeffs {
            for (kb, cb) in &other.coeffs {
                let entry = coeffs.entry(ka + kb).or_insert_with(BigRational::zero);
                *entry += ca * cb;
            }
        }
        coeffs.retain(|_, c| !c.is_zero());
        StencilOp {
            coeffs,
            spacing_power: self.spacing_power + other.spacing_power,
            deriv_order: self.deriv_order + other.deriv_order,
        }
    }

    /// Shift-notation form, e.g. `(-1/2 shift^(-1) +1/2 shift^(+1))/dx^1`.
    pub fn print_shift_notation(&self) -> String {
        let shift = ShiftExpr {
            terms: self.coeffs.iter().map(|(k, c)| (*k, c.clone())).collect(),
            spacing_power: self.spacing_power,
            span: SourceSpan::DUMMY,
        };
        crate::frontend::pretty::print_shift_expr(&shift)
    }

    /// Dense coefficient row over `-radius ..= radius`, zeros included.
    pub fn dense_row(&self) -> Vec<BigRational> {
        let r = self.radius();
        (-r..=r)
            .map(|k| self.coeffs.get(&k).cloned().unwrap_or_else(BigRational::zero))
            .collect()
    }
}

fn expected_moment(d: u32, m: u32) -> BigRational {
    if m == d {
        BigRational::from_integer(factorial(d))
    } else {
        BigRational::zero()
    }
}

fn factorial(n: u32) -> BigInt {
    (1..=n as u64).map(BigInt::from).fold(BigInt::one(), |a, b| a * b)
}

fn binomial(n: u32, k: u32) -> BigRational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k.min(n - k) {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    BigRational::new(num, den)
}

fn int_pow(base: i64, exp: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(base).pow(exp))
}

/// Gaussian elimination with partial (nonzero) pivoting over the rationals.
/// `rows` is an augmented matrix; returns the solution vector, or `None`
/// for a singular system.
fn solve_rational(mut rows: Vec<Vec<BigRational>>) -> Option<Vec<BigRational>> {
    let n = rows.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !rows[r][col].is_zero())?;
        rows.swap(col, pivot);
        let scale = rows[col][col].clone();
        for value in rows[col].iter_mut() {
            *value /= &scale;
        }
        for r in 0..n {
            if r != col && !rows[r][col].is_zero() {
                let factor = rows[r][col].clone();
                for c in col..=n {
                    let delta = &factor * &rows[col][c];
                    rows[r][c] -= delta;
                }
            }
        }
    }
    Some(
        rows.into_iter()
            .map(|row| {
                let last = row.len() - 1;
                row[last].clone()
            })
            .collect(),
    )
}

/// Parse a stencil from shift-notation text, producing warnings for
/// operators that satisfy no moment condition.
pub fn parse_shift_notation(src: &str) -> Result<(StencilOp, Vec<String>), Diagnostic> {
    // Reuse the EDL parser's shift-expression grammar by parsing a synthetic
    // derivative declaration around the text.
    let full = format!("begin derivatives\n  D_i = {src}\nend derivatives\n");
    let ast = crate::frontend::parse_source(&full, "<stencil>").map_err(|mut d| {
        // Spans refer to the synthetic wrapper; don't leak them.
        d.span = SourceSpan::DUMMY;
        d
    })?;
    let DerivDef::Shift(shift) = &ast.derivatives[0].def else {
        return Err(Diagnostic::error(
            DiagCode::MalformedStencilExpr,
            SourceSpan::DUMMY,
            "expected a shift-notation stencil expression",
        ));
    };
    Ok(stencil_from_shift(shift))
}

/// Build a stencil from a parsed shift expression.
pub fn stencil_from_shift(shift: &ShiftExpr) -> (StencilOp, Vec<String>) {
    let (op, consistent) = StencilOp::from_terms(shift.terms.iter().cloned(), shift.spacing_power);
    let mut warnings = Vec::new();
    if !consistent && !op.coeffs.is_empty() {
        warnings.push(format!(
            "stencil satisfies no moment condition up to degree {}; treating it as a \
             derivative of order {}",
            2 * op.radius(),
            op.deriv_order
        ));
    }
    (op, warnings)
}

// ---------------------------------------------------------------------------
// Derivative tables

/// Per-axis derivative operators needed by a compiled program. Keys are
/// `(axis multiplicity in the derivative application, axis)` with 1-based
/// axes, so `PD(f, 1, 1, 2)` looks up (2, axis 1) and (1, axis 2); mixed
/// derivatives are realized at lowering time as tensor products of the
/// per-axis entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTable {
    pub dim: usize,
    /// Half-width actually used for built-in operators.
    pub half_width: u32,
    entries: BTreeMap<(u32, u8), StencilOp>,
}

impl DerivativeTable {
    pub fn get(&self, multiplicity: u32, axis: u8) -> Option<&StencilOp> {
        self.entries.get(&(multiplicity, axis))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(u32, u8), &StencilOp)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest radius over all entries.
    pub fn max_radius(&self) -> i64 {
        self.entries.values().map(|s| s.radius()).max().unwrap_or(0)
    }

    /// Human-readable table, exact fractions, stable layout.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for ((_mult, axis), op) in &self.entries {
            let row: Vec<String> = op
                .dense_row()
                .iter()
                .map(|c| {
                    if c.is_integer() {
                        c.numer().to_string()
                    } else {
                        format!("{}/{}", c.numer(), c.denom())
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "d={} axis={axis} radius={} over h^{}: [{}]",
                op.deriv_order(),
                op.radius(),
                op.spacing_power(),
                row.join(", ")
            );
        }
        out
    }
}

/// Derivative needs of an expanded program: per-axis derivative orders.
pub type DerivNeeds = BTreeSet<(u32, u8)>;

/// Collect per-axis needs from expanded assignments: each `PD(f, axes)`
/// contributes (multiplicity, axis) per distinct axis in the list.
pub fn derivative_needs(assignments: &[crate::expand::ComponentAssignment]) -> DerivNeeds {
    let mut needs = DerivNeeds::new();
    for assignment in assignments {
        collect_needs(&assignment.rhs, &mut needs);
    }
    needs
}

fn collect_needs(expr: &crate::expand::ScalarExpr, needs: &mut DerivNeeds) {
    use crate::expand::ScalarExpr::*;
    match expr {
        Deriv { axes, .. } => {
            let mut mult: BTreeMap<u8, u32> = BTreeMap::new();
            for a in axes {
                *mult.entry(*a).or_default() += 1;
            }
            for (axis, m) in mult {
                needs.insert((m, axis));
            }
        }
        Neg(a) | Pow(a, _) | Call(_, a) => collect_needs(a, needs),
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
            collect_needs(a, needs);
            collect_needs(b, needs);
        }
        Const(_) | Param(_) | Coord(_) | Field(_) => {}
    }
}

/// Build the derivative table for a program. `half_width_override` comes
/// from the CLI accuracy setting and replaces the half-width of built-in
/// declarations. Needs are keyed by per-axis multiplicity; a declaration of
/// derivative order `d` used with multiplicity `m` provides the
/// `d * m`-th derivative along that axis (built-in operators regenerate at
/// that order, explicit stencils self-compose).
pub fn build_table(
    program: &Program,
    needs: &DerivNeeds,
    dim: usize,
    half_width_override: Option<u32>,
    diags: &mut Vec<Diagnostic>,
) -> Result<DerivativeTable, StencilError> {
    let decl = program.ast.derivatives.first();
    let mut entries = BTreeMap::new();
    let mut half_width = half_width_override.unwrap_or(1);

    if !needs.is_empty() {
        let Some(decl) = decl else {
            return Err(StencilError::MissingDefinition);
        };
        match &decl.def {
            DerivDef::BuiltinFd {
                deriv_order,
                half_width: decl_width,
                ..
            } => {
                half_width = half_width_override.unwrap_or(*decl_width);
                for &(mult, axis) in needs {
                    debug_assert!((1..=dim as u8).contains(&axis));
                    let order = deriv_order * mult;
                    // Widen as needed so high multiplicities stay feasible.
                    let w = half_width.max(order.div_ceil(2));
                    if w > half_width {
                        diags.push(Diagnostic::warning(
                            DiagCode::InfeasibleStencil,
                            decl.span,
                            format!(
                                "half-width {half_width} cannot represent the order-{order} \
                                 derivative; widened to {w} for that entry"
                            ),
                        ));
                    }
                    entries.insert((mult, axis), StencilOp::centered(order, w)?);
                }
            }
            DerivDef::Shift(shift) => {
                let (base, warnings) = stencil_from_shift(shift);
                for w in warnings {
                    diags.push(Diagnostic::warning(
                        DiagCode::InconsistentStencil,
                        shift.span,
                        w,
                    ));
                }
                for &(mult, axis) in needs {
                    let mut op = base.clone();
                    for _ in 1..mult {
                        op = op.compose(&base);
                    }
                    entries.insert((mult, axis), op);
                }
            }
        }
    }

    Ok(DerivativeTable {
        dim,
        half_width,
        entries,
    })
}
