//! Name resolution, rank checking, and calculation classification.

use indexmap::IndexMap;
use num::BigRational;

use crate::diag::{DiagCode, Diagnostic};
use crate::frontend::ast::*;
use crate::span::SourceSpan;

/// How a calculation participates in the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalcKind {
    /// Assigns plain (non-`D_t`) targets, at least one of them evolved.
    Initial,
    /// Every target is `D_t` of an evolved variable.
    Rhs,
    /// Assigns only extra (analysis) variables.
    Analysis,
}

impl CalcKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CalcKind::Initial => "initial",
            CalcKind::Rhs => "rhs",
            CalcKind::Analysis => "analysis",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariableInfo {
    pub group: String,
    pub role: GroupRole,
    pub rank: usize,
    pub description: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct ParamInfo {
    pub kind: ParamKind,
    pub description: String,
    pub default: Option<BigRational>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct CalcInfo {
    pub name: String,
    pub kind: CalcKind,
}

/// A resolved program: the AST plus symbol tables and per-calculation
/// classification. Declaration order is preserved throughout.
#[derive(Debug, Clone)]
pub struct Program {
    pub ast: ProgramAst,
    pub variables: IndexMap<String, VariableInfo>,
    pub parameters: IndexMap<String, ParamInfo>,
    pub calculations: Vec<CalcInfo>,
    /// Index into `ast.calculations` of the designated init calculation,
    /// when a calculation with the configured name exists.
    pub init_calc: Option<usize>,
}

impl Program {
    pub fn variable(&self, name: &str) -> Option<&VariableInfo> {
        self.variables.get(name)
    }

    pub fn calculation(&self, name: &str) -> Option<(&CalculationDecl, &CalcInfo)> {
        self.calculations
            .iter()
            .position(|c| c.name == name)
            .map(|i| (&self.ast.calculations[i], &self.calculations[i]))
    }
}

/// Resolve a parsed program. `init_name` selects the designated init
/// calculation (default `Init`); it is allowed to be absent.
pub fn resolve(ast: ProgramAst, init_name: &str) -> Result<Program, Vec<Diagnostic>> {
    let mut diags = Vec::new();

    let mut variables: IndexMap<String, VariableInfo> = IndexMap::new();
    for group in &ast.groups {
        for entry in &group.entries {
            if is_reserved(&entry.name.text) {
                diags.push(Diagnostic::error(
                    DiagCode::ReservedName,
                    entry.name.span,
                    format!(
                        "`{}` is a reserved name and cannot be declared as a grid function",
                        entry.name.text
                    ),
                ));
                continue;
            }
            variables.insert(
                entry.name.text.clone(),
                VariableInfo {
                    group: group.name.text.clone(),
                    role: group.role,
                    rank: entry.indices.len(),
                    description: entry.description.clone(),
                    span: entry.name.span,
                },
            );
        }
    }

    let mut parameters: IndexMap<String, ParamInfo> = IndexMap::new();
    for param in &ast.parameters {
        if is_reserved(&param.name.text) {
            diags.push(Diagnostic::error(
                DiagCode::ReservedName,
                param.name.span,
                format!(
                    "`{}` is a reserved name and cannot be declared as a parameter",
                    param.name.text
                ),
            ));
            continue;
        }
        parameters.insert(
            param.name.text.clone(),
            ParamInfo {
                kind: param.kind,
                description: param.description.clone(),
                default: param.default.clone(),
                span: param.name.span,
            },
        );
    }

    let mut calculations = Vec::new();
    for calc in &ast.calculations {
        let kind = classify_calculation(calc, &variables, &parameters, &mut diags);
        resolve_equations(calc, &variables, &parameters, &mut diags);
        calculations.push(CalcInfo {
            name: calc.name.text.clone(),
            kind,
        });
    }

    let init_calc = ast
        .calculations
        .iter()
        .position(|c| c.name.text == init_name);
    if let Some(i) = init_calc {
        if calculations[i].kind != CalcKind::Initial {
            diags.push(Diagnostic::error(
                DiagCode::MixedCalculationKind,
                ast.calculations[i].name.span,
                format!(
                    "calculation `{init_name}` is designated as initial data but is classified \
                     as `{}`",
                    calculations[i].kind.as_str()
                ),
            ));
        }
    }

    if diags.is_empty() {
        Ok(Program {
            ast,
            variables,
            parameters,
            calculations,
            init_calc,
        })
    } else {
        Err(diags)
    }
}

fn classify_calculation(
    calc: &CalculationDecl,
    variables: &IndexMap<String, VariableInfo>,
    _parameters: &IndexMap<String, ParamInfo>,
    diags: &mut Vec<Diagnostic>,
) -> CalcKind {
    let mut any_time = false;
    let mut any_plain = false;
    let mut any_evolved_target = false;
    let mut seen_targets: std::collections::HashMap<&str, SourceSpan> =
        std::collections::HashMap::new();

    for eq in &calc.equations {
        let target = &eq.target;
        if let Some(_first) = seen_targets.insert(&target.name.text, target.span) {
            diags.push(Diagnostic::error(
                DiagCode::DuplicateComponentTarget,
                target.span,
                format!(
                    "`{}` is assigned more than once in calculation `{}`",
                    target.name.text, calc.name.text
                ),
            ));
        }
        let role = variables.get(&target.name.text).map(|v| v.role);
        if eq.time_deriv {
            any_time = true;
            if role != Some(GroupRole::Evolved) {
                diags.push(Diagnostic::error(
                    DiagCode::UnsupportedConstruct,
                    target.span,
                    format!(
                        "time derivative target `{}` is not an evolved variable",
                        target.name.text
                    ),
                ));
            }
        } else {
            any_plain = true;
            if role == Some(GroupRole::Evolved) {
                any_evolved_target = true;
            }
        }
    }

    if any_time && any_plain {
        let first_conflict = calc
            .equations
            .iter()
            .find(|eq| eq.time_deriv != calc.equations[0].time_deriv)
            .map(|eq| eq.span)
            .unwrap_or(calc.span);
        diags.push(Diagnostic::error(
            DiagCode::MixedCalculationKind,
            first_conflict,
            format!(
                "calculation `{}` mixes time-derivative and plain assignments",
                calc.name.text
            ),
        ));
    }

    if any_time {
        CalcKind::Rhs
    } else if any_evolved_target {
        CalcKind::Initial
    } else {
        CalcKind::Analysis
    }
}

fn resolve_equations(
    calc: &CalculationDecl,
    variables: &IndexMap<String, VariableInfo>,
    parameters: &IndexMap<String, ParamInfo>,
    diags: &mut Vec<Diagnostic>,
) {
    for eq in &calc.equations {
        // Target must be a declared variable with matching rank.
        match variables.get(&eq.target.name.text) {
            None => diags.push(Diagnostic::error(
                DiagCode::UnknownIdentifier,
                eq.target.span,
                format!(
                    "unknown variable `{}` on the left-hand side",
                    eq.target.name.text
                ),
            )),
            Some(info) => {
                if info.rank != eq.target.indices.len() {
                    diags.push(Diagnostic::error(
                        DiagCode::RankMismatch,
                        eq.target.span,
                        format!(
                            "`{}` has rank {} but is written with {} index slot(s)",
                            eq.target.name.text,
                            info.rank,
                            eq.target.indices.len()
                        ),
                    ));
                }
            }
        }
        resolve_expr(&eq.rhs, variables, parameters, diags);
    }
}

fn resolve_expr(
    expr: &Expr,
    variables: &IndexMap<String, VariableInfo>,
    parameters: &IndexMap<String, ParamInfo>,
    diags: &mut Vec<Diagnostic>,
) {
    match &expr.kind {
        ExprKind::Number(_) | ExprKind::Delta(..) => {}
        ExprKind::Var(name, indices) => {
            if let Some(info) = variables.get(name) {
                if info.rank != indices.len() {
                    diags.push(Diagnostic::error(
                        DiagCode::RankMismatch,
                        expr.span,
                        format!(
                            "`{name}` has rank {} but is used with {} index slot(s)",
                            info.rank,
                            indices.len()
                        ),
                    ));
                }
            } else if parameters.contains_key(name) || is_coordinate(name) {
                if !indices.is_empty() {
                    diags.push(Diagnostic::error(
                        DiagCode::RankMismatch,
                        expr.span,
                        format!("`{name}` is a scalar and cannot carry index slots"),
                    ));
                }
            } else {
                diags.push(Diagnostic::error(
                    DiagCode::UnknownIdentifier,
                    expr.span,
                    format!("unknown identifier `{name}`"),
                ));
            }
        }
        ExprKind::Deriv { arg, .. } => {
            // Derivatives apply to variables (possibly nested derivatives of
            // one); anything else has no post-expansion representation.
            match deriv_ground(arg) {
                Some(ground) => match &ground.kind {
                    ExprKind::Var(name, _) if variables.contains_key(name) => {
                        resolve_expr(ground, variables, parameters, diags);
                    }
                    ExprKind::Var(name, _) => {
                        diags.push(Diagnostic::error(
                            DiagCode::UnsupportedConstruct,
                            ground.span,
                            format!(
                                "spatial derivatives apply to grid functions; `{name}` is not one"
                            ),
                        ));
                    }
                    _ => unreachable!("deriv_ground returns Var leaves only"),
                },
                None => diags.push(Diagnostic::error(
                    DiagCode::UnsupportedConstruct,
                    expr.span,
                    "spatial derivative of a compound expression is not supported; introduce \
                     an intermediate grid function instead",
                )),
            }
        }
        ExprKind::Call(_, arg) => resolve_expr(arg, variables, parameters, diags),
        ExprKind::Neg(a) => resolve_expr(a, variables, parameters, diags),
        ExprKind::Bin(_, a, b) => {
            resolve_expr(a, variables, parameters, diags);
            resolve_expr(b, variables, parameters, diags);
        }
        ExprKind::Pow(a, _) => resolve_expr(a, variables, parameters, diags),
    }
}

/// The variable leaf under a (possibly nested) derivative application, or
/// `None` when the argument is compound.
pub fn deriv_ground(expr: &Expr) -> Option<&Expr> {
    match &expr.kind {
        ExprKind::Var(..) => Some(expr),
        ExprKind::Deriv { arg, .. } => deriv_ground(arg),
        _ => None,
    }
}
