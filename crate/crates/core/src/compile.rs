//! The compilation pipeline: source text to optimized kernels.

use std::collections::BTreeMap;

use crate::diag::{DiagCode, Diagnostic};
use crate::expand::{expand_calculation, ComponentAssignment};
use crate::frontend::resolve::{CalcKind, Program};
use crate::frontend::{parse_source, resolve, DEFAULT_INIT_CALC};
use crate::ir::passes::{dce, fission, peephole, run_pipeline, PassKind, PassReport};
use crate::ir::{lower::lower, KernelIr};
use crate::stencil::{build_table, derivative_needs, DerivativeTable};

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub dim: usize,
    /// Stencil half-width override (`--order N` sets `N / 2`).
    pub half_width: Option<u32>,
    pub init_calc: String,
    pub passes: Vec<PassKind>,
    /// Per-calculation output partitions for kernel fission.
    pub fission: BTreeMap<String, Vec<Vec<String>>>,
    pub module_name: Option<String>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            dim: 1,
            half_width: None,
            init_calc: DEFAULT_INIT_CALC.to_string(),
            passes: default_passes(),
            fission: BTreeMap::new(),
            module_name: None,
        }
    }
}

impl CompileOptions {
    pub fn with_dim(dim: usize) -> Self {
        CompileOptions {
            dim,
            ..Default::default()
        }
    }
}

pub fn default_passes() -> Vec<PassKind> {
    vec![PassKind::Dce, PassKind::Cse, PassKind::Peephole]
}

#[derive(Debug)]
pub enum CompileError {
    /// Spanned diagnostics from the source program.
    Source(Vec<Diagnostic>),
    /// Configuration problems (bad partition, unknown pass, ...).
    Config(String),
}

impl std::fmt::Display for CompileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CompileError::Source(diags) => {
                write!(f, "{} diagnostic(s)", diags.len())
            }
            CompileError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledKernel {
    /// Source calculation name.
    pub calc: String,
    pub kind: CalcKind,
    pub ir: KernelIr,
    pub report: PassReport,
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub module: String,
    pub dim: usize,
    pub program: Program,
    pub table: DerivativeTable,
    /// Expanded assignments per calculation, in source order.
    pub expanded: Vec<(String, Vec<ComponentAssignment>)>,
    /// Optimized kernels in schedule order (post-fission: a calculation may
    /// map to several).
    pub kernels: Vec<CompiledKernel>,
    /// Non-fatal diagnostics (stencil warnings and the like).
    pub warnings: Vec<Diagnostic>,
}

impl CompiledProgram {
    pub fn kernels_of_kind(&self, kind: CalcKind) -> Vec<&CompiledKernel> {
        self.kernels.iter().filter(|k| k.kind == kind).collect()
    }

    pub fn kernels_for_calc(&self, calc: &str) -> Vec<&CompiledKernel> {
        self.kernels.iter().filter(|k| k.calc == calc).collect()
    }

    /// Kernels of the designated init calculation.
    pub fn init_kernels(&self) -> Vec<&CompiledKernel> {
        match self.program.init_calc {
            Some(i) => self.kernels_for_calc(&self.program.calculations[i].name),
            None => Vec::new(),
        }
    }

    pub fn rhs_kernels(&self) -> Vec<&CompiledKernel> {
        self.kernels_of_kind(CalcKind::Rhs)
    }

    pub fn analysis_kernels(&self) -> Vec<&CompiledKernel> {
        self.kernels_of_kind(CalcKind::Analysis)
    }

    /// Largest per-axis stencil radius over every kernel.
    pub fn max_radius(&self) -> i64 {
        self.kernels
            .iter()
            .flat_map(|k| k.ir.radius())
            .max()
            .unwrap_or(0)
    }

    /// Grid-function components of the state vector plus extras, with their
    /// roles, in declaration order.
    pub fn field_components(&self) -> Vec<(String, crate::frontend::ast::GroupRole)> {
        let mut out = Vec::new();
        for (name, info) in &self.program.variables {
            for axes in component_axes(info.rank, self.dim) {
                out.push((crate::expand::component_name(name, &axes), info.role));
            }
        }
        out
    }
}

fn has_derivative(expr: &crate::expand::ScalarExpr) -> bool {
    use crate::expand::ScalarExpr::*;
    match expr {
        Deriv { .. } => true,
        Const(_) | Param(_) | Coord(_) | Field(_) => false,
        Neg(a) | Pow(a, _) | Call(_, a) => has_derivative(a),
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
            has_derivative(a) || has_derivative(b)
        }
    }
}

/// All axis tuples of a rank-`rank` tensor in `dim` dimensions, row-major.
pub fn component_axes(rank: usize, dim: usize) -> Vec<Vec<u8>> {
    let mut combos = vec![Vec::new()];
    for _ in 0..rank {
        let mut next = Vec::new();
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

/// Compile EDL source through expansion, lowering, and the configured pass
/// pipeline.
pub fn compile_source(
    source: &str,
    file: &str,
    opts: &CompileOptions,
) -> Result<CompiledProgram, CompileError> {
    if !(1..=3).contains(&opts.dim) {
        return Err(CompileError::Config(format!(
            "dimension must be 1, 2, or 3 (got {})",
            opts.dim
        )));
    }
    let ast = parse_source(source, file).map_err(|d| CompileError::Source(vec![d]))?;
    let program = resolve(ast, &opts.init_calc).map_err(CompileError::Source)?;

    // Expand every calculation, collecting diagnostics across them.
    let mut expanded = Vec::new();
    let mut errors = Vec::new();
    for calc in &program.ast.calculations {
        match expand_calculation(calc, &program, opts.dim) {
            Ok(assignments) => expanded.push((calc.name.text.clone(), assignments)),
            Err(d) => errors.push(d),
        }
    }
    if !errors.is_empty() {
        return Err(CompileError::Source(errors));
    }

    let mut warnings = Vec::new();
    let all_assignments: Vec<ComponentAssignment> = expanded
        .iter()
        .flat_map(|(_, a)| a.iter().cloned())
        .collect();
    let needs = derivative_needs(&all_assignments);
    let table = build_table(&program, &needs, opts.dim, opts.half_width, &mut warnings)
        .map_err(|e| {
            // Point at the declaration when there is one, otherwise at the
            // first equation that takes a derivative.
            let span = program
                .ast
                .derivatives
                .first()
                .map(|d| d.span)
                .or_else(|| {
                    all_assignments
                        .iter()
                        .find(|a| has_derivative(&a.rhs))
                        .map(|a| a.span)
                })
                .unwrap_or(crate::span::SourceSpan::DUMMY);
            CompileError::Source(vec![Diagnostic::error(
                DiagCode::MissingDerivativeDefinition,
                span,
                e.to_string(),
            )])
        })?;

    // Lower and optimize per calculation, then split per the fission map.
    let mut kernels = Vec::new();
    for (idx, (calc_name, assignments)) in expanded.iter().enumerate() {
        let kind = program.calculations[idx].kind;
        let raw = lower(calc_name, assignments, &table, opts.dim)
            .map_err(|d| CompileError::Source(vec![d]))?;
        let mut report = PassReport::default();
        let optimized = run_pipeline(&raw, &opts.passes, &mut report);
        match opts.fission.get(calc_name) {
            Some(partition) => {
                let parts = fission(&optimized, partition)
                    .map_err(|e| CompileError::Config(e.to_string()))?;
                for ir in parts {
                    kernels.push(CompiledKernel {
                        calc: calc_name.clone(),
                        kind,
                        ir,
                        report: report.clone(),
                    });
                }
            }
            None => kernels.push(CompiledKernel {
                calc: calc_name.clone(),
                kind,
                ir: optimized,
                report,
            }),
        }
    }

    let module = opts.module_name.clone().unwrap_or_else(|| {
        std::path::Path::new(file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "module".to_string())
    });

    Ok(CompiledProgram {
        module,
        dim: opts.dim,
        program,
        table,
        expanded,
        kernels,
        warnings,
    })
}

/// Pipeline stages exposed by `dump-ir`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpStage {
    Expanded,
    Lowered,
    Dce,
    Cse,
    Peephole,
    Final,
}

impl DumpStage {
    pub fn from_name(name: &str) -> Option<DumpStage> {
        Some(match name {
            "expanded" => DumpStage::Expanded,
            "lowered" => DumpStage::Lowered,
            "dce" => DumpStage::Dce,
            "cse" => DumpStage::Cse,
            "peephole" => DumpStage::Peephole,
            "final" => DumpStage::Final,
            _ => return None,
        })
    }
}

/// Textual IR at a pipeline stage. `Lowered..Peephole` show the fixed
/// default pipeline prefix applied to the raw lowering (independent of
/// `--passes`); `Final` shows the configured result, including fission.
pub fn dump_ir(
    source: &str,
    file: &str,
    opts: &CompileOptions,
    stage: DumpStage,
    calc_filter: Option<&str>,
) -> Result<String, CompileError> {
    let compiled = compile_source(source, file, opts)?;
    if let Some(filter) = calc_filter {
        if !compiled.expanded.iter().any(|(name, _)| name == filter) {
            return Err(CompileError::Config(format!(
                "no calculation named `{filter}`; program has: {}",
                compiled
                    .expanded
                    .iter()
                    .map(|(n, _)| n.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
    }
    let selected = |name: &str| calc_filter.map_or(true, |f| f == name);

    let mut out = String::new();
    match stage {
        DumpStage::Expanded => {
            for (name, assignments) in &compiled.expanded {
                if !selected(name) {
                    continue;
                }
                out.push_str(&format!("calculation {name}\n"));
                for a in assignments {
                    out.push_str(&format!("  {a}\n"));
                }
            }
        }
        DumpStage::Final => {
            for kernel in &compiled.kernels {
                if !selected(&kernel.calc) {
                    continue;
                }
                out.push_str(&kernel.ir.to_text());
            }
        }
        _ => {
            for (idx, (name, assignments)) in compiled.expanded.iter().enumerate() {
                if !selected(name) {
                    continue;
                }
                let _ = idx;
                let raw = lower(name, assignments, &compiled.table, opts.dim)
                    .map_err(|d| CompileError::Source(vec![d]))?;
                let staged = match stage {
                    DumpStage::Lowered => raw,
                    DumpStage::Dce => dce(&raw).0,
                    DumpStage::Cse => {
                        let (k, _) = crate::ir::passes::cse(&dce(&raw).0);
                        k
                    }
                    DumpStage::Peephole => {
                        let (k, _) = crate::ir::passes::cse(&dce(&raw).0);
                        peephole(&k).0
                    }
                    _ => unreachable!(),
                };
                out.push_str(&staged.to_text());
            }
        }
    }
    Ok(out)
}
