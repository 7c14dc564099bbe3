//! Source emission: portable loop kernels and the module manifest.
//!
//! The emitted dialect is a small C-like language meant for inspection,
//! golden testing, and consumption by other toolchains (see
//! `docs/kernel-dialect.md`). Arrays are padded by the kernel's stencil
//! radius; the loop nest covers `[radius, n_axis - radius)` per axis with
//! the contiguous axis innermost, and `idx(...)` is the row-major linear
//! index helper. Output is deterministic byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use num::ToPrimitive;

use crate::compile::CompiledProgram;
use crate::expand::CoordRef;
use crate::frontend::ast::GroupRole;
use crate::frontend::resolve::CalcKind;
use crate::ir::{KernelIr, Op, ValueId};

const AXIS_VARS: [&str; 3] = ["i", "j", "k"];
const SPACING: [&str; 3] = ["dx", "dy", "dz"];
const ORIGIN: [&str; 3] = ["x0", "y0", "z0"];

/// Emit one kernel as loop source.
pub fn emit_kernel(k: &KernelIr) -> String {
    let mut out = String::new();
    let radius = k.radius();
    let reads: Vec<String> = k.read_fields().into_iter().collect();
    let writes: Vec<String> = k.writes().into_iter().collect();
    let params: Vec<String> = k.params().into_iter().collect();

    let _ = writeln!(out, "// kernel: {}", k.name);
    let _ = writeln!(out, "// dim: {}", k.dim);
    let _ = writeln!(
        out,
        "// radius: [{}]",
        radius.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(out, "// reads: {}", list_or_dash(&reads));
    let _ = writeln!(out, "// writes: {}", list_or_dash(&writes));
    let _ = writeln!(out, "// params: {}", list_or_dash(&params));
    let _ = writeln!(out, "// arrays are padded by the radius; n0..n{} are the padded extents;", k.dim - 1);
    let _ = writeln!(out, "// x0/y0/z0 are the coordinates of padded index 0.");
    out.push_str(&idx_helper(k.dim));

    if k.outputs.is_empty() {
        // No outputs: the loop would be a no-op, so elide it.
        let _ = writeln!(out, "kernel {} {{", k.name);
        let _ = writeln!(out, "}}");
        return out;
    }

    let _ = writeln!(out, "kernel {} {{", k.name);
    // Outermost axis last, so axis 0 (contiguous) is the inner loop.
    for axis in (0..k.dim).rev() {
        let var = AXIS_VARS[axis];
        let r = radius[axis];
        let lo = r.to_string();
        let hi = if r == 0 {
            format!("n{axis}")
        } else {
            format!("n{axis} - {r}")
        };
        let indent = "  ".repeat(k.dim - axis);
        let _ = writeln!(out, "{indent}for (int {var} = {lo}; {var} < {hi}; ++{var}) {{");
    }

    let body_indent = "  ".repeat(k.dim + 1);
    let uses = use_counts(k);
    let invariant = invariant_flags(k);
    let mut temp_names: Vec<Option<String>> = vec![None; k.body.len()];
    let mut next_temp = 0usize;
    let mut outputs_by_value: BTreeMap<ValueId, Vec<&str>> = BTreeMap::new();
    for (field, vid) in &k.outputs {
        outputs_by_value.entry(*vid).or_default().push(field);
    }

    for (i, op) in k.body.iter().enumerate() {
        // Point-dependent values shared by several uses become temps;
        // loop-invariant scalar expressions (constants and parameters) are
        // inlined, which keeps the classic `(f[i+1] - f[i-1]) / (2 * dx)`
        // statement shape.
        if uses[i] != 1 && !invariant[i] {
            let name = format!("t{next_temp}");
            next_temp += 1;
            let text = render(op, k, &temp_names, 0);
            let _ = writeln!(out, "{body_indent}const double {name} = {text};");
            temp_names[i] = Some(name);
        }
        if let Some(fields) = outputs_by_value.get(&i) {
            for field in fields {
                let text = match &temp_names[i] {
                    Some(name) => name.clone(),
                    None => render(op, k, &temp_names, 0),
                };
                let _ = writeln!(out, "{body_indent}{field}[{}] = {text};", idx_call(k.dim, &[0; 3]));
            }
        }
    }

    for axis in 0..k.dim {
        let indent = "  ".repeat(k.dim - axis);
        let _ = writeln!(out, "{indent}}}");
    }
    let _ = writeln!(out, "}}");
    out
}

fn list_or_dash(items: &[String]) -> String {
    if items.is_empty() {
        "-".to_string()
    } else {
        items.join(" ")
    }
}

fn idx_helper(dim: usize) -> String {
    match dim {
        1 => "int idx(int i) { return i; }\n".to_string(),
        2 => "int idx(int i, int j) { return i + n0 * j; }\n".to_string(),
        _ => "int idx(int i, int j, int k) { return i + n0 * (j + n1 * k); }\n".to_string(),
    }
}

/// `idx(i + 1, j, k)`-style call for a load offset.
fn idx_call(dim: usize, offsets: &[i64]) -> String {
    let args: Vec<String> = (0..dim)
        .map(|axis| {
            let var = AXIS_VARS[axis];
            let o = offsets.get(axis).copied().unwrap_or(0);
            match o.cmp(&0) {
                std::cmp::Ordering::Equal => var.to_string(),
                std::cmp::Ordering::Greater => format!("{var} + {o}"),
                std::cmp::Ordering::Less => format!("{var} - {}", -o),
            }
        })
        .collect();
    format!("idx({})", args.join(", "))
}

/// True for values that do not depend on the sweep point: constants,
/// parameters, the time coordinate, and arithmetic over those.
fn invariant_flags(k: &KernelIr) -> Vec<bool> {
    let mut invariant = vec![false; k.body.len()];
    for (i, op) in k.body.iter().enumerate() {
        invariant[i] = match op {
            Op::Const(_) | Op::Param(_) | Op::Coord(CoordRef::Time) => true,
            Op::Load { .. } | Op::Coord(CoordRef::Axis(_)) => false,
            other => other.operands().iter().all(|&v| invariant[v]),
        };
    }
    invariant
}

/// How many times each value is consumed (operand edges plus outputs).
/// Values used exactly once are inlined at their use site.
fn use_counts(k: &KernelIr) -> Vec<usize> {
    let mut uses = vec![0usize; k.body.len()];
    for op in &k.body {
        for v in op.operands() {
            uses[v] += 1;
        }
    }
    for (_, vid) in &k.outputs {
        uses[*vid] += 1;
    }
    uses
}

// Expression precedence: additive 1, multiplicative 2, prefix minus 3,
// atoms 4. Parenthesize a child whose precedence is below the context
// (or equal, for the right side of `-`, `/`).
fn render(op: &Op, k: &KernelIr, temps: &[Option<String>], parent_prec: u8) -> String {
    let (prec, text) = match op {
        Op::Const(c) => {
            if c.is_integer() {
                let neg = c < &num::BigRational::from_integer(0.into());
                (if neg { 3 } else { 4 }, c.numer().to_string())
            } else {
                let v = c.to_f64().expect("constant fits in f64");
                (if v < 0.0 { 3 } else { 4 }, format!("{v}"))
            }
        }
        Op::Param(p) => (4, p.clone()),
        Op::Coord(CoordRef::Time) => (4, "t".to_string()),
        Op::Coord(CoordRef::Axis(a)) => {
            let axis = *a as usize;
            (
                1,
                format!(
                    "{} + {} * {}",
                    ORIGIN[axis], AXIS_VARS[axis], SPACING[axis]
                ),
            )
        }
        Op::Load { field, offsets } => (4, format!("{field}[{}]", idx_call(k.dim, offsets))),
        Op::Neg(a) => (3, format!("-{}", operand(*a, k, temps, 3))),
        Op::Add(a, b) => (
            1,
            format!("{} + {}", operand(*a, k, temps, 1), operand(*b, k, temps, 2)),
        ),
        Op::Sub(a, b) => (
            1,
            format!("{} - {}", operand(*a, k, temps, 1), operand(*b, k, temps, 2)),
        ),
        Op::Mul(a, b) => (
            2,
            format!("{} * {}", operand(*a, k, temps, 2), operand(*b, k, temps, 3)),
        ),
        Op::Div(a, b) => (
            2,
            format!("{} / {}", operand(*a, k, temps, 2), operand(*b, k, temps, 3)),
        ),
        Op::Pow(a, n) => (4, format!("pow({}, {n})", operand(*a, k, temps, 0))),
        Op::Call(f, a) => (4, format!("{}({})", f.name(), operand(*a, k, temps, 0))),
        Op::Mad(a, b, c) => (
            4,
            format!(
                "mad({}, {}, {})",
                operand(*a, k, temps, 0),
                operand(*b, k, temps, 0),
                operand(*c, k, temps, 0)
            ),
        ),
    };
    if prec < parent_prec {
        format!("({text})")
    } else {
        text
    }
}

fn operand(v: ValueId, k: &KernelIr, temps: &[Option<String>], parent_prec: u8) -> String {
    match &temps[v] {
        Some(name) => name.clone(),
        None => render(&k.body[v], k, temps, parent_prec),
    }
}

// ---------------------------------------------------------------------------
// Module emission

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedModule {
    pub name: String,
    pub manifest: String,
    /// `(kernel name, source text)` in schedule order.
    pub kernels: Vec<(String, String)>,
    pub readme: String,
}

/// Render a compiled program as a self-describing module.
pub fn emit_module(compiled: &CompiledProgram) -> EmittedModule {
    let kernels: Vec<(String, String)> = compiled
        .kernels
        .iter()
        .map(|k| (k.ir.name.clone(), emit_kernel(&k.ir)))
        .collect();
    EmittedModule {
        name: compiled.module.clone(),
        manifest: render_manifest(compiled),
        kernels,
        readme: render_readme(compiled),
    }
}

fn render_manifest(compiled: &CompiledProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "module: {}", compiled.module);
    let _ = writeln!(out, "dim: {}", compiled.dim);
    let _ = writeln!(out, "order: {}", 2 * compiled.table.half_width);
    let _ = writeln!(out, "ghost_width: {}", compiled.max_radius());
    let _ = writeln!(out);

    let _ = writeln!(out, "[functions]");
    for (name, info) in &compiled.program.variables {
        for axes in crate::compile::component_axes(info.rank, compiled.dim) {
            let component = crate::expand::component_name(name, &axes);
            let role = match info.role {
                GroupRole::Evolved => "evolved",
                GroupRole::Extra => "extra",
            };
            let _ = writeln!(out, "{component}: group={} role={role}", info.group);
        }
    }
    let _ = writeln!(out);

    if !compiled.program.parameters.is_empty() {
        let _ = writeln!(out, "[parameters]");
        for (name, info) in &compiled.program.parameters {
            let default = match &info.default {
                Some(d) => crate::frontend::pretty::print_number(d),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{name}: kind={} default={default} desc=\"{}\"",
                info.kind.as_str(),
                info.description
            );
        }
        let _ = writeln!(out);
    }

    for kernel in &compiled.kernels {
        let _ = writeln!(out, "[calculation {}]", kernel.ir.name);
        let role = match kernel.kind {
            CalcKind::Initial => "initial",
            CalcKind::Rhs => "rhs",
            CalcKind::Analysis => "analysis",
        };
        let _ = writeln!(out, "role: {role}");
        let radius: Vec<String> = kernel.ir.radius().iter().map(|r| r.to_string()).collect();
        let _ = writeln!(out, "radius: [{}]", radius.join(", "));
        let reads: Vec<String> = kernel.ir.read_fields().into_iter().collect();
        let writes: Vec<String> = kernel.ir.writes().into_iter().collect();
        let _ = writeln!(out, "reads: {}", list_or_dash(&reads));
        let _ = writeln!(out, "writes: {}", list_or_dash(&writes));
        let _ = writeln!(out, "source: kernels/{}.src", kernel.ir.name);
        let _ = writeln!(out);
    }

    if !compiled.table.is_empty() {
        let _ = writeln!(out, "[derivatives]");
        out.push_str(&compiled.table.render());
    }
    out
}

fn render_readme(compiled: &CompiledProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# module {}", compiled.module);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Generated {}-dimensional kernels at finite-difference order {}.",
        compiled.dim,
        2 * compiled.table.half_width
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "Grid functions:");
    for (name, info) in &compiled.program.variables {
        let _ = writeln!(
            out,
            "- {name} (rank {}, group {}): {}",
            info.rank, info.group, info.description
        );
    }
    if !compiled.program.parameters.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Parameters:");
        for (name, info) in &compiled.program.parameters {
            let _ = writeln!(out, "- {name} ({}): {}", info.kind.as_str(), info.description);
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Calculations:");
    for kernel in &compiled.kernels {
        let _ = writeln!(
            out,
            "- {} ({}) -> kernels/{}.src",
            kernel.ir.name,
            match kernel.kind {
                CalcKind::Initial => "initial data",
                CalcKind::Rhs => "right-hand side",
                CalcKind::Analysis => "analysis",
            },
            kernel.ir.name
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "See `manifest` for the machine-readable description and \
         `docs/kernel-dialect.md` in the toolchain for the source grammar."
    );
    out
}

/// Write the module as `dir/<module>/{manifest, README, kernels/*.src}`,
/// returning the module directory.
pub fn write_module(module: &EmittedModule, dir: &Path) -> io::Result<PathBuf> {
    let root = dir.join(&module.name);
    std::fs::create_dir_all(root.join("kernels"))?;
    std::fs::write(root.join("manifest"), &module.manifest)?;
    std::fs::write(root.join("README"), &module.readme)?;
    for (name, source) in &module.kernels {
        std::fs::write(root.join("kernels").join(format!("{name}.src")), source)?;
    }
    Ok(root)
}
