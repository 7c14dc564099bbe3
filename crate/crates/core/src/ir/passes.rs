//! Optimization passes over kernel IR.
//!
//! All passes are pure kernel-to-kernel functions and reach a fixpoint
//! (a second application is the identity). None of them reassociates
//! floating-point arithmetic; commutative operands are only put into a
//! fixed order (sorted by value number) during CSE.

use std::collections::{BTreeMap, HashMap};

use num::{traits::Pow, BigInt, BigRational, Signed, Zero};
use thiserror::Error;

use crate::ir::{KernelBuilder, KernelIr, Op, ValueId};

#[derive(Debug, Error, PartialEq)]
pub enum PassError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("fusion dependence violation: {0}")]
    FusionDependenceViolation(String),
}

/// Statistics for one pass application.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PassStats {
    pub pass: &'static str,
    pub ops_before: usize,
    pub ops_after: usize,
    pub temps_removed: usize,
    /// Rewrite counts by rule name.
    pub rewrites: BTreeMap<&'static str, usize>,
}

/// Per-kernel log of the applied pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PassReport {
    pub stages: Vec<PassStats>,
}

impl PassReport {
    pub fn render(&self, kernel: &str) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for s in &self.stages {
            let rewrites = if s.rewrites.is_empty() {
                String::new()
            } else {
                let parts: Vec<String> = s
                    .rewrites
                    .iter()
                    .map(|(rule, n)| format!("{rule}×{n}"))
                    .collect();
                format!("  [{}]", parts.join(" "))
            };
            let _ = writeln!(
                out,
                "{kernel:<12} {:<10} ops {:>3} -> {:>3}  temps removed {:>3}{rewrites}",
                s.pass, s.ops_before, s.ops_after, s.temps_removed
            );
        }
        out
    }
}

/// The selectable passes, in the order `--passes` lists them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassKind {
    Dce,
    Cse,
    Peephole,
}

impl PassKind {
    pub fn from_name(name: &str) -> Option<PassKind> {
        Some(match name {
            "dce" => PassKind::Dce,
            "cse" => PassKind::Cse,
            "peephole" => PassKind::Peephole,
            _ => return None,
        })
    }
}

/// Run a pass sequence, accumulating the report.
pub fn run_pipeline(k: &KernelIr, passes: &[PassKind], report: &mut PassReport) -> KernelIr {
    let mut current = k.clone();
    for pass in passes {
        let (next, stats) = match pass {
            PassKind::Dce => dce(&current),
            PassKind::Cse => cse(&current),
            PassKind::Peephole => peephole(&current),
        };
        report.stages.push(stats);
        current = next;
    }
    current
}

// ---------------------------------------------------------------------------
// Dead code elimination

/// Remove instructions that do not reach any output.
pub fn dce(k: &KernelIr) -> (KernelIr, PassStats) {
    let mut live = vec![false; k.body.len()];
    let mut stack: Vec<ValueId> = k.outputs.iter().map(|(_, v)| *v).collect();
    while let Some(v) = stack.pop() {
        if !live[v] {
            live[v] = true;
            stack.extend(k.body[v].operands());
        }
    }

    let mut remap = vec![usize::MAX; k.body.len()];
    let mut body = Vec::new();
    for (i, op) in k.body.iter().enumerate() {
        if live[i] {
            remap[i] = body.len();
            body.push(op.map_operands(|v| remap[v]));
        }
    }
    let outputs = k
        .outputs
        .iter()
        .map(|(f, v)| (f.clone(), remap[*v]))
        .collect();
    let next = KernelIr {
        name: k.name.clone(),
        dim: k.dim,
        body,
        outputs,
    };
    let stats = PassStats {
        pass: "dce",
        ops_before: k.op_count(),
        ops_after: next.op_count(),
        temps_removed: k.body.len() - next.body.len(),
        rewrites: BTreeMap::new(),
    };
    (next, stats)
}

// ---------------------------------------------------------------------------
// Common subexpression elimination

/// Value numbering over structurally identical pure instructions. Operands
/// of commutative ops are put into ascending value-number order so that
/// `a*b` and `b*a` unify; no other algebraic normalization is applied.
pub fn cse(k: &KernelIr) -> (KernelIr, PassStats) {
    let mut seen: HashMap<Op, ValueId> = HashMap::new();
    let mut remap: Vec<ValueId> = Vec::with_capacity(k.body.len());
    let mut body: Vec<Op> = Vec::new();
    for op in &k.body {
        let mut op = op.map_operands(|v| remap[v]);
        op = sort_commutative(op);
        if let Some(&existing) = seen.get(&op) {
            remap.push(existing);
        } else {
            let id = body.len();
            body.push(op.clone());
            seen.insert(op, id);
            remap.push(id);
        }
    }
    let outputs = k
        .outputs
        .iter()
        .map(|(f, v)| (f.clone(), remap[*v]))
        .collect();
    let next = KernelIr {
        name: k.name.clone(),
        dim: k.dim,
        body,
        outputs,
    };
    let stats = PassStats {
        pass: "cse",
        ops_before: k.op_count(),
        ops_after: next.op_count(),
        temps_removed: k.body.len() - next.body.len(),
        rewrites: BTreeMap::new(),
    };
    (next, stats)
}

fn sort_commutative(op: Op) -> Op {
    match op {
        Op::Add(a, b) if b < a => Op::Add(b, a),
        Op::Mul(a, b) if b < a => Op::Mul(b, a),
        Op::Mad(a, b, c) if b < a => Op::Mad(b, a, c),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Peephole rewriting

/// Local rewrites to fixpoint: constant folding of literal subtrees, then
/// the three classic rules — double negation (`(-a)*(-b) -> a*b`), division
/// combining (`a/b/c -> a/(b*c)`), reciprocal multiplication for exact
/// power-of-two constants — and finally multiply-add formation
/// (`a*b + c -> mad(a,b,c)`), innermost first.
pub fn peephole(k: &KernelIr) -> (KernelIr, PassStats) {
    let ops_before = k.op_count();
    let mut rewrites: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut current = k.clone();

    // Phase 1: folding and the multiplicative/divisive rules.
    loop {
        let (next, n) = rewrite_pass(&current, false, &mut rewrites);
        current = dce(&next).0;
        if n == 0 {
            break;
        }
    }
    // Phase 2: mad formation.
    loop {
        let (next, n) = rewrite_pass(&current, true, &mut rewrites);
        current = dce(&next).0;
        if n == 0 {
            break;
        }
    }

    let temps_removed = k.body.len().saturating_sub(current.body.len());
    let stats = PassStats {
        pass: "peephole",
        ops_before,
        ops_after: current.op_count(),
        temps_removed,
        rewrites,
    };
    (current, stats)
}

fn rewrite_pass(
    k: &KernelIr,
    mad_phase: bool,
    rewrites: &mut BTreeMap<&'static str, usize>,
) -> (KernelIr, usize) {
    let mut b = KernelBuilder::default();
    let mut remap: Vec<ValueId> = Vec::with_capacity(k.body.len());
    let mut count = 0usize;
    for op in &k.body {
        let op = op.map_operands(|v| remap[v]);
        let id = if mad_phase {
            try_mad(&op, &mut b, rewrites, &mut count)
        } else {
            try_simplify(&op, &mut b, rewrites, &mut count)
        };
        remap.push(id);
    }
    let outputs = k
        .outputs
        .iter()
        .map(|(f, v)| (f.clone(), remap[*v]))
        .collect();
    (
        KernelIr {
            name: k.name.clone(),
            dim: k.dim,
            body: b.body,
            outputs,
        },
        count,
    )
}

fn try_simplify(
    op: &Op,
    b: &mut KernelBuilder,
    rewrites: &mut BTreeMap<&'static str, usize>,
    count: &mut usize,
) -> ValueId {
    let mut hit = |rule: &'static str, count: &mut usize| {
        *rewrites.entry(rule).or_default() += 1;
        *count += 1;
    };

    if let Some(folded) = fold_const(op, b) {
        hit("fold-const", count);
        return b.push(Op::Const(folded));
    }

    match op {
        // (-a) * (-b) -> a * b
        Op::Mul(x, y) => {
            if let (Op::Neg(a), Op::Neg(c)) = (b.op(*x).clone(), b.op(*y).clone()) {
                hit("double-neg", count);
                return b.push(Op::Mul(a, c));
            }
        }
        Op::Div(x, y) => {
            // (a/b)/c -> a/(b*c)
            if let Op::Div(a, inner_b) = b.op(*x).clone() {
                hit("div-div", count);
                let bc = b.push(Op::Mul(inner_b, *y));
                return b.push(Op::Div(a, bc));
            }
            // a / c with c an exact power of two -> a * (1/c)
            if let Op::Const(c) = b.op(*y) {
                if is_power_of_two(c) {
                    hit("div-recip-pow2", count);
                    let recip = b.push(Op::Const(c.recip()));
                    return b.push(Op::Mul(*x, recip));
                }
            }
        }
        _ => {}
    }
    b.push(op.clone())
}

fn try_mad(
    op: &Op,
    b: &mut KernelBuilder,
    rewrites: &mut BTreeMap<&'static str, usize>,
    count: &mut usize,
) -> ValueId {
    if let Op::Add(x, y) = op {
        if let Op::Mul(p, q) = b.op(*x).clone() {
            *rewrites.entry("mad").or_default() += 1;
            *count += 1;
            return b.push(Op::Mad(p, q, *y));
        }
        if let Op::Mul(p, q) = b.op(*y).clone() {
            *rewrites.entry("mad").or_default() += 1;
            *count += 1;
            return b.push(Op::Mad(p, q, *x));
        }
    }
    b.push(op.clone())
}

/// Exact rational constant folding for arithmetic nodes. Intrinsic calls
/// are never folded (their libm values are platform-dependent); divisions
/// by zero and 0^negative are left to the runtime.
fn fold_const(op: &Op, b: &KernelBuilder) -> Option<BigRational> {
    let c = |v: ValueId| match b.op(v) {
        Op::Const(c) => Some(c.clone()),
        _ => None,
    };
    Some(match op {
        Op::Neg(a) => -c(*a)?,
        Op::Add(a, d) => c(*a)? + c(*d)?,
        Op::Sub(a, d) => c(*a)? - c(*d)?,
        Op::Mul(a, d) => c(*a)? * c(*d)?,
        Op::Div(a, d) => {
            let denom = c(*d)?;
            if denom.is_zero() {
                return None;
            }
            c(*a)? / denom
        }
        Op::Pow(a, n) => {
            let base = c(*a)?;
            if base.is_zero() && *n < 0 {
                return None;
            }
            base.pow(*n)
        }
        Op::Mad(a, d, e) => c(*a)? * c(*d)? + c(*e)?,
        _ => return None,
    })
}

fn is_power_of_two(c: &BigRational) -> bool {
    fn pow2(n: &BigInt) -> bool {
        n.is_positive() && {
            let (_, bytes) = n.to_bytes_be();
            let mut ones = 0u32;
            for byte in bytes {
                ones += byte.count_ones();
            }
            ones == 1
        }
    }
    pow2(c.numer()) && pow2(c.denom())
}

// ---------------------------------------------------------------------------
// Fission and fusion

/// Split a kernel along a partition of its outputs. Each sub-kernel is the
/// backward slice of its cell (shared temporaries are duplicated), so the
/// sub-kernels read only pre-sweep inputs and can run in any order.
pub fn fission(k: &KernelIr, partition: &[Vec<String>]) -> Result<Vec<KernelIr>, PassError> {
    let writes = k.writes();
    let mut covered = std::collections::BTreeSet::new();
    for cell in partition {
        if cell.is_empty() {
            return Err(PassError::InvalidPartition("empty cell".into()));
        }
        for field in cell {
            if !writes.contains(field) {
                return Err(PassError::InvalidPartition(format!(
                    "`{field}` is not written by kernel `{}`",
                    k.name
                )));
            }
            if !covered.insert(field.clone()) {
                return Err(PassError::InvalidPartition(format!(
                    "`{field}` appears in more than one cell"
                )));
            }
        }
    }
    if covered.len() != writes.len() {
        let missing: Vec<String> = writes.difference(&covered).cloned().collect();
        return Err(PassError::InvalidPartition(format!(
            "outputs not covered: {}",
            missing.join(", ")
        )));
    }

    let mut kernels = Vec::with_capacity(partition.len());
    for (idx, cell) in partition.iter().enumerate() {
        let outputs: Vec<(String, ValueId)> = k
            .outputs
            .iter()
            .filter(|(f, _)| cell.contains(f))
            .cloned()
            .collect();
        let mut live = vec![false; k.body.len()];
        let mut stack: Vec<ValueId> = outputs.iter().map(|(_, v)| *v).collect();
        while let Some(v) = stack.pop() {
            if !live[v] {
                live[v] = true;
                stack.extend(k.body[v].operands());
            }
        }
        let mut remap = vec![usize::MAX; k.body.len()];
        let mut body = Vec::new();
        for (i, op) in k.body.iter().enumerate() {
            if live[i] {
                remap[i] = body.len();
                body.push(op.map_operands(|v| remap[v]));
            }
        }
        kernels.push(KernelIr {
            name: format!("{}_{}", k.name, idx + 1),
            dim: k.dim,
            body,
            outputs: outputs
                .into_iter()
                .map(|(f, v)| (f, remap[v]))
                .collect(),
        });
    }
    Ok(kernels)
}

/// Concatenate kernels into one. Refused when a later kernel reads a grid
/// function an earlier one writes (fusing across that dependence would read
/// mid-sweep values) or when two kernels write the same function.
pub fn fuse(kernels: &[KernelIr]) -> Result<KernelIr, PassError> {
    let first = kernels
        .first()
        .ok_or_else(|| PassError::InvalidPartition("nothing to fuse".into()))?;
    for earlier in 0..kernels.len() {
        for later in earlier + 1..kernels.len() {
            let writes = kernels[earlier].writes();
            for (field, _) in kernels[later].reads() {
                if writes.contains(&field) {
                    return Err(PassError::FusionDependenceViolation(format!(
                        "`{}` reads `{field}`, written by `{}`",
                        kernels[later].name, kernels[earlier].name
                    )));
                }
            }
            if let Some(dup) = kernels[later].writes().intersection(&writes).next() {
                return Err(PassError::FusionDependenceViolation(format!(
                    "`{}` and `{}` both write `{dup}`",
                    kernels[earlier].name, kernels[later].name
                )));
            }
        }
    }

    let mut body = Vec::new();
    let mut outputs = Vec::new();
    for k in kernels {
        let base = body.len();
        body.extend(k.body.iter().map(|op| op.map_operands(|v| v + base)));
        outputs.extend(k.outputs.iter().map(|(f, v)| (f.clone(), v + base)));
    }
    let names: Vec<&str> = kernels.iter().map(|k| k.name.as_str()).collect();
    Ok(KernelIr {
        name: names.join("+"),
        dim: first.dim,
        body,
        outputs,
    })
}
