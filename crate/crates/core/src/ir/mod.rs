//! Straight-line scalar kernel IR.
//!
//! A kernel is the per-point body of one grid sweep: an SSA-style list of
//! instructions (value `i` is defined by `body[i]`) feeding a set of named
//! outputs. Loops over grid points live in codegen and the runtime, not
//! here. Kernels never read a grid function they write; lowering rejects
//! such recurrences, which keeps sweeps alias-free and tile-order
//! independent.

pub mod interp;
pub mod lower;
pub mod passes;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::rc::Rc;

use num::{BigRational, Signed};

use crate::expand::{CoordRef, Func};

pub type ValueId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Const(BigRational),
    Param(String),
    Coord(CoordRef),
    /// Grid read at an integer offset from the sweep point (`offsets.len()`
    /// equals the kernel dimension).
    Load { field: String, offsets: Vec<i64> },
    Neg(ValueId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Div(ValueId, ValueId),
    Pow(ValueId, i32),
    Call(Func, ValueId),
    /// Fused multiply-add `a * b + c`.
    Mad(ValueId, ValueId, ValueId),
}

impl Op {
    pub fn operands(&self) -> Vec<ValueId> {
        match self {
            Op::Const(_) | Op::Param(_) | Op::Coord(_) | Op::Load { .. } => vec![],
            Op::Neg(a) | Op::Pow(a, _) | Op::Call(_, a) => vec![*a],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Mad(a, b, c) => vec![*a, *b, *c],
        }
    }

    pub fn map_operands(&self, f: impl Fn(ValueId) -> ValueId) -> Op {
        match self {
            Op::Const(_) | Op::Param(_) | Op::Coord(_) | Op::Load { .. } => self.clone(),
            Op::Neg(a) => Op::Neg(f(*a)),
            Op::Pow(a, n) => Op::Pow(f(*a), *n),
            Op::Call(func, a) => Op::Call(*func, f(*a)),
            Op::Add(a, b) => Op::Add(f(*a), f(*b)),
            Op::Sub(a, b) => Op::Sub(f(*a), f(*b)),
            Op::Mul(a, b) => Op::Mul(f(*a), f(*b)),
            Op::Div(a, b) => Op::Div(f(*a), f(*b)),
            Op::Mad(a, b, c) => Op::Mad(f(*a), f(*b), f(*c)),
        }
    }

    /// Arithmetic instructions count as ops; loads, constants, parameters,
    /// and coordinates are free.
    pub fn is_arith(&self) -> bool {
        !matches!(
            self,
            Op::Const(_) | Op::Param(_) | Op::Coord(_) | Op::Load { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelIr {
    pub name: String,
    pub dim: usize,
    pub body: Vec<Op>,
    /// `(grid function, defining value)` in emission order.
    pub outputs: Vec<(String, ValueId)>,
}

impl KernelIr {
    /// All grid reads, deduplicated.
    pub fn reads(&self) -> BTreeSet<(String, Vec<i64>)> {
        self.body
            .iter()
            .filter_map(|op| match op {
                Op::Load { field, offsets } => Some((field.clone(), offsets.clone())),
                _ => None,
            })
            .collect()
    }

    /// Grid functions read, regardless of offset.
    pub fn read_fields(&self) -> BTreeSet<String> {
        self.reads().into_iter().map(|(f, _)| f).collect()
    }

    pub fn writes(&self) -> BTreeSet<String> {
        self.outputs.iter().map(|(f, _)| f.clone()).collect()
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.body
            .iter()
            .filter_map(|op| match op {
                Op::Param(p) => Some(p.clone()),
                _ => None,
            })
            .collect()
    }

    /// Per-axis stencil radius: the largest absolute read offset.
    pub fn radius(&self) -> Vec<i64> {
        let mut radius = vec![0; self.dim];
        for op in &self.body {
            if let Op::Load { offsets, .. } = op {
                for (r, o) in radius.iter_mut().zip(offsets) {
                    *r = (*r).max(o.abs());
                }
            }
        }
        radius
    }

    pub fn op_count(&self) -> usize {
        self.body.iter().filter(|op| op.is_arith()).count()
    }

    /// Structural well-formedness; lowering and the passes maintain this.
    pub fn validate(&self) -> Result<(), String> {
        for (i, op) in self.body.iter().enumerate() {
            for operand in op.operands() {
                if operand >= i {
                    return Err(format!(
                        "value t{i} references t{operand}, which is not defined before it"
                    ));
                }
            }
        }
        for (field, vid) in &self.outputs {
            if *vid >= self.body.len() {
                return Err(format!("output {field} references undefined value t{vid}"));
            }
        }
        let writes = self.writes();
        for (field, _) in self.reads() {
            if writes.contains(&field) {
                return Err(format!(
                    "kernel `{}` both reads and writes `{field}`",
                    self.name
                ));
            }
        }
        Ok(())
    }

    /// Stable line-oriented text used by `dump-ir` and golden tests.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let radius: Vec<String> = self.radius().iter().map(|r| r.to_string()).collect();
        let _ = writeln!(
            out,
            "kernel {} dim={} radius=[{}]",
            self.name,
            self.dim,
            radius.join(",")
        );
        for (i, op) in self.body.iter().enumerate() {
            let rhs = match op {
                Op::Const(c) => {
                    if c.is_integer() {
                        format!("const {}", c.numer())
                    } else {
                        format!("const {}/{}", c.numer(), c.denom())
                    }
                }
                Op::Param(p) => format!("param {p}"),
                Op::Coord(CoordRef::Axis(a)) => format!("coord {}", ["x", "y", "z"][*a as usize]),
                Op::Coord(CoordRef::Time) => "coord t".to_string(),
                Op::Load { field, offsets } => {
                    let offs: Vec<String> = offsets.iter().map(|o| o.to_string()).collect();
                    format!("load {field} @ [{}]", offs.join(","))
                }
                Op::Neg(a) => format!("neg t{a}"),
                Op::Add(a, b) => format!("add t{a} t{b}"),
                Op::Sub(a, b) => format!("sub t{a} t{b}"),
                Op::Mul(a, b) => format!("mul t{a} t{b}"),
                Op::Div(a, b) => format!("div t{a} t{b}"),
                Op::Pow(a, n) => format!("pow t{a} {n}"),
                Op::Call(f, a) => format!("call {} t{a}", f.name()),
                Op::Mad(a, b, c) => format!("mad t{a} t{b} t{c}"),
            };
            let _ = writeln!(out, "  t{i} = {rhs}");
        }
        for (field, vid) in &self.outputs {
            let _ = writeln!(out, "  write {field} = t{vid}");
        }
        out
    }
}

/// Appends instructions, keeping SSA order.
#[derive(Debug, Default)]
pub struct KernelBuilder {
    pub body: Vec<Op>,
}

impl KernelBuilder {
    pub fn push(&mut self, op: Op) -> ValueId {
        debug_assert!(op.operands().iter().all(|&v| v < self.body.len()));
        self.body.push(op);
        self.body.len() - 1
    }

    pub fn op(&self, id: ValueId) -> &Op {
        &self.body[id]
    }
}

// ---------------------------------------------------------------------------
// Canonical form
//
// Two kernels are structurally equivalent when every output computes the
// same expression tree, with the operands of commutative ops compared
// order-insensitively (CSE normalizes their order by value number, which
// differs across instruction schedules that are otherwise the same
// computation).

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CanonTree {
    Const(BigRational),
    Param(String),
    Coord(CoordRef),
    Load(String, Vec<i64>),
    Neg(Rc<CanonTree>),
    Add(Rc<CanonTree>, Rc<CanonTree>),
    Sub(Rc<CanonTree>, Rc<CanonTree>),
    Mul(Rc<CanonTree>, Rc<CanonTree>),
    Div(Rc<CanonTree>, Rc<CanonTree>),
    Pow(Rc<CanonTree>, i32),
    Call(Func, Rc<CanonTree>),
    Mad(Rc<CanonTree>, Rc<CanonTree>, Rc<CanonTree>),
}

/// Canonical tree per output, keyed by grid function.
pub fn canonical_outputs(k: &KernelIr) -> std::collections::BTreeMap<String, Rc<CanonTree>> {
    let mut memo: Vec<Option<Rc<CanonTree>>> = vec![None; k.body.len()];
    k.outputs
        .iter()
        .map(|(field, vid)| (field.clone(), canon(k, *vid, &mut memo)))
        .collect()
}

fn canon(k: &KernelIr, vid: ValueId, memo: &mut Vec<Option<Rc<CanonTree>>>) -> Rc<CanonTree> {
    if let Some(t) = &memo[vid] {
        return t.clone();
    }
    let tree = match &k.body[vid] {
        Op::Const(c) => CanonTree::Const(c.clone()),
        Op::Param(p) => CanonTree::Param(p.clone()),
        Op::Coord(c) => CanonTree::Coord(*c),
        Op::Load { field, offsets } => CanonTree::Load(field.clone(), offsets.clone()),
        Op::Neg(a) => CanonTree::Neg(canon(k, *a, memo)),
        Op::Add(a, b) => {
            let (x, y) = sorted_pair(canon(k, *a, memo), canon(k, *b, memo));
            CanonTree::Add(x, y)
        }
        Op::Sub(a, b) => CanonTree::Sub(canon(k, *a, memo), canon(k, *b, memo)),
        Op::Mul(a, b) => {
            let (x, y) = sorted_pair(canon(k, *a, memo), canon(k, *b, memo));
            CanonTree::Mul(x, y)
        }
        Op::Div(a, b) => CanonTree::Div(canon(k, *a, memo), canon(k, *b, memo)),
        Op::Pow(a, n) => CanonTree::Pow(canon(k, *a, memo), *n),
        Op::Call(f, a) => CanonTree::Call(*f, canon(k, *a, memo)),
        Op::Mad(a, b, c) => {
            let (x, y) = sorted_pair(canon(k, *a, memo), canon(k, *b, memo));
            CanonTree::Mad(x, y, canon(k, *c, memo))
        }
    };
    let rc = Rc::new(tree);
    memo[vid] = Some(rc.clone());
    rc
}

fn sorted_pair(a: Rc<CanonTree>, b: Rc<CanonTree>) -> (Rc<CanonTree>, Rc<CanonTree>) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Output-wise structural equivalence (see [`canonical_outputs`]).
pub fn structurally_equivalent(a: &KernelIr, b: &KernelIr) -> bool {
    a.dim == b.dim && canonical_outputs(a) == canonical_outputs(b)
}
