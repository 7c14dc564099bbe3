//! Emitted-source fidelity: parse the emitted loop body back with a small
//! independent expression evaluator and compare against the IR interpreter
//! on random inputs.

mod common;

use std::collections::HashMap;

use common::{compile_wave, random_env_for, Rng};
use edlc::codegen::emit_kernel;
use edlc::ir::interp::{interpret, KernelEnv};

// ---------------------------------------------------------------------------
// A tiny evaluator for the emitted dialect.

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(line: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let mut text = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' {
                    text.push(c);
                    chars.next();
                    // exponent sign
                    if (text.ends_with('e') || text.ends_with('E'))
                        && matches!(chars.peek(), Some('+') | Some('-'))
                    {
                        text.push(chars.next().unwrap());
                    }
                } else {
                    break;
                }
            }
            out.push(Tok::Num(text.parse().expect("emitted number parses")));
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let mut text = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    text.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Tok::Ident(text));
        } else {
            out.push(Tok::Sym(c));
            chars.next();
        }
    }
    out
}

struct Eval<'a> {
    toks: Vec<Tok>,
    pos: usize,
    /// Loop variables bound to the evaluation point.
    point: [i64; 3],
    dim: usize,
    /// Temps defined by earlier statements.
    temps: &'a HashMap<String, f64>,
    env: &'a KernelEnv,
    /// Coordinates of padded index 0 per axis (x0, y0, z0).
    pad_origin: [f64; 3],
    spacing: [f64; 3],
}

impl Eval<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].clone();
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) {
        assert_eq!(self.bump(), Tok::Sym(c), "expected `{c}`");
    }

    fn expr(&mut self) -> f64 {
        let mut acc = self.term();
        loop {
            match self.peek() {
                Some(Tok::Sym('+')) => {
                    self.bump();
                    let rhs = self.term();
                    acc += rhs;
                }
                Some(Tok::Sym('-')) => {
                    self.bump();
                    let rhs = self.term();
                    acc -= rhs;
                }
                _ => break,
            }
        }
        acc
    }

    fn term(&mut self) -> f64 {
        let mut acc = self.unary();
        loop {
            match self.peek() {
                Some(Tok::Sym('*')) => {
                    self.bump();
                    let rhs = self.unary();
                    acc *= rhs;
                }
                Some(Tok::Sym('/')) => {
                    self.bump();
                    let rhs = self.unary();
                    acc /= rhs;
                }
                _ => break,
            }
        }
        acc
    }

    fn unary(&mut self) -> f64 {
        if matches!(self.peek(), Some(Tok::Sym('-'))) {
            self.bump();
            return -self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> f64 {
        match self.bump() {
            Tok::Num(v) => v,
            Tok::Sym('(') => {
                let v = self.expr();
                self.expect_sym(')');
                v
            }
            Tok::Ident(name) => {
                match self.peek() {
                    Some(Tok::Sym('(')) => {
                        // call: pow, mad, or an intrinsic
                        self.bump();
                        let mut args = vec![self.expr()];
                        while matches!(self.peek(), Some(Tok::Sym(','))) {
                            self.bump();
                            args.push(self.expr());
                        }
                        self.expect_sym(')');
                        self.call(&name, &args)
                    }
                    Some(Tok::Sym('[')) => {
                        // load: name[idx(args)]
                        self.bump();
                        let offsets = self.idx_offsets();
                        self.expect_sym(']');
                        *self
                            .env
                            .loads
                            .get(&(name.clone(), offsets.clone()))
                            .unwrap_or_else(|| panic!("no load for {name} at {offsets:?}"))
                    }
                    _ => self.variable(&name),
                }
            }
            other => panic!("unexpected token {other:?}"),
        }
    }

    fn idx_offsets(&mut self) -> Vec<i64> {
        match self.bump() {
            Tok::Ident(f) if f == "idx" => {}
            other => panic!("expected idx, got {other:?}"),
        }
        self.expect_sym('(');
        let mut offsets = Vec::new();
        loop {
            let value = self.expr();
            let axis = offsets.len();
            let off = value - self.point[axis] as f64;
            assert!(
                (off - off.round()).abs() < 1e-9,
                "index argument is not point + integer offset"
            );
            offsets.push(off.round() as i64);
            match self.bump() {
                Tok::Sym(',') => continue,
                Tok::Sym(')') => break,
                other => panic!("unexpected {other:?} in idx()"),
            }
        }
        assert_eq!(offsets.len(), self.dim);
        offsets
    }

    fn call(&self, name: &str, args: &[f64]) -> f64 {
        match (name, args) {
            ("pow", [x, n]) => x.powi(*n as i32),
            ("mad", [a, b, c]) => a * b + c,
            ("exp", [x]) => x.exp(),
            ("sin", [x]) => x.sin(),
            ("cos", [x]) => x.cos(),
            ("sqrt", [x]) => x.sqrt(),
            ("log", [x]) => x.ln(),
            ("abs", [x]) => x.abs(),
            _ => panic!("unknown call {name}/{}", args.len()),
        }
    }

    fn variable(&self, name: &str) -> f64 {
        match name {
            "i" => self.point[0] as f64,
            "j" => self.point[1] as f64,
            "k" => self.point[2] as f64,
            "t" => self.env.time,
            "x0" => self.pad_origin[0],
            "y0" => self.pad_origin[1],
            "z0" => self.pad_origin[2],
            "dx" => self.spacing[0],
            "dy" => self.spacing[1],
            "dz" => self.spacing[2],
            _ => {
                if let Some(v) = self.temps.get(name) {
                    return *v;
                }
                *self
                    .env
                    .params
                    .get(name)
                    .unwrap_or_else(|| panic!("unknown variable `{name}`"))
            }
        }
    }
}

/// Evaluate the emitted body statements at one point, returning the output
/// assignments.
fn eval_emitted(
    source: &str,
    dim: usize,
    point: [i64; 3],
    env: &KernelEnv,
    pad_origin: [f64; 3],
    spacing: [f64; 3],
) -> HashMap<String, f64> {
    let mut temps: HashMap<String, f64> = HashMap::new();
    let mut outputs = HashMap::new();
    for line in source.lines() {
        let line = line.trim();
        if line.starts_with("//") {
            continue;
        }
        let Some(stmt) = line.strip_suffix(';') else {
            continue;
        };
        let (lhs, rhs) = stmt
            .split_once('=')
            .unwrap_or_else(|| panic!("assignment statement, got `{line}`"));
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        let mut eval = Eval {
            toks: lex(rhs),
            pos: 0,
            point,
            dim,
            temps: &temps,
            env,
            pad_origin,
            spacing,
        };
        let value = eval.expr();
        assert_eq!(eval.pos, eval.toks.len(), "trailing tokens in `{rhs}`");
        if let Some(name) = lhs.strip_prefix("const double ") {
            temps.insert(name.trim().to_string(), value);
        } else {
            let field = lhs.split('[').next().unwrap().trim();
            outputs.insert(field.to_string(), value);
        }
    }
    outputs
}

// ---------------------------------------------------------------------------

#[test]
fn emitted_source_matches_the_interpreter() {
    let mut rng = Rng(2024);
    for dim in 1..=3usize {
        for half_width in [1u32, 2] {
            let compiled = compile_wave(dim, Some(half_width));
            for kernel in &compiled.kernels {
                let source = emit_kernel(&kernel.ir);
                for _ in 0..40 {
                    let env = random_env_for(&kernel.ir, &mut rng);
                    let point = [3 + rng.usize(4) as i64, 4, 5];
                    // Recover x0 so that x0 + i*dx equals the interpreter's
                    // coordinate values.
                    let spacing = [
                        *env.params.get("dx").unwrap_or(&0.5),
                        *env.params.get("dy").unwrap_or(&0.5),
                        *env.params.get("dz").unwrap_or(&0.5),
                    ];
                    let mut pad_origin = [0.0; 3];
                    for axis in 0..3 {
                        pad_origin[axis] = env.coords[axis] - point[axis] as f64 * spacing[axis];
                    }
                    let mut env = env;
                    for (axis, name) in ["dx", "dy", "dz"].iter().enumerate().take(dim) {
                        env.params.insert(name.to_string(), spacing[axis]);
                    }
                    let want = interpret(&kernel.ir, &env).unwrap();
                    let got = eval_emitted(&source, dim, point, &env, pad_origin, spacing);
                    assert_eq!(got.len(), want.len(), "kernel {}", kernel.ir.name);
                    for (field, w) in &want {
                        let g = got[field];
                        let scale = w.abs().max(g.abs()).max(1.0);
                        assert!(
                            (g - w).abs() <= 1e-12 * scale,
                            "kernel {} output {field}: emitted {g} vs interpreted {w}",
                            kernel.ir.name
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn emitted_byte_stability_across_runs() {
    for dim in [1usize, 3] {
        let a = compile_wave(dim, Some(1));
        let b = compile_wave(dim, Some(1));
        for (ka, kb) in a.kernels.iter().zip(&b.kernels) {
            assert_eq!(emit_kernel(&ka.ir), emit_kernel(&kb.ir));
        }
    }
}
