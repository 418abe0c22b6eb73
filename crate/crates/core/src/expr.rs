//! Arithmetic expressions over the chart variables `x, y, z, s, t`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | atom
//! atom    := number | var | 'pi' | func '(' sum ')' | 'pow' '(' sum ',' int ')' | '(' sum ')'
//! ```
//!
//! Unary minus binds tighter than `*`, so `-x*y` is `(-x)*y`. There is no
//! implicit multiplication and no `^` operator.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Z,
    S,
    T,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::X, Var::Y, Var::Z, Var::S, Var::T];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::S => "s",
            Var::T => "t",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        match name {
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            "s" => Some(Var::S),
            "t" => Some(Var::T),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }
}

/// Immutable expression tree; subtrees are shared.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Pi,
    Var(Var),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
    Pow(Arc<Expr>, i32),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected one of {expected:?}")]
    SyntaxError { offset: usize, expected: Vec<String> },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{0}` is not bound")]
    UnboundVariable(&'static str),
    #[error("division by zero")]
    DivisionByZero,
}

/// Variable bindings; unbound slots are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Env {
    slots: [Option<f64>; 5],
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, v: Var, value: f64) -> Self {
        self.slots[v.index()] = Some(value);
        self
    }

    pub fn set(&mut self, v: Var, value: f64) {
        self.slots[v.index()] = Some(value);
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        self.slots[v.index()]
    }

    pub fn from_slots(values: [f64; 5]) -> Self {
        Self { slots: values.map(Some) }
    }
}

fn is_literal(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        Expr::Pi => Some(std::f64::consts::PI),
        _ => None,
    }
}

/// Folding applies only when every operand is a literal.
fn fold(e: Expr) -> Expr {
    let lit = match &e {
        Expr::Neg(a) => is_literal(a).map(|a| -a),
        Expr::Add(a, b) => is_literal(a).zip(is_literal(b)).map(|(a, b)| a + b),
        Expr::Sub(a, b) => is_literal(a).zip(is_literal(b)).map(|(a, b)| a - b),
        Expr::Mul(a, b) => is_literal(a).zip(is_literal(b)).map(|(a, b)| a * b),
        Expr::Div(a, b) => match (is_literal(a), is_literal(b)) {
            (Some(a), Some(b)) if b != 0.0 => Some(a / b),
            _ => None,
        },
        Expr::Call(f, a) => is_literal(a).map(|a| apply_func(*f, a)),
        Expr::Pow(a, n) => is_literal(a).map(|a| a.powi(*n)),
        _ => None,
    };
    match lit {
        Some(c) if c.is_finite() => Expr::Const(c),
        _ => e,
    }
}

fn apply_func(f: Func, a: f64) -> f64 {
    match f {
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Exp => a.exp(),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

const MAX_DEPTH: usize = 200;

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err(&self, expected: &[&str]) -> ExprError {
        ExprError::SyntaxError {
            offset: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&[&(c as char).to_string()]))
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.product()?;
                    lhs = fold(Expr::Add(Arc::new(lhs), Arc::new(rhs)));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.product()?;
                    lhs = fold(Expr::Sub(Arc::new(lhs), Arc::new(rhs)));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = fold(Expr::Mul(Arc::new(lhs), Arc::new(rhs)));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = fold(Expr::Div(Arc::new(lhs), Arc::new(rhs)));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(&["shallower nesting"]));
        }
        let out = if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            Ok(fold(Expr::Neg(Arc::new(inner))))
        } else {
            self.atom()
        };
        self.depth -= 1;
        out
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                Err(self.err(&["number"]))
            }
        }
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let neg = self.src.get(self.pos) == Some(&b'-');
        if neg {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            self.pos = start;
            return Err(self.err(&["integer"]));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<i32>().map_err(|_| {
            self.pos = start;
            self.err(&["integer"])
        })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        const ATOM: &[&str] = &["number", "variable", "function", "(", "-"];
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if let Some(v) = Var::from_name(name) {
                    return Ok(Expr::Var(v));
                }
                let func = match name {
                    "pi" => return Ok(Expr::Pi),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "pow" => None,
                    _ => {
                        return Err(ExprError::UnknownIdentifier {
                            name: name.to_string(),
                            offset: start,
                        })
                    }
                };
                self.expect(b'(')?;
                let arg = self.sum()?;
                let e = match func {
                    Some(f) => Expr::Call(f, Arc::new(arg)),
                    None => {
                        self.expect(b',')?;
                        let n = self.integer()?;
                        Expr::Pow(Arc::new(arg), n)
                    }
                };
                self.expect(b')')?;
                Ok(fold(e))
            }
            _ => Err(self.err(ATOM)),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, depth: 0 };
    let e = p.sum()?;
    if p.peek().is_some() {
        return Err(p.err(&["+", "-", "*", "/", "end of input"]));
    }
    Ok(e)
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn eval(&self, env: &Env) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(v) => env.get(*v).ok_or(ExprError::UnboundVariable(v.name()))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Call(f, a) => apply_func(*f, a.eval(env)?),
            Expr::Pow(a, n) => a.eval(env)?.powi(*n),
        })
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Const(_) | Expr::Pi => {}
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Pow(a, _) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// Symbolic derivative. Zero and unit factors are pruned so repeated
    /// differentiation stays small; no other simplification happens.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) | Expr::Pi => Expr::Const(0.0),
            Expr::Var(w) => Expr::Const(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(v)),
            Expr::Add(a, b) => add(a.diff(v), b.diff(v)),
            Expr::Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => add(
                mul(a.diff(v), (**b).clone()),
                mul((**a).clone(), b.diff(v)),
            ),
            Expr::Div(a, b) => {
                // (a/b)' = a'/b - a b' / b^2
                let da = a.diff(v);
                let db = b.diff(v);
                sub(
                    div(da, (**b).clone()),
                    div(mul((**a).clone(), db), pow((**b).clone(), 2)),
                )
            }
            Expr::Call(f, a) => {
                let da = a.diff(v);
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => Expr::Call(Func::Exp, a.clone()),
                };
                mul(outer, da)
            }
            Expr::Pow(a, n) => {
                if *n == 0 {
                    return Expr::Const(0.0);
                }
                let da = a.diff(v);
                mul(mul(Expr::Const(*n as f64), pow((**a).clone(), n - 1)), da)
            }
        }
    }
}

fn neg(a: Expr) -> Expr {
    if a.is_zero() {
        return a;
    }
    if let Expr::Const(c) = a {
        return Expr::Const(-c);
    }
    Expr::Neg(Arc::new(a))
}

fn add(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    Expr::Add(Arc::new(a), Arc::new(b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    Expr::Sub(Arc::new(a), Arc::new(b))
}

fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        return Expr::Const(0.0);
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    Expr::Mul(Arc::new(a), Arc::new(b))
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return Expr::Const(0.0);
    }
    if b.is_one() {
        return a;
    }
    Expr::Div(Arc::new(a), Arc::new(b))
}

fn pow(a: Expr, n: i32) -> Expr {
    match n {
        0 => Expr::Const(1.0),
        1 => a,
        _ => Expr::Pow(Arc::new(a), n),
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    // `{:?}` is the shortest representation that round-trips exactly.
    let text = format!("{c:?}");
    if c < 0.0 || text.starts_with('-') {
        write!(f, "(-{})", text.trim_start_matches('-'))
    } else if text.contains("inf") || text.contains("NaN") {
        write!(f, "(1/0)")
    } else {
        write!(f, "{text}")
    }
}

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            _ => 4,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.prec() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Fully parenthesised where precedence requires; `parse(format!("{e}"))`
/// evaluates identically to `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_const(f, *c),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_child(f, 3)
            }
            Expr::Add(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " + ")?;
                b.write_child(f, 2)
            }
            Expr::Sub(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " - ")?;
                b.write_child(f, 2)
            }
            Expr::Mul(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "*")?;
                b.write_child(f, 3)
            }
            Expr::Div(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "/")?;
                b.write_child(f, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Pow(a, n) => write!(f, "pow({a}, {n})"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(u8),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Exp,
    Pow(i32),
}

/// Flattened postfix form of an [`Expr`] for the numerical kernels.
///
/// Division by zero follows IEEE semantics here; the checked path is
/// [`Expr::eval`].
#[derive(Clone, Debug)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
}

impl Program {
    pub fn compile(e: &Expr) -> Program {
        let mut ops = Vec::new();
        emit(e, &mut ops);
        let mut d: isize = 0;
        let mut depth = 0;
        for op in &ops {
            d += match op {
                Op::Const(_) | Op::Var(_) => 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => -1,
                _ => 0,
            };
            depth = depth.max(d as usize);
        }
        Program { ops, depth }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.ops.as_slice(), [Op::Const(c)] if *c == 0.0)
    }

    #[inline]
    pub fn run(&self, vars: &[f64; 5]) -> f64 {
        let mut small = [0.0f64; 32];
        if self.depth <= small.len() {
            self.exec(vars, &mut small)
        } else {
            let mut big = vec![0.0; self.depth];
            self.exec(vars, &mut big)
        }
    }

    #[inline]
    fn exec(&self, vars: &[f64; 5], st: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    st[sp] = c;
                    sp += 1;
                }
                Op::Var(i) => {
                    st[sp] = vars[i as usize];
                    sp += 1;
                }
                Op::Neg => st[sp - 1] = -st[sp - 1],
                Op::Add => {
                    sp -= 1;
                    st[sp - 1] += st[sp];
                }
                Op::Sub => {
                    sp -= 1;
                    st[sp - 1] -= st[sp];
                }
                Op::Mul => {
                    sp -= 1;
                    st[sp - 1] *= st[sp];
                }
                Op::Div => {
                    sp -= 1;
                    st[sp - 1] /= st[sp];
                }
                Op::Sin => st[sp - 1] = st[sp - 1].sin(),
                Op::Cos => st[sp - 1] = st[sp - 1].cos(),
                Op::Exp => st[sp - 1] = st[sp - 1].exp(),
                Op::Pow(n) => st[sp - 1] = st[sp - 1].powi(n),
            }
        }
        st[0]
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::Pi => ops.push(Op::Const(std::f64::consts::PI)),
        Expr::Var(v) => ops.push(Op::Var(v.index() as u8)),
        Expr::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
        }
        Expr::Call(f, a) => {
            emit(a, ops);
            ops.push(match f {
                Func::Sin => Op::Sin,
                Func::Cos => Op::Cos,
                Func::Exp => Op::Exp,
            });
        }
        Expr::Pow(a, n) => {
            emit(a, ops);
            ops.push(Op::Pow(*n));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(e: &Expr, v: Var, x: f64) -> f64 {
        e.eval(&Env::new().with(v, x)).unwrap()
    }

    #[test]
    fn parses_torus_field() {
        let e = parse("cos(2*pi*x)+cos(2*pi*y)").unwrap();
        match &e {
            Expr::Add(a, b) => {
                assert!(matches!(**a, Expr::Call(Func::Cos, _)));
                assert!(matches!(**b, Expr::Call(Func::Cos, _)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn incomplete_sum_reports_offset() {
        match parse("x+") {
            Err(ExprError::SyntaxError { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn profile_values_and_slopes() {
        let h = parse("pow(s,3)-1.5*pow(s,2)").unwrap();
        assert_eq!(at(&h, Var::S, 0.0), 0.0);
        assert_eq!(at(&h, Var::S, 1.0), -0.5);
        let dh = h.diff(Var::S);
        assert_eq!(at(&dh, Var::S, 0.0), 0.0);
        assert_eq!(at(&dh, Var::S, 1.0), 0.0);
    }

    #[test]
    fn cosine_at_half() {
        let e = parse("cos(2*pi*x)").unwrap();
        assert_eq!(at(&e, Var::X, 0.5), -1.0);
    }

    #[test]
    fn square_derivative() {
        let e = parse("x*x").unwrap();
        assert_eq!(at(&e.diff(Var::X), Var::X, 3.0), 6.0);
    }

    #[test]
    fn unary_minus_binds_tighter_than_product() {
        let e = parse("-x*y").unwrap();
        assert!(matches!(e, Expr::Mul(..)));
        let env = Env::new().with(Var::X, 2.0).with(Var::Y, 3.0);
        assert_eq!(e.eval(&env).unwrap(), -6.0);
    }

    #[test]
    fn rejects_implicit_multiplication() {
        assert!(matches!(parse("2x"), Err(ExprError::SyntaxError { offset: 1, .. })));
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(
            parse("tan(x)"),
            Err(ExprError::UnknownIdentifier { ref name, offset: 0 }) if name == "tan"
        ));
    }

    #[test]
    fn pow_requires_integer() {
        assert!(parse("pow(x, 1.5)").is_err());
        assert!(parse("pow(x, -2)").is_ok());
    }

    #[test]
    fn eval_errors() {
        let e = parse("x/y").unwrap();
        assert_eq!(e.eval(&Env::new().with(Var::X, 1.0)), Err(ExprError::UnboundVariable("y")));
        let env = Env::new().with(Var::X, 1.0).with(Var::Y, 0.0);
        assert_eq!(e.eval(&env), Err(ExprError::DivisionByZero));
    }

    #[test]
    fn folds_literal_subtrees_only() {
        assert_eq!(parse("2*3").unwrap(), Expr::Const(6.0));
        assert!(matches!(parse("2*pi*x").unwrap(), Expr::Mul(ref a, _) if matches!(**a, Expr::Const(_))));
        assert!(matches!(parse("x*2*3").unwrap(), Expr::Mul(..)));
    }

    #[test]
    fn printer_round_trip_examples() {
        for src in ["-x*y", "-(x*y)", "x-(y-z)", "x/(y/z)", "pow(-x, 3)", "1e-300*x", "-1.5 - -x"] {
            let e = parse(src).unwrap();
            let again = parse(&e.to_string()).unwrap();
            let env = Env::from_slots([0.3, -1.7, 2.2, 0.4, 0.9]);
            assert_eq!(e.eval(&env).unwrap(), again.eval(&env).unwrap(), "{src}");
        }
    }

    #[test]
    fn program_matches_tree() {
        let e = parse("sin(x)*exp(-y)/(1+pow(z,2)) - 3*cos(s*t)").unwrap();
        let p = Program::compile(&e);
        let vars = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(p.run(&vars), e.eval(&Env::from_slots(vars)).unwrap());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = "(".repeat(5000) + "x" + &")".repeat(5000);
        assert!(parse(&src).is_err());
        let src = "-".repeat(5000) + "x";
        assert!(parse(&src).is_err());
    }
}
