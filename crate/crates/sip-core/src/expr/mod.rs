//! Expression trees over three variable families (`x`, `y`, `p`).
//!
//! An [`Expr`] is an immutable tree of constants, indexed variables, the unary
//! operations `neg, exp, log, sqrt, abs`, and the binary operations
//! `add, sub, mul, div, pow`. The same tree evaluates over plain `f64`
//! ([`Expr::eval`]), first- and second-order forward-mode duals
//! ([`Expr::eval_grad`], [`Expr::eval_hess`]) and intervals
//! ([`Expr::eval_interval`]). Domain violations (log of a nonpositive value,
//! square root of a negative, division by zero) are reported as errors, never
//! as silent NaN.
//!
//! Trees are held behind `Arc` so sharing across solver threads is free;
//! every evaluation is pure.

mod dual;
mod parse;

pub use parse::{parse, ParseError};

use crate::interval::Interval;
use std::fmt;
use std::sync::Arc;

/// Variable family: decision `x`, index `y`, or parameter `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    X,
    Y,
    P,
}

impl VarKind {
    pub fn letter(self) -> char {
        match self {
            VarKind::X => 'x',
            VarKind::Y => 'y',
            VarKind::P => 'p',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Variable with 1-based index.
    Var(VarKind, usize),
    Un(UnOp, Arc<Node>),
    Bin(BinOp, Arc<Node>, Arc<Node>),
}

/// Immutable expression tree; cheap to clone and safe to share.
#[derive(Clone, PartialEq)]
pub struct Expr {
    root: Arc<Node>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("variable {kind:?}{index} not covered by the assignment")]
    VarOutOfRange { kind: VarKind, index: usize },
}

/// Values for the three variable families at a point.
#[derive(Debug, Clone, Copy)]
pub struct Vars<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub p: &'a [f64],
}

impl<'a> Vars<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], p: &'a [f64]) -> Self {
        Vars { x, y, p }
    }
    pub fn x_only(x: &'a [f64]) -> Self {
        Vars { x, y: &[], p: &[] }
    }
    fn get(&self, kind: VarKind, index: usize) -> Result<f64, EvalError> {
        let slot = match kind {
            VarKind::X => self.x,
            VarKind::Y => self.y,
            VarKind::P => self.p,
        };
        slot.get(index - 1)
            .copied()
            .ok_or(EvalError::VarOutOfRange { kind, index })
    }
}

/// Interval boxes for the three variable families.
#[derive(Debug, Clone, Copy)]
pub struct VarBoxes<'a> {
    pub x: &'a [Interval],
    pub y: &'a [Interval],
    pub p: &'a [Interval],
}

impl<'a> VarBoxes<'a> {
    pub fn new(x: &'a [Interval], y: &'a [Interval], p: &'a [Interval]) -> Self {
        VarBoxes { x, y, p }
    }
    fn get(&self, kind: VarKind, index: usize) -> Result<Interval, EvalError> {
        let slot = match kind {
            VarKind::X => self.x,
            VarKind::Y => self.y,
            VarKind::P => self.p,
        };
        slot.get(index - 1)
            .copied()
            .ok_or(EvalError::VarOutOfRange { kind, index })
    }
}

fn domain(op: &'static str, detail: String) -> EvalError {
    EvalError::Domain { op, detail }
}

/// Exponent values within this distance of an integer are treated as integer
/// powers (repeated-multiplication semantics, negative bases allowed).
pub(crate) fn as_integer_exponent(e: f64) -> Option<i32> {
    if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
        Some(e as i32)
    } else {
        None
    }
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr { root: Arc::new(Node::Const(v)) }
    }

    pub fn var(kind: VarKind, index: usize) -> Expr {
        assert!(index >= 1, "variable indices are 1-based");
        Expr { root: Arc::new(Node::Var(kind, index)) }
    }

    pub fn x(index: usize) -> Expr {
        Expr::var(VarKind::X, index)
    }
    pub fn y(index: usize) -> Expr {
        Expr::var(VarKind::Y, index)
    }
    pub fn p(index: usize) -> Expr {
        Expr::var(VarKind::P, index)
    }

    pub fn unary(op: UnOp, e: Expr) -> Expr {
        Expr { root: Arc::new(Node::Un(op, e.root)) }
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr { root: Arc::new(Node::Bin(op, a.root, b.root)) }
    }

    pub fn neg(self) -> Expr {
        Expr::unary(UnOp::Neg, self)
    }
    pub fn exp(self) -> Expr {
        Expr::unary(UnOp::Exp, self)
    }
    pub fn log(self) -> Expr {
        Expr::unary(UnOp::Log, self)
    }
    pub fn sqrt(self) -> Expr {
        Expr::unary(UnOp::Sqrt, self)
    }
    pub fn abs(self) -> Expr {
        Expr::unary(UnOp::Abs, self)
    }
    pub fn powi(self, n: i32) -> Expr {
        Expr::binary(BinOp::Pow, self, Expr::constant(n as f64))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub(crate) fn from_node(root: Arc<Node>) -> Expr {
        Expr { root }
    }

    /// Largest 1-based index of the given variable family appearing in the
    /// tree (0 when the family is absent).
    pub fn max_index(&self, kind: VarKind) -> usize {
        fn walk(n: &Node, kind: VarKind, acc: &mut usize) {
            match n {
                Node::Const(_) => {}
                Node::Var(k, i) => {
                    if *k == kind && *i > *acc {
                        *acc = *i;
                    }
                }
                Node::Un(_, a) => walk(a, kind, acc),
                Node::Bin(_, a, b) => {
                    walk(a, kind, acc);
                    walk(b, kind, acc);
                }
            }
        }
        let mut acc = 0;
        walk(&self.root, kind, &mut acc);
        acc
    }

    /// Rebuild the tree, replacing variables for which `f` returns a tree.
    /// Unreplaced subtrees are shared, not copied.
    pub fn substitute(&self, f: &impl Fn(VarKind, usize) -> Option<Expr>) -> Expr {
        fn walk(n: &Arc<Node>, f: &impl Fn(VarKind, usize) -> Option<Expr>) -> Arc<Node> {
            match n.as_ref() {
                Node::Const(_) => n.clone(),
                Node::Var(k, i) => match f(*k, *i) {
                    Some(e) => e.root,
                    None => n.clone(),
                },
                Node::Un(op, a) => {
                    let na = walk(a, f);
                    if Arc::ptr_eq(&na, a) {
                        n.clone()
                    } else {
                        Arc::new(Node::Un(*op, na))
                    }
                }
                Node::Bin(op, a, b) => {
                    let na = walk(a, f);
                    let nb = walk(b, f);
                    if Arc::ptr_eq(&na, a) && Arc::ptr_eq(&nb, b) {
                        n.clone()
                    } else {
                        Arc::new(Node::Bin(*op, na, nb))
                    }
                }
            }
        }
        Expr { root: walk(&self.root, &f) }
    }

    /// IEEE double evaluation of the tree.
    pub fn eval(&self, vars: Vars<'_>) -> Result<f64, EvalError> {
        eval_node(&self.root, vars)
    }

    /// Value and partials w.r.t. all variables of `wrt` (length = slot size).
    pub fn eval_grad(&self, vars: Vars<'_>, wrt: VarKind) -> Result<(f64, Vec<f64>), EvalError> {
        let m = match wrt {
            VarKind::X => vars.x.len(),
            VarKind::Y => vars.y.len(),
            VarKind::P => vars.p.len(),
        };
        let seeds: Vec<(VarKind, usize)> = (1..=m).map(|i| (wrt, i)).collect();
        let d = dual::eval_dual1(&self.root, vars, &seeds)?;
        Ok((d.val, d.grad))
    }

    /// Value, gradient, and symmetric Hessian over an explicit seed list.
    /// Seeds may mix variable families (used for mixed z/p second derivatives).
    pub fn eval_hess_seeded(
        &self,
        vars: Vars<'_>,
        seeds: &[(VarKind, usize)],
    ) -> Result<(f64, Vec<f64>, nalgebra::DMatrix<f64>), EvalError> {
        let d = dual::eval_dual2(&self.root, vars, seeds)?;
        Ok((d.val, d.grad, d.hess))
    }

    /// Square Hessian w.r.t. all variables of one family.
    pub fn eval_hess(
        &self,
        vars: Vars<'_>,
        wrt: VarKind,
    ) -> Result<nalgebra::DMatrix<f64>, EvalError> {
        let m = match wrt {
            VarKind::X => vars.x.len(),
            VarKind::Y => vars.y.len(),
            VarKind::P => vars.p.len(),
        };
        let seeds: Vec<(VarKind, usize)> = (1..=m).map(|i| (wrt, i)).collect();
        let d = dual::eval_dual2(&self.root, vars, &seeds)?;
        Ok(d.hess)
    }

    /// Natural interval extension; the result encloses the true range of the
    /// tree over the boxes.
    pub fn eval_interval(&self, boxes: VarBoxes<'_>) -> Result<Interval, EvalError> {
        eval_node_interval(&self.root, boxes)
    }
}

fn eval_node(n: &Node, vars: Vars<'_>) -> Result<f64, EvalError> {
    match n {
        Node::Const(c) => Ok(*c),
        Node::Var(k, i) => vars.get(*k, *i),
        Node::Un(op, a) => {
            let v = eval_node(a, vars)?;
            match op {
                UnOp::Neg => Ok(-v),
                UnOp::Exp => Ok(v.exp()),
                UnOp::Log => {
                    if v <= 0.0 {
                        Err(domain("log", format!("log of nonpositive value {v}")))
                    } else {
                        Ok(v.ln())
                    }
                }
                UnOp::Sqrt => {
                    if v < 0.0 {
                        Err(domain("sqrt", format!("sqrt of negative value {v}")))
                    } else {
                        Ok(v.sqrt())
                    }
                }
                UnOp::Abs => Ok(v.abs()),
            }
        }
        Node::Bin(op, a, b) => {
            let va = eval_node(a, vars)?;
            let vb = eval_node(b, vars)?;
            match op {
                BinOp::Add => Ok(va + vb),
                BinOp::Sub => Ok(va - vb),
                BinOp::Mul => Ok(va * vb),
                BinOp::Div => {
                    if vb == 0.0 {
                        Err(domain("div", "division by zero".to_string()))
                    } else {
                        Ok(va / vb)
                    }
                }
                BinOp::Pow => match as_integer_exponent(vb) {
                    Some(nexp) => {
                        if va == 0.0 && nexp < 0 {
                            Err(domain("pow", "zero base with negative exponent".to_string()))
                        } else {
                            Ok(va.powi(nexp))
                        }
                    }
                    None => {
                        if va <= 0.0 {
                            Err(domain(
                                "pow",
                                format!("non-integer exponent {vb} requires positive base, got {va}"),
                            ))
                        } else {
                            Ok(va.powf(vb))
                        }
                    }
                },
            }
        }
    }
}

fn eval_node_interval(n: &Node, boxes: VarBoxes<'_>) -> Result<Interval, EvalError> {
    match n {
        Node::Const(c) => Ok(Interval::point(*c)),
        Node::Var(k, i) => boxes.get(*k, *i),
        Node::Un(op, a) => {
            let v = eval_node_interval(a, boxes)?;
            match op {
                UnOp::Neg => Ok(v.neg()),
                UnOp::Exp => Ok(v.exp()),
                UnOp::Log => v
                    .ln()
                    .ok_or_else(|| domain("log", format!("log undefined over {v}"))),
                UnOp::Sqrt => v
                    .sqrt()
                    .ok_or_else(|| domain("sqrt", format!("sqrt undefined over {v}"))),
                UnOp::Abs => Ok(v.abs()),
            }
        }
        Node::Bin(op, a, b) => {
            let va = eval_node_interval(a, boxes)?;
            let vb = eval_node_interval(b, boxes)?;
            match op {
                BinOp::Add => Ok(va.add(vb)),
                BinOp::Sub => Ok(va.sub(vb)),
                BinOp::Mul => Ok(va.mul(vb)),
                BinOp::Div => {
                    if vb.lo == 0.0 && vb.hi == 0.0 {
                        Err(domain("div", "division by identically zero interval".to_string()))
                    } else {
                        Ok(va.div(vb))
                    }
                }
                BinOp::Pow => {
                    // Interval exponents are only supported when degenerate.
                    if vb.lo != vb.hi {
                        return Err(domain(
                            "pow",
                            "non-degenerate interval exponent".to_string(),
                        ));
                    }
                    match as_integer_exponent(vb.lo) {
                        Some(nexp) => Ok(va.powi(nexp)),
                        None => va.powf(vb.lo).ok_or_else(|| {
                            domain("pow", format!("non-integer power undefined over {va}"))
                        }),
                    }
                }
            }
        }
    }
}

// --- printing -------------------------------------------------------------

// Precedence levels: 1 add/sub, 2 mul/div, 3 unary minus, 4 pow, 5 atom.
fn prec(n: &Node) -> u8 {
    match n {
        Node::Const(c) if *c < 0.0 => 3,
        Node::Const(_) | Node::Var(..) => 5,
        Node::Un(UnOp::Neg, _) => 3,
        Node::Un(..) => 5,
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Bin(BinOp::Pow, ..) => 4,
    }
}

fn fmt_node(n: &Node, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
    let this = prec(n);
    let needs_paren = this < min_prec;
    if needs_paren {
        write!(f, "(")?;
    }
    match n {
        Node::Const(c) => write!(f, "{}", c)?,
        Node::Var(k, i) => write!(f, "{}{}", k.letter(), i)?,
        Node::Un(UnOp::Neg, a) => {
            write!(f, "-")?;
            fmt_node(a, f, 4)?;
        }
        Node::Un(op, a) => {
            let name = match op {
                UnOp::Exp => "exp",
                UnOp::Log => "log",
                UnOp::Sqrt => "sqrt",
                UnOp::Abs => "abs",
                UnOp::Neg => unreachable!(),
            };
            write!(f, "{}(", name)?;
            fmt_node(a, f, 0)?;
            write!(f, ")")?;
        }
        Node::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", 1, 1),
                BinOp::Sub => (" - ", 1, 2),
                BinOp::Mul => ("*", 2, 2),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            fmt_node(a, f, lp)?;
            write!(f, "{}", sym)?;
            fmt_node(b, f, rp)?;
        }
    }
    if needs_paren {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.root, f, 0)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Add, self, rhs)
    }
}
impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Sub, self, rhs)
    }
}
impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Mul, self, rhs)
    }
}
impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Div, self, rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        out.extend_from_slice(y);
        out
    }

    #[test]
    fn dp_objective_and_constraint_values() {
        let f = parse("10 - x1").unwrap();
        assert_eq!(f.eval(Vars::x_only(&[6.0])).unwrap(), 4.0);

        let g = parse("y1^2/(1+exp(-40*(x1-y1))) + x1 - y1 - 2").unwrap();
        // hand evaluation at x1 = 2, y1 = 2: 4/(1+e^0) + 2 - 2 - 2 = 0
        let val = g.eval(Vars::new(&[2.0], &[2.0], &[])).unwrap();
        assert!(val.abs() < 1e-12, "got {val}");
        let _ = v(&[], &[]);
    }

    #[test]
    fn seidel_constraint_at_optimum() {
        let g = parse("-y1^2 + 2*y1*x1 - x2").unwrap();
        let val = g
            .eval(Vars::new(&[1.0 / 3.0, 1.0 / 9.0], &[1.0 / 3.0], &[]))
            .unwrap();
        assert!(val.abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let f = parse("10 - x1").unwrap();
        let (_, g) = f.eval_grad(Vars::x_only(&[3.7]), VarKind::X).unwrap();
        assert_eq!(g, vec![-1.0]);

        let s = parse("-y1^2 + 2*y1*x1 - x2").unwrap();
        let (_, gy) = s
            .eval_grad(Vars::new(&[0.5, 0.0], &[0.5], &[]), VarKind::Y)
            .unwrap();
        assert!(gy[0].abs() < 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let e = parse("-y1^2").unwrap();
        let h = e.eval_hess(Vars::new(&[], &[1.3], &[]), VarKind::Y).unwrap();
        assert_eq!(h[(0, 0)], -2.0);

        let b = parse("x1*x2").unwrap();
        let h = b.eval_hess(Vars::x_only(&[2.0, 5.0]), VarKind::X).unwrap();
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(h[(0, 1)], 1.0);
        assert_eq!(h[(1, 0)], 1.0);
        assert_eq!(h[(1, 1)], 0.0);
    }

    #[test]
    fn dp_constraint_derivatives_match_finite_differences() {
        let g = parse("y1^2/(1+exp(-40*(x1-y1))) + x1 - y1 - 2").unwrap();
        let at = |yv: f64| g.eval(Vars::new(&[2.0], &[yv], &[])).unwrap();
        let h = 1e-6;
        let fd = (at(3.0 + h) - at(3.0 - h)) / (2.0 * h);
        let (_, gy) = g.eval_grad(Vars::new(&[2.0], &[3.0], &[]), VarKind::Y).unwrap();
        assert!((gy[0] - fd).abs() / fd.abs().max(1.0) < 1e-5);

        let gy_at = |yv: f64| {
            g.eval_grad(Vars::new(&[2.0], &[yv], &[]), VarKind::Y).unwrap().1[0]
        };
        let fd2 = (gy_at(3.0 + h) - gy_at(3.0 - h)) / (2.0 * h);
        let hm = g.eval_hess(Vars::new(&[2.0], &[3.0], &[]), VarKind::Y).unwrap();
        assert!((hm[(0, 0)] - fd2).abs() / fd2.abs().max(1.0) < 1e-4);
    }

    #[test]
    fn interval_monotone_linear() {
        let f = parse("10 - x1").unwrap();
        let b = f
            .eval_interval(VarBoxes::new(&[Interval::new(0.0, 6.0)], &[], &[]))
            .unwrap();
        assert!(b.lo <= 4.0 && 4.0 - b.lo < 1e-12);
        assert!(b.hi >= 10.0 && b.hi - 10.0 < 1e-12);
    }

    #[test]
    fn interval_dependency_is_allowed_but_enclosing() {
        let f = parse("x1*x1").unwrap();
        let b = f
            .eval_interval(VarBoxes::new(&[Interval::new(-1.0, 1.0)], &[], &[]))
            .unwrap();
        assert!(b.lo <= 0.0 && b.hi >= 1.0);
    }

    #[test]
    fn interval_encloses_dense_grid_for_seidel() {
        let g = parse("-y1^2 + 2*y1*x1 - x2").unwrap();
        let xb = [Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)];
        let yb = [Interval::new(-1.0, 1.0)];
        let enc = g.eval_interval(VarBoxes::new(&xb, &yb, &[])).unwrap();
        let n = 100; // 100^3 = 1e6 grid points
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let x1 = -1.0 + 2.0 * i as f64 / n as f64;
                    let x2 = -1.0 + 2.0 * j as f64 / n as f64;
                    let y1 = -1.0 + 2.0 * k as f64 / n as f64;
                    let v = g.eval(Vars::new(&[x1, x2], &[y1], &[])).unwrap();
                    assert!(enc.contains(v));
                }
            }
        }
    }

    #[test]
    fn substitution_shares_untouched_subtrees() {
        let g = parse("y1^2 + x1").unwrap();
        let s = g.substitute(&|k, i| {
            (k == VarKind::Y && i == 1).then(|| Expr::constant(3.0))
        });
        assert_eq!(s.eval(Vars::x_only(&[1.0])).unwrap(), 10.0);
        assert_eq!(g.max_index(VarKind::Y), 1);
        assert_eq!(s.max_index(VarKind::Y), 0);
    }

    #[test]
    fn print_parse_round_trip_is_stable() {
        for src in [
            "10 - x1",
            "y1^2/(1+exp(-40*(x1-y1))) + x1 - y1 - 2",
            "-x1^4 + x1^2 - x1^2*y1^2 + 2*x1^3*y1 - 4",
            "-(x1 - y1)^2 - x2",
            "2^-3",
            "x1 - (x2 - x3)",
            "(x1/x2)/x3",
            "x1^x2^2",
            "abs(x1)*sqrt(x2) + log(p1)",
        ] {
            let e1 = parse(src).unwrap();
            let printed = format!("{e1}");
            let e2 = parse(&printed).unwrap();
            assert_eq!(format!("{e2}"), printed, "src = {src}");
            assert_eq!(e1, e2, "structural round trip for {src}");
        }
    }
}
