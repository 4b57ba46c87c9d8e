//! Forward-mode automatic differentiation over an ordered seed list.
//!
//! `eval_dual1` propagates (value, gradient) pairs, `eval_dual2` additionally
//! carries a dense symmetric Hessian. Seeds may mix variable families, which
//! is how mixed z/p second derivatives are obtained for the sensitivity
//! linear systems. The derivative of `abs` at 0 is defined as 0 (one-sided
//! convention), matching the interval and plain-evaluation semantics.

use super::{as_integer_exponent, BinOp, EvalError, Node, UnOp, VarKind, Vars};
use nalgebra::DMatrix;

pub struct Dual1 {
    pub val: f64,
    pub grad: Vec<f64>,
}

pub struct Dual2 {
    pub val: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

fn domain(op: &'static str, detail: String) -> EvalError {
    EvalError::Domain { op, detail }
}

struct SeedMap {
    m: usize,
    // position of each (kind, 1-based index) among the seeds, if seeded
    x: Vec<Option<usize>>,
    y: Vec<Option<usize>>,
    p: Vec<Option<usize>>,
}

impl SeedMap {
    fn new(vars: Vars<'_>, seeds: &[(VarKind, usize)]) -> Self {
        let mut sm = SeedMap {
            m: seeds.len(),
            x: vec![None; vars.x.len()],
            y: vec![None; vars.y.len()],
            p: vec![None; vars.p.len()],
        };
        for (pos, (kind, idx)) in seeds.iter().enumerate() {
            let slot = match kind {
                VarKind::X => &mut sm.x,
                VarKind::Y => &mut sm.y,
                VarKind::P => &mut sm.p,
            };
            if *idx >= 1 && *idx <= slot.len() {
                slot[*idx - 1] = Some(pos);
            }
        }
        sm
    }

    fn pos(&self, kind: VarKind, index: usize) -> Option<usize> {
        let slot = match kind {
            VarKind::X => &self.x,
            VarKind::Y => &self.y,
            VarKind::P => &self.p,
        };
        slot.get(index - 1).copied().flatten()
    }
}

pub fn eval_dual1(
    node: &Node,
    vars: Vars<'_>,
    seeds: &[(VarKind, usize)],
) -> Result<Dual1, EvalError> {
    let sm = SeedMap::new(vars, seeds);
    walk1(node, vars, &sm)
}

fn walk1(node: &Node, vars: Vars<'_>, sm: &SeedMap) -> Result<Dual1, EvalError> {
    match node {
        Node::Const(c) => Ok(Dual1 { val: *c, grad: vec![0.0; sm.m] }),
        Node::Var(k, i) => {
            let val = vars.get(*k, *i)?;
            let mut grad = vec![0.0; sm.m];
            if let Some(pos) = sm.pos(*k, *i) {
                grad[pos] = 1.0;
            }
            Ok(Dual1 { val, grad })
        }
        Node::Un(op, a) => {
            let mut d = walk1(a, vars, sm)?;
            let (val, slope) = unary_vs(*op, d.val)?;
            for g in &mut d.grad {
                *g *= slope;
            }
            Ok(Dual1 { val, grad: d.grad })
        }
        Node::Bin(op, a, b) => {
            let da = walk1(a, vars, sm)?;
            let db = walk1(b, vars, sm)?;
            if *op == BinOp::Pow && !grad_is_zero(b, sm) && da.val <= 0.0 {
                return Err(domain(
                    "pow",
                    format!("varying exponent requires positive base, got {}", da.val),
                ));
            }
            let (val, ca, cb) = binary_vs(*op, da.val, db.val)?;
            let grad = da
                .grad
                .iter()
                .zip(db.grad.iter())
                .map(|(&ga, &gb)| ca * ga + cb * gb)
                .collect();
            Ok(Dual1 { val, grad })
        }
    }
}

/// True when the subtree contains no seeded variable, i.e. its gradient is
/// identically zero. Lets `u^v` with a seed-free exponent use the power rule
/// (valid for negative bases with integer exponents).
fn grad_is_zero(node: &Node, sm: &SeedMap) -> bool {
    match node {
        Node::Const(_) => true,
        Node::Var(k, i) => sm.pos(*k, *i).is_none(),
        Node::Un(_, a) => grad_is_zero(a, sm),
        Node::Bin(_, a, b) => grad_is_zero(a, sm) && grad_is_zero(b, sm),
    }
}

fn unary_vs(op: UnOp, v: f64) -> Result<(f64, f64), EvalError> {
    match op {
        UnOp::Neg => Ok((-v, -1.0)),
        UnOp::Exp => {
            let e = v.exp();
            Ok((e, e))
        }
        UnOp::Log => {
            if v <= 0.0 {
                Err(domain("log", format!("log of nonpositive value {v}")))
            } else {
                Ok((v.ln(), 1.0 / v))
            }
        }
        UnOp::Sqrt => {
            if v < 0.0 {
                Err(domain("sqrt", format!("sqrt of negative value {v}")))
            } else if v == 0.0 {
                // one-sided convention at the boundary, like abs at 0
                Ok((0.0, 0.0))
            } else {
                let s = v.sqrt();
                Ok((s, 0.5 / s))
            }
        }
        UnOp::Abs => Ok((v.abs(), if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })),
    }
}

/// Value and the two first-order coefficients (∂/∂a, ∂/∂b) of a binary op.
fn binary_vs(op: BinOp, a: f64, b: f64) -> Result<(f64, f64, f64), EvalError> {
    match op {
        BinOp::Add => Ok((a + b, 1.0, 1.0)),
        BinOp::Sub => Ok((a - b, 1.0, -1.0)),
        BinOp::Mul => Ok((a * b, b, a)),
        BinOp::Div => {
            if b == 0.0 {
                Err(domain("div", "division by zero".to_string()))
            } else {
                Ok((a / b, 1.0 / b, -a / (b * b)))
            }
        }
        BinOp::Pow => pow_coeffs(a, b),
    }
}

/// First-order coefficients of a^b. Integer exponents use the power rule and
/// permit any base; otherwise a positive base is required. The ∂/∂b
/// coefficient is a*ln(a)-based and only valid when the exponent actually
/// varies, which requires a > 0; for integer exponents of nonpositive bases
/// it is set to 0 (the exponent is constant in every in-scope expression).
fn pow_coeffs(a: f64, b: f64) -> Result<(f64, f64, f64), EvalError> {
    match as_integer_exponent(b) {
        Some(n) => {
            if a == 0.0 && n < 0 {
                return Err(domain("pow", "zero base with negative exponent".to_string()));
            }
            let val = a.powi(n);
            let da = if n == 0 { 0.0 } else { n as f64 * a.powi(n - 1) };
            let db = if a > 0.0 { val * a.ln() } else { 0.0 };
            Ok((val, da, db))
        }
        None => {
            if a <= 0.0 {
                Err(domain(
                    "pow",
                    format!("non-integer exponent {b} requires positive base, got {a}"),
                ))
            } else {
                let val = a.powf(b);
                Ok((val, b * a.powf(b - 1.0), val * a.ln()))
            }
        }
    }
}

pub fn eval_dual2(
    node: &Node,
    vars: Vars<'_>,
    seeds: &[(VarKind, usize)],
) -> Result<Dual2, EvalError> {
    let sm = SeedMap::new(vars, seeds);
    walk2(node, vars, &sm)
}

fn walk2(node: &Node, vars: Vars<'_>, sm: &SeedMap) -> Result<Dual2, EvalError> {
    let m = sm.m;
    match node {
        Node::Const(c) => Ok(Dual2 {
            val: *c,
            grad: vec![0.0; m],
            hess: DMatrix::zeros(m, m),
        }),
        Node::Var(k, i) => {
            let val = vars.get(*k, *i)?;
            let mut grad = vec![0.0; m];
            if let Some(pos) = sm.pos(*k, *i) {
                grad[pos] = 1.0;
            }
            Ok(Dual2 { val, grad, hess: DMatrix::zeros(m, m) })
        }
        Node::Un(op, a) => {
            let d = walk2(a, vars, sm)?;
            let (val, s1, s2) = unary_vs2(*op, d.val)?;
            let mut hess = d.hess * s1;
            rank1_update(&mut hess, s2, &d.grad, &d.grad);
            let grad = d.grad.iter().map(|&g| s1 * g).collect();
            Ok(Dual2 { val, grad, hess })
        }
        Node::Bin(op, a, b) => {
            let da = walk2(a, vars, sm)?;
            let db = walk2(b, vars, sm)?;
            match op {
                BinOp::Add | BinOp::Sub => {
                    let sign = if *op == BinOp::Add { 1.0 } else { -1.0 };
                    let val = da.val + sign * db.val;
                    let grad = da
                        .grad
                        .iter()
                        .zip(db.grad.iter())
                        .map(|(&x, &y)| x + sign * y)
                        .collect();
                    let hess = da.hess + db.hess * sign;
                    Ok(Dual2 { val, grad, hess })
                }
                BinOp::Mul => {
                    let val = da.val * db.val;
                    let grad: Vec<f64> = da
                        .grad
                        .iter()
                        .zip(db.grad.iter())
                        .map(|(&x, &y)| x * db.val + y * da.val)
                        .collect();
                    let mut hess = da.hess * db.val + db.hess * da.val;
                    rank1_update(&mut hess, 1.0, &da.grad, &db.grad);
                    rank1_update(&mut hess, 1.0, &db.grad, &da.grad);
                    Ok(Dual2 { val, grad, hess })
                }
                BinOp::Div => {
                    if db.val == 0.0 {
                        return Err(domain("div", "division by zero".to_string()));
                    }
                    let w = da.val / db.val;
                    let grad: Vec<f64> = da
                        .grad
                        .iter()
                        .zip(db.grad.iter())
                        .map(|(&ua, &ub)| (ua - w * ub) / db.val)
                        .collect();
                    // H_w = (H_u - w'·v'ᵀ - v'·w'ᵀ - w·H_v) / v
                    let mut hess = da.hess.clone();
                    hess -= db.hess.clone() * w;
                    rank1_update(&mut hess, -1.0, &grad, &db.grad);
                    rank1_update(&mut hess, -1.0, &db.grad, &grad);
                    hess /= db.val;
                    Ok(Dual2 { val: w, grad, hess })
                }
                BinOp::Pow => {
                    if !grad_is_zero(b, sm) {
                        // General a^b = exp(b·ln a); requires positive base.
                        if da.val <= 0.0 {
                            return Err(domain(
                                "pow",
                                format!("varying exponent requires positive base, got {}", da.val),
                            ));
                        }
                        let ln = unary2(UnOp::Log, da)?;
                        let prod = mul2(db, ln);
                        return unary2(UnOp::Exp, prod);
                    }
                    let e = db.val;
                    let (val, s1, s2) = match as_integer_exponent(e) {
                        Some(n) => {
                            if da.val == 0.0 && n < 2 && n != 0 {
                                if n < 0 {
                                    return Err(domain(
                                        "pow",
                                        "zero base with negative exponent".to_string(),
                                    ));
                                }
                                (0.0, 1.0, 0.0) // n == 1
                            } else {
                                let v = da.val.powi(n);
                                let s1 = if n == 0 { 0.0 } else { n as f64 * da.val.powi(n - 1) };
                                let s2 = if n <= 1 {
                                    0.0
                                } else {
                                    (n * (n - 1)) as f64 * da.val.powi(n - 2)
                                };
                                (v, s1, s2)
                            }
                        }
                        None => {
                            if da.val <= 0.0 {
                                return Err(domain(
                                    "pow",
                                    format!(
                                        "non-integer exponent {e} requires positive base, got {}",
                                        da.val
                                    ),
                                ));
                            }
                            let v = da.val.powf(e);
                            (v, e * da.val.powf(e - 1.0), e * (e - 1.0) * da.val.powf(e - 2.0))
                        }
                    };
                    let mut hess = da.hess * s1;
                    rank1_update(&mut hess, s2, &da.grad, &da.grad);
                    let grad = da.grad.iter().map(|&g| s1 * g).collect();
                    Ok(Dual2 { val, grad, hess })
                }
            }
        }
    }
}

fn mul2(a: Dual2, b: Dual2) -> Dual2 {
    let val = a.val * b.val;
    let grad: Vec<f64> = a
        .grad
        .iter()
        .zip(b.grad.iter())
        .map(|(&x, &y)| x * b.val + y * a.val)
        .collect();
    let mut hess = a.hess * b.val + b.hess * a.val;
    rank1_update(&mut hess, 1.0, &a.grad, &b.grad);
    rank1_update(&mut hess, 1.0, &b.grad, &a.grad);
    Dual2 { val, grad, hess }
}

fn unary2(op: UnOp, d: Dual2) -> Result<Dual2, EvalError> {
    let (val, s1, s2) = unary_vs2(op, d.val)?;
    let mut hess = d.hess * s1;
    rank1_update(&mut hess, s2, &d.grad, &d.grad);
    let grad = d.grad.iter().map(|&g| s1 * g).collect();
    Ok(Dual2 { val, grad, hess })
}

fn unary_vs2(op: UnOp, v: f64) -> Result<(f64, f64, f64), EvalError> {
    match op {
        UnOp::Neg => Ok((-v, -1.0, 0.0)),
        UnOp::Exp => {
            let e = v.exp();
            Ok((e, e, e))
        }
        UnOp::Log => {
            if v <= 0.0 {
                Err(domain("log", format!("log of nonpositive value {v}")))
            } else {
                Ok((v.ln(), 1.0 / v, -1.0 / (v * v)))
            }
        }
        UnOp::Sqrt => {
            if v < 0.0 {
                Err(domain("sqrt", format!("sqrt of negative value {v}")))
            } else if v == 0.0 {
                Ok((0.0, 0.0, 0.0))
            } else {
                let s = v.sqrt();
                Ok((s, 0.5 / s, -0.25 / (s * v)))
            }
        }
        UnOp::Abs => {
            let s = if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
            Ok((v.abs(), s, 0.0))
        }
    }
}

fn rank1_update(h: &mut DMatrix<f64>, scale: f64, u: &[f64], v: &[f64]) {
    if scale == 0.0 {
        return;
    }
    for i in 0..u.len() {
        if u[i] == 0.0 {
            continue;
        }
        for j in 0..v.len() {
            h[(i, j)] += scale * u[i] * v[j];
        }
    }
}
