//! Parametric sensitivity of KKT points: classification (LICQ, strict
//! complementarity, full active set vs. strong second-order sufficiency),
//! value-function gradients, and solution-mapping Jacobians.
//!
//! At a KKT point satisfying LICQ and SC, the value function is
//! differentiable with `∇_p ν* = ∇_p L(z*, λ*, p)`, and the solution mapping
//! is differentiable when additionally either (a) the active set pins down
//! all n variables, or (b) the SSOSC holds; case (a) reduces to a square
//! linear solve on the active constraint rows, case (b) to the bordered KKT
//! linear system.
//!
//! Weakly active constraints (active with a near-zero multiplier) make the
//! value function kinked. Bound constraints that are weakly active are always
//! excluded from the active set before classification; other weakly active
//! constraints are kept or dropped according to the caller's policy — kept by
//! the plain discretization drivers, dropped by the generalized ones. The
//! dropped indices are surfaced for auditability.

use crate::nlp_local::{KktSolution, Nlp, SolveStatus};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensCase {
    /// Case (a): the active constraint gradients span all of R^n.
    FullActive,
    /// Case (b): SSOSC holds on the null space of the strictly active rows.
    Ssosc,
    NotApplicable,
}

/// How to treat weakly active non-bound constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeaklyActivePolicy {
    /// Keep them in the active set (discretization-method calls).
    IncludeNonBound,
    /// Drop them as well (generalized-method calls).
    ExcludeAll,
}

#[derive(Debug, Clone)]
pub struct SensOptions {
    pub act_tol: f64,
    /// Multiplier threshold below which an active constraint counts as
    /// weakly active.
    pub weak_tol: f64,
    pub sc_tol: f64,
    pub ssosc_tol: f64,
    /// Relative pivot threshold for the LICQ rank test.
    pub rank_tol: f64,
}

impl Default for SensOptions {
    fn default() -> Self {
        SensOptions {
            act_tol: 1e-6,
            weak_tol: 1e-6,
            sc_tol: 1e-8,
            ssosc_tol: 1e-8,
            rank_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensReport {
    pub licq: bool,
    pub sc: bool,
    pub case: SensCase,
    pub value_grad: Option<Vec<f64>>,
    pub sol_jac: Option<DMatrix<f64>>,
    pub dropped_weakly_active: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum SensError {
    #[error("solution is not a KKT point (status {0:?})")]
    NotKkt(SolveStatus),
    #[error("evaluation failed: {0}")]
    Eval(#[from] crate::expr::EvalError),
    #[error("sensitivity hypotheses fail: {0}")]
    NotApplicable(String),
    #[error("singular sensitivity linear system")]
    Singular,
}

/// Active set after the weakly-active filtering policy.
fn filtered_active(
    nlp: &Nlp,
    sol: &KktSolution,
    policy: WeaklyActivePolicy,
    opts: &SensOptions,
) -> Result<(Vec<usize>, Vec<usize>), SensError> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &i in &sol.active_set {
        let c = nlp.con_value(&sol.z, i)?;
        let weak = sol.lambda[i] < opts.weak_tol && c.abs() < opts.act_tol;
        let drop = weak
            && (nlp.is_bound(i) || matches!(policy, WeaklyActivePolicy::ExcludeAll));
        if drop {
            dropped.push(i);
        } else {
            kept.push(i);
        }
    }
    Ok((kept, dropped))
}

/// Classify a KKT point; flags only (no derivative payloads).
pub fn classify(
    nlp: &Nlp,
    sol: &KktSolution,
    policy: WeaklyActivePolicy,
    opts: &SensOptions,
) -> Result<SensReport, SensError> {
    if sol.status != SolveStatus::KktOk {
        return Err(SensError::NotKkt(sol.status));
    }
    let n = nlp.n();
    let (active, dropped) = filtered_active(nlp, sol, policy, opts)?;

    // LICQ: rank of the active gradient matrix equals its row count.
    let licq = if active.is_empty() {
        true
    } else if active.len() > n {
        false
    } else {
        let mut jt = DMatrix::<f64>::zeros(n, active.len());
        for (t, &i) in active.iter().enumerate() {
            let g = nlp.con_grad(&sol.z, i)?;
            for r in 0..n {
                jt[(r, t)] = g[r];
            }
        }
        let qr = jt.col_piv_qr();
        let rmat = qr.r();
        let maxdiag = (0..active.len().min(n))
            .map(|k| rmat[(k, k)].abs())
            .fold(0.0f64, f64::max);
        let thresh = opts.rank_tol * maxdiag.max(1.0);
        let rank = (0..active.len().min(n))
            .filter(|&k| rmat[(k, k)].abs() > thresh)
            .count();
        rank == active.len()
    };

    // SC on the filtered active set: every kept active constraint must carry
    // a clearly positive multiplier (inactive ones satisfy λ - c > 0
    // automatically).
    let sc = active.iter().all(|&i| {
        sol.lambda[i] + nlp.con_value(&sol.z, i).map(|c| c.abs()).unwrap_or(0.0) > opts.sc_tol
    });

    let case = if !licq || !sc {
        SensCase::NotApplicable
    } else if active.len() == n {
        SensCase::FullActive
    } else if ssosc_holds(nlp, sol, &active, opts)? {
        SensCase::Ssosc
    } else {
        SensCase::NotApplicable
    };

    Ok(SensReport {
        licq,
        sc,
        case,
        value_grad: None,
        sol_jac: None,
        dropped_weakly_active: dropped,
    })
}

/// SSOSC: the Lagrangian Hessian restricted to the null space of the
/// strictly active constraint gradients is positive definite.
fn ssosc_holds(
    nlp: &Nlp,
    sol: &KktSolution,
    active: &[usize],
    opts: &SensOptions,
) -> Result<bool, SensError> {
    let n = nlp.n();
    let hess = lagrangian_hessian(nlp, sol)?;
    let strict: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&i| sol.lambda[i] > opts.sc_tol)
        .collect();
    let reduced = if strict.is_empty() {
        hess
    } else {
        let mut jt = DMatrix::<f64>::zeros(n, strict.len());
        for (t, &i) in strict.iter().enumerate() {
            let g = nlp.con_grad(&sol.z, i)?;
            for r in 0..n {
                jt[(r, t)] = g[r];
            }
        }
        let qr = jt.clone().qr();
        let q = qr.q();
        let rank = {
            let r = qr.r();
            let maxdiag = (0..strict.len().min(n))
                .map(|k| r[(k, k)].abs())
                .fold(0.0f64, f64::max);
            (0..strict.len().min(n))
                .filter(|&k| r[(k, k)].abs() > opts.rank_tol * maxdiag.max(1.0))
                .count()
        };
        if rank >= n {
            return Ok(true); // null space is trivial
        }
        let basis = null_space_complement(&q, n, rank);
        if basis.ncols() == 0 {
            return Ok(true);
        }
        basis.transpose() * hess * &basis
    };
    if reduced.nrows() == 0 {
        return Ok(true);
    }
    let sym = 0.5 * (&reduced + reduced.transpose());
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().all(|&e| e > opts.ssosc_tol))
}

/// Orthonormal basis of the orthogonal complement of the first `rank`
/// columns of `q` in R^n.
fn null_space_complement(q: &DMatrix<f64>, n: usize, rank: usize) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..n {
        let mut v = DVector::<f64>::zeros(n);
        v[j] = 1.0;
        for k in 0..rank.min(q.ncols()) {
            let qk = q.column(k);
            let dot = qk.dot(&v);
            v -= dot * DVector::from_column_slice(qk.as_slice());
        }
        for b in &cols {
            let dot = b.dot(&v);
            v -= dot * b.clone();
        }
        let norm = v.norm();
        if norm > 1e-10 {
            cols.push(v / norm);
        }
        if cols.len() == n - rank {
            break;
        }
    }
    let mut out = DMatrix::<f64>::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

fn lagrangian_hessian(nlp: &Nlp, sol: &KktSolution) -> Result<DMatrix<f64>, SensError> {
    let n = nlp.n();
    let mut h = nlp.objective.eval_hess(nlp.vars_at(&sol.z), nlp.decision)?;
    for i in 0..nlp.m() {
        if sol.lambda[i] != 0.0 {
            let hc = nlp.constraints[i].eval_hess(nlp.vars_at(&sol.z), nlp.decision)?;
            for r in 0..n {
                for s in 0..n {
                    h[(r, s)] += sol.lambda[i] * hc[(r, s)];
                }
            }
        }
    }
    Ok(h)
}

/// Gradient of the value function: `∇_p ν* = ∇_p L(z*, λ*, p)`.
///
/// Requires classification case (a) or (b) after weakly-active filtering;
/// callers fall back per their driver policy when `NotApplicable` comes back.
pub fn value_gradient(
    nlp: &Nlp,
    sol: &KktSolution,
    policy: WeaklyActivePolicy,
    opts: &SensOptions,
) -> Result<Vec<f64>, SensError> {
    let report = classify(nlp, sol, policy, opts)?;
    if report.case == SensCase::NotApplicable {
        return Err(SensError::NotApplicable(format!(
            "licq={}, sc={}",
            report.licq, report.sc
        )));
    }
    value_gradient_unchecked(nlp, sol)
}

/// The ∇_p L assembly itself, usable once hypotheses have been checked.
pub fn value_gradient_unchecked(nlp: &Nlp, sol: &KktSolution) -> Result<Vec<f64>, SensError> {
    let d = nlp.param_len();
    let mut grad = nlp.obj_grad_param(&sol.z)?;
    for i in 0..nlp.m() {
        if sol.lambda[i] != 0.0 {
            let gc = nlp.con_grad_param(&sol.z, i)?;
            for t in 0..d {
                grad[t] += sol.lambda[i] * gc[t];
            }
        }
    }
    Ok(grad)
}

/// Jacobian of the solution mapping `∇_p z*` (n x d), by case (a) or (b).
pub fn solution_jacobian(
    nlp: &Nlp,
    sol: &KktSolution,
    policy: WeaklyActivePolicy,
    opts: &SensOptions,
) -> Result<DMatrix<f64>, SensError> {
    let report = classify(nlp, sol, policy, opts)?;
    let (active, _) = filtered_active(nlp, sol, policy, opts)?;
    let n = nlp.n();
    let d = nlp.param_len();

    match report.case {
        SensCase::NotApplicable => Err(SensError::NotApplicable(format!(
            "licq={}, sc={}",
            report.licq, report.sc
        ))),
        SensCase::FullActive => {
            // c_A(z*(p), p) = 0 pins z: J_z dz + J_p = 0.
            let mut jz = DMatrix::<f64>::zeros(n, n);
            let mut jp = DMatrix::<f64>::zeros(n, d);
            for (t, &i) in active.iter().enumerate() {
                let gz = nlp.con_grad(&sol.z, i)?;
                let gp = nlp.con_grad_param(&sol.z, i)?;
                for r in 0..n {
                    jz[(t, r)] = gz[r];
                }
                for r in 0..d {
                    jp[(t, r)] = gp[r];
                }
            }
            let lu = jz.lu();
            let sol_jac = lu.solve(&jp).ok_or(SensError::Singular)?;
            Ok(-sol_jac)
        }
        SensCase::Ssosc => {
            // Bordered system on (dz, dλ_A):
            //   [∇²_z L   J_zᵀ] [dz ]   = - [∇_{pz} L]
            //   [J_z      0   ] [dλ ]       [J_p     ]
            let na = active.len();
            let hess = lagrangian_hessian(nlp, sol)?;
            let mixed = mixed_lagrangian_block(nlp, sol)?; // n x d
            let mut a = DMatrix::<f64>::zeros(n + na, n + na);
            let mut rhs = DMatrix::<f64>::zeros(n + na, d);
            for r in 0..n {
                for s in 0..n {
                    a[(r, s)] = hess[(r, s)];
                }
                for t in 0..d {
                    rhs[(r, t)] = -mixed[(r, t)];
                }
            }
            for (t, &i) in active.iter().enumerate() {
                let gz = nlp.con_grad(&sol.z, i)?;
                let gp = nlp.con_grad_param(&sol.z, i)?;
                for r in 0..n {
                    a[(r, n + t)] = gz[r];
                    a[(n + t, r)] = gz[r];
                }
                for s in 0..d {
                    rhs[(n + t, s)] = -gp[s];
                }
            }
            let lu = a.lu();
            let full = lu.solve(&rhs).ok_or(SensError::Singular)?;
            Ok(full.rows(0, n).into_owned())
        }
    }
}

/// Mixed second-derivative block `∇_{pz} L` (rows z, columns p).
fn mixed_lagrangian_block(nlp: &Nlp, sol: &KktSolution) -> Result<DMatrix<f64>, SensError> {
    let n = nlp.n();
    let d = nlp.param_len();
    let mut seeds: Vec<(crate::expr::VarKind, usize)> = Vec::with_capacity(n + d);
    for i in 1..=n {
        seeds.push((nlp.decision, i));
    }
    for i in 1..=d {
        seeds.push((nlp.param, i));
    }
    let vars = nlp.vars_at(&sol.z);
    let (_, _, mut h) = nlp.objective.eval_hess_seeded(vars, &seeds)?;
    for i in 0..nlp.m() {
        if sol.lambda[i] != 0.0 {
            let (_, _, hc) = nlp.constraints[i].eval_hess_seeded(vars, &seeds)?;
            h += hc * sol.lambda[i];
        }
    }
    Ok(h.view((0, n), (n, d)).into_owned())
}
