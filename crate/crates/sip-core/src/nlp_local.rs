//! Local solver for small box-constrained NLPs with inequality constraints.
//!
//! `min F(z, p)  s.t.  c_i(z, p) <= 0,  z in [lo, hi]`
//!
//! The decision block `z` is one of the three expression variable families;
//! the remaining families are held fixed (they are the parameters of the
//! parametric program). The solver is an augmented-Lagrangian outer loop with
//! a spectral-projected-gradient inner solve on the box, followed by an
//! active-set Newton polish of the KKT system so that multipliers are
//! accurate enough for sensitivity formulas. Bound constraints are reported
//! as inequalities with their own multipliers, after the general constraints
//! (all lower bounds, then all upper bounds).

use crate::expr::{EvalError, Expr, VarKind, Vars};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A parametric NLP over one decision variable family.
#[derive(Debug, Clone)]
pub struct Nlp {
    pub objective: Expr,
    /// Inequality constraints `c_i <= 0` (general, not bounds).
    pub constraints: Vec<Expr>,
    pub decision: VarKind,
    /// Variable family treated as the parameter vector for sensitivities.
    pub param: VarKind,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub fixed_x: Vec<f64>,
    pub fixed_y: Vec<f64>,
    pub fixed_p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    KktOk,
    MaxIter,
    Infeasible,
}

/// A local-solve result: point, multipliers, active set, residual.
///
/// Multiplier indexing: `0..m` general constraints, `m..m+n` lower bounds
/// (`lo_j - z_j <= 0`), `m+n..m+2n` upper bounds (`z_j - hi_j <= 0`).
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub z: Vec<f64>,
    pub value: f64,
    pub lambda: Vec<f64>,
    pub active_set: Vec<usize>,
    pub kkt_residual: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stationarity/feasibility tolerance.
    pub tol: f64,
    /// Active-set classification tolerance.
    pub act_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, act_tol: 1e-6, max_outer: 60, max_inner: 400 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NlpError {
    #[error("evaluation failed at the start point: {0}")]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Nlp {
    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    /// Total inequality count including bounds-as-inequalities.
    pub fn total_cons(&self) -> usize {
        self.m() + 2 * self.n()
    }

    pub fn is_bound(&self, idx: usize) -> bool {
        idx >= self.m()
    }

    pub fn vars_at<'a>(&'a self, z: &'a [f64]) -> Vars<'a> {
        match self.decision {
            VarKind::X => Vars::new(z, &self.fixed_y, &self.fixed_p),
            VarKind::Y => Vars::new(&self.fixed_x, z, &self.fixed_p),
            VarKind::P => Vars::new(&self.fixed_x, &self.fixed_y, z),
        }
    }

    pub fn param_len(&self) -> usize {
        match self.param {
            VarKind::X => self.fixed_x.len(),
            VarKind::Y => self.fixed_y.len(),
            VarKind::P => self.fixed_p.len(),
        }
    }

    pub fn obj_value(&self, z: &[f64]) -> Result<f64, EvalError> {
        self.objective.eval(self.vars_at(z))
    }

    pub fn obj_grad(&self, z: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(self.objective.eval_grad(self.vars_at(z), self.decision)?.1)
    }

    /// Value of inequality `idx` in the combined ordering.
    pub fn con_value(&self, z: &[f64], idx: usize) -> Result<f64, EvalError> {
        let m = self.m();
        let n = self.n();
        if idx < m {
            self.constraints[idx].eval(self.vars_at(z))
        } else if idx < m + n {
            Ok(self.lo[idx - m] - z[idx - m])
        } else {
            let j = idx - m - n;
            Ok(z[j] - self.hi[j])
        }
    }

    /// Gradient of inequality `idx` w.r.t. the decision block.
    pub fn con_grad(&self, z: &[f64], idx: usize) -> Result<Vec<f64>, EvalError> {
        let m = self.m();
        let n = self.n();
        if idx < m {
            Ok(self.constraints[idx].eval_grad(self.vars_at(z), self.decision)?.1)
        } else if idx < m + n {
            let mut g = vec![0.0; n];
            g[idx - m] = -1.0;
            Ok(g)
        } else {
            let mut g = vec![0.0; n];
            g[idx - m - n] = 1.0;
            Ok(g)
        }
    }

    /// Gradient of inequality `idx` w.r.t. the parameter block (bounds have
    /// no parameter dependence).
    pub fn con_grad_param(&self, z: &[f64], idx: usize) -> Result<Vec<f64>, EvalError> {
        if idx < self.m() {
            Ok(self.constraints[idx].eval_grad(self.vars_at(z), self.param)?.1)
        } else {
            Ok(vec![0.0; self.param_len()])
        }
    }

    pub fn obj_grad_param(&self, z: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(self.objective.eval_grad(self.vars_at(z), self.param)?.1)
    }

    fn project(&self, z: &mut [f64]) {
        for j in 0..self.n() {
            z[j] = z[j].clamp(self.lo[j], self.hi[j]);
        }
    }

    fn nudge_inward(&self, z: &mut [f64]) {
        for j in 0..self.n() {
            let w = (self.hi[j] - self.lo[j]).max(1e-12);
            let eps = 1e-9 * w;
            if z[j] <= self.lo[j] {
                z[j] = self.lo[j] + eps;
            } else if z[j] >= self.hi[j] {
                z[j] = self.hi[j] - eps;
            }
        }
    }

    fn validate(&self, z0: &[f64]) -> Result<(), NlpError> {
        if z0.len() != self.n() {
            return Err(NlpError::Dimension(format!(
                "start point has length {}, expected {}",
                z0.len(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// KKT residual of a candidate (z, lambda): max of stationarity,
/// feasibility, and complementarity violations.
pub fn kkt_residual(nlp: &Nlp, z: &[f64], lambda: &[f64]) -> Result<f64, EvalError> {
    let n = nlp.n();
    let mut grad_l = nlp.obj_grad(z)?;
    for i in 0..nlp.total_cons() {
        if lambda[i] != 0.0 {
            let gc = nlp.con_grad(z, i)?;
            for j in 0..n {
                grad_l[j] += lambda[i] * gc[j];
            }
        }
    }
    let stat = grad_l.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
    let mut feas = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..nlp.total_cons() {
        let c = nlp.con_value(z, i)?;
        feas = feas.max(c);
        comp = comp.max((lambda[i] * c).abs());
    }
    Ok(stat.max(feas.max(0.0)).max(comp))
}

/// Augmented-Lagrangian local solve from a single start point.
pub fn solve_local(nlp: &Nlp, z0: &[f64], opts: &SolveOptions) -> Result<KktSolution, NlpError> {
    nlp.validate(z0)?;
    let m = nlp.m();
    let mut z = z0.to_vec();
    nlp.project(&mut z);
    nlp.nudge_inward(&mut z);

    // Make sure the start evaluates; otherwise report the error.
    nlp.obj_value(&z)?;

    let mut lambda = vec![0.0; m];
    let mut rho = 10.0;
    let mut inner_tol = 1e-2_f64.max(opts.tol);
    let mut prev_viol = f64::INFINITY;
    let mut best: Option<KktSolution> = None;
    let mut stall = 0usize;

    for _outer in 0..opts.max_outer {
        spg_minimize_al(nlp, &mut z, &lambda, rho, inner_tol, opts.max_inner);

        let cons: Vec<f64> = (0..m)
            .map(|i| nlp.con_value(&z, i).unwrap_or(f64::INFINITY))
            .collect();
        let viol = cons
            .iter()
            .zip(&lambda)
            .map(|(&c, &l)| c.max(-l / rho).abs())
            .fold(0.0f64, f64::max);

        for i in 0..m {
            lambda[i] = (lambda[i] + rho * cons[i]).max(0.0);
        }

        if let Ok(sol) = finalize(nlp, &z, &lambda, opts) {
            let better = best
                .as_ref()
                .map(|b| sol.kkt_residual < 0.9 * b.kkt_residual)
                .unwrap_or(true);
            if better {
                stall = 0;
                best = Some(sol.clone());
            } else {
                stall += 1;
            }
            if sol.status == SolveStatus::KktOk {
                return Ok(sol);
            }
            // Degenerate geometry (flat objectives, dependent actives) can
            // leave the residual plateaued above tol; stop burning outers.
            if stall >= 6 {
                break;
            }
        }

        // Grow the penalty only while genuinely infeasible; comparing
        // near-zero violations would push rho to scales where multiplier
        // updates amplify roundoff.
        if viol > 0.25 * prev_viol && viol > opts.tol {
            rho = (rho * 10.0).min(1e12);
        }
        prev_viol = viol;
        inner_tol = (inner_tol * 0.1).max(opts.tol * 0.1);

        if rho >= 1e12 && viol > opts.tol.max(1e-7) {
            break;
        }
    }

    let mut sol = match best {
        Some(s) => s,
        None => KktSolution {
            value: nlp.obj_value(&z).unwrap_or(f64::INFINITY),
            lambda: full_lambda(nlp, &z, &lambda),
            active_set: active_set(nlp, &z, opts.act_tol),
            kkt_residual: f64::INFINITY,
            status: SolveStatus::MaxIter,
            z,
        },
    };
    if sol.status != SolveStatus::KktOk {
        let feas = (0..nlp.total_cons())
            .map(|i| nlp.con_value(&sol.z, i).unwrap_or(f64::INFINITY))
            .fold(0.0f64, f64::max);
        if feas > opts.tol.max(1e-7) {
            sol.status = SolveStatus::Infeasible;
        }
    }
    Ok(sol)
}

/// Assemble the full multiplier vector: general multipliers plus bound
/// multipliers read off the stationarity residual at active bounds.
fn full_lambda(nlp: &Nlp, z: &[f64], lambda_gen: &[f64]) -> Vec<f64> {
    let n = nlp.n();
    let m = nlp.m();
    let mut full = vec![0.0; nlp.total_cons()];
    full[..m].copy_from_slice(lambda_gen);

    let mut grad_l = match nlp.obj_grad(z) {
        Ok(g) => g,
        Err(_) => return full,
    };
    for i in 0..m {
        if lambda_gen[i] != 0.0 {
            if let Ok(gc) = nlp.con_grad(z, i) {
                for j in 0..n {
                    grad_l[j] += lambda_gen[i] * gc[j];
                }
            }
        }
    }
    for j in 0..n {
        let w = (nlp.hi[j] - nlp.lo[j]).max(1e-12);
        let at_lo = z[j] - nlp.lo[j] <= 1e-7 * w;
        let at_hi = nlp.hi[j] - z[j] <= 1e-7 * w;
        if at_lo && grad_l[j] > 0.0 {
            full[m + j] = grad_l[j];
        } else if at_hi && grad_l[j] < 0.0 {
            full[m + n + j] = -grad_l[j];
        }
    }
    full
}

fn active_set(nlp: &Nlp, z: &[f64], act_tol: f64) -> Vec<usize> {
    (0..nlp.total_cons())
        .filter(|&i| nlp.con_value(z, i).map(|c| c >= -act_tol).unwrap_or(false))
        .collect()
}

/// Build the final solution: Newton-polish the active-set KKT system, then
/// fall back to the raw iterate if polishing fails or does not help.
fn finalize(
    nlp: &Nlp,
    z: &[f64],
    lambda_gen: &[f64],
    opts: &SolveOptions,
) -> Result<KktSolution, NlpError> {
    let raw = assemble(nlp, z.to_vec(), full_lambda(nlp, z, lambda_gen), opts)?;
    match newton_polish(nlp, z, lambda_gen, opts) {
        Some((pz, plambda)) => {
            let polished = assemble(nlp, pz, plambda, opts)?;
            if polished.kkt_residual <= raw.kkt_residual {
                Ok(polished)
            } else {
                Ok(raw)
            }
        }
        None => Ok(raw),
    }
}

fn assemble(
    nlp: &Nlp,
    z: Vec<f64>,
    lambda: Vec<f64>,
    opts: &SolveOptions,
) -> Result<KktSolution, NlpError> {
    let value = nlp.obj_value(&z)?;
    let residual = kkt_residual(nlp, &z, &lambda)?;
    let status = if residual <= opts.tol {
        SolveStatus::KktOk
    } else {
        SolveStatus::MaxIter
    };
    Ok(KktSolution {
        active_set: active_set(nlp, &z, opts.act_tol),
        z,
        value,
        lambda,
        kkt_residual: residual,
        status,
    })
}

/// Newton iterations on the active-set KKT equations. Active bounds fix
/// their coordinate; active general constraints contribute a multiplier
/// unknown. Constraints whose polished multiplier turns negative are dropped
/// and the polish retried.
fn newton_polish(
    nlp: &Nlp,
    z0: &[f64],
    lambda_gen: &[f64],
    opts: &SolveOptions,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = nlp.n();
    let m = nlp.m();
    let widths: Vec<f64> = (0..n).map(|j| (nlp.hi[j] - nlp.lo[j]).max(1e-12)).collect();

    let mut fixed_lo: Vec<bool> = (0..n).map(|j| z0[j] - nlp.lo[j] <= opts.act_tol).collect();
    let mut fixed_hi: Vec<bool> = (0..n)
        .map(|j| !fixed_lo[j] && nlp.hi[j] - z0[j] <= opts.act_tol)
        .collect();
    let mut active: Vec<usize> = (0..m)
        .filter(|&i| nlp.con_value(z0, i).map(|c| c >= -opts.act_tol).unwrap_or(false))
        .collect();
    // Keep a maximal linearly independent subset of the active gradients
    // (duplicated or dependent rows make the KKT system singular; the
    // surviving rows' multipliers absorb the dropped ones).
    active = independent_subset(nlp, z0, &active);

    'rounds: for _round in 0..4 {
        let mut z = z0.to_vec();
        for j in 0..n {
            if fixed_lo[j] {
                z[j] = nlp.lo[j];
            } else if fixed_hi[j] {
                z[j] = nlp.hi[j];
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| !fixed_lo[j] && !fixed_hi[j]).collect();
        let nf = free.len();
        let na = active.len();
        if na > nf {
            return None;
        }
        let mut lam: Vec<f64> = active.iter().map(|&i| lambda_gen[i].max(0.0)).collect();

        for _it in 0..12 {
            let grad_f = nlp.obj_grad(&z).ok()?;
            let mut hess = nlp.objective.eval_hess(nlp.vars_at(&z), nlp.decision).ok()?;
            let mut jac: Vec<Vec<f64>> = Vec::with_capacity(na);
            let mut cvals: Vec<f64> = Vec::with_capacity(na);
            let mut grad_l = grad_f.clone();
            for (t, &i) in active.iter().enumerate() {
                let gc = nlp.con_grad(&z, i).ok()?;
                let hc = nlp.constraints[i].eval_hess(nlp.vars_at(&z), nlp.decision).ok()?;
                for r in 0..n {
                    grad_l[r] += lam[t] * gc[r];
                    for s in 0..n {
                        hess[(r, s)] += lam[t] * hc[(r, s)];
                    }
                }
                cvals.push(nlp.con_value(&z, i).ok()?);
                jac.push(gc);
            }

            let dim = nf + na;
            if dim == 0 {
                break;
            }
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            for (r, &jr) in free.iter().enumerate() {
                for (c, &jc) in free.iter().enumerate() {
                    a[(r, c)] = hess[(jr, jc)];
                }
                for (t, g) in jac.iter().enumerate() {
                    a[(r, nf + t)] = g[jr];
                }
                rhs[r] = -grad_l[jr];
            }
            for (t, g) in jac.iter().enumerate() {
                for (c, &jc) in free.iter().enumerate() {
                    a[(nf + t, c)] = g[jc];
                }
                rhs[nf + t] = -cvals[t];
            }

            let lu = a.lu();
            let step = lu.solve(&rhs)?;
            for (r, &jr) in free.iter().enumerate() {
                if step[r].abs() > 0.5 * widths[jr] {
                    return None;
                }
            }
            for (r, &jr) in free.iter().enumerate() {
                z[jr] += step[r];
            }
            for t in 0..na {
                lam[t] += step[nf + t];
            }
            if step.amax() < 1e-13 {
                break;
            }
        }

        // Leaving the box or negative multipliers mean the guessed active set
        // was wrong; correct it once per round.
        for j in 0..n {
            if z[j] < nlp.lo[j] - opts.act_tol || z[j] > nlp.hi[j] + opts.act_tol {
                return None;
            }
        }
        if let Some(worst) = lam
            .iter()
            .enumerate()
            .filter(|(_, &l)| l < -1e-10)
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(t, _)| t)
        {
            active.remove(worst);
            continue 'rounds;
        }

        // Bound multipliers with the wrong sign release their bound.
        let mut grad_l = nlp.obj_grad(&z).ok()?;
        for (t, &i) in active.iter().enumerate() {
            let gc = nlp.con_grad(&z, i).ok()?;
            for r in 0..n {
                grad_l[r] += lam[t] * gc[r];
            }
        }
        let mut released = false;
        for j in 0..n {
            if fixed_lo[j] && grad_l[j] < -1e-10 {
                fixed_lo[j] = false;
                released = true;
            } else if fixed_hi[j] && grad_l[j] > 1e-10 {
                fixed_hi[j] = false;
                released = true;
            }
        }
        if released {
            continue 'rounds;
        }

        let mut full = vec![0.0; nlp.total_cons()];
        for (t, &i) in active.iter().enumerate() {
            full[i] = lam[t].max(0.0);
        }
        for j in 0..n {
            if fixed_lo[j] {
                full[m + j] = grad_l[j].max(0.0);
            } else if fixed_hi[j] {
                full[m + n + j] = (-grad_l[j]).max(0.0);
            }
        }
        return Some((z, full));
    }
    None
}

/// Greedy Gram-Schmidt selection of active constraints with linearly
/// independent gradients.
fn independent_subset(nlp: &Nlp, z: &[f64], active: &[usize]) -> Vec<usize> {
    let n = nlp.n();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for &i in active {
        let Ok(g) = nlp.con_grad(z, i) else { continue };
        let mut v = g.clone();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for j in 0..n {
                v[j] -= dot * b[j];
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        let gnorm = g.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 1e-10 * gnorm.max(1.0) {
            for t in v.iter_mut() {
                *t /= norm;
            }
            basis.push(v);
            kept.push(i);
        }
        if kept.len() == n {
            break;
        }
    }
    kept
}

/// Spectral projected gradient on the augmented Lagrangian
/// `F + (1/2rho) * sum(max(0, lambda_i + rho c_i)^2 - lambda_i^2)`.
fn spg_minimize_al(
    nlp: &Nlp,
    z: &mut Vec<f64>,
    lambda: &[f64],
    rho: f64,
    tol: f64,
    max_inner: usize,
) {
    let n = nlp.n();
    let m = nlp.m();

    let al_value = |zz: &[f64]| -> f64 {
        let f = match nlp.obj_value(zz) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let mut acc = f;
        for i in 0..m {
            let c = match nlp.con_value(zz, i) {
                Ok(v) => v,
                Err(_) => return f64::INFINITY,
            };
            let t = (lambda[i] + rho * c).max(0.0);
            acc += (t * t - lambda[i] * lambda[i]) / (2.0 * rho);
        }
        acc
    };
    let al_grad = |zz: &[f64]| -> Option<Vec<f64>> {
        let mut g = nlp.obj_grad(zz).ok()?;
        for i in 0..m {
            let c = nlp.con_value(zz, i).ok()?;
            let t = (lambda[i] + rho * c).max(0.0);
            if t > 0.0 {
                let gc = nlp.con_grad(zz, i).ok()?;
                for j in 0..n {
                    g[j] += t * gc[j];
                }
            }
        }
        Some(g)
    };

    let mut fz = al_value(z);
    if !fz.is_finite() {
        return;
    }
    let mut g = match al_grad(z) {
        Some(g) => g,
        None => return,
    };
    let mut alpha = {
        let gmax = g.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if gmax > 0.0 {
            (1.0 / gmax).clamp(1e-10, 1e10)
        } else {
            1.0
        }
    };
    let mut history = vec![fz];
    let mut best_f = fz;
    let mut flat_iters = 0usize;

    for _it in 0..max_inner {
        let mut d = vec![0.0; n];
        let mut dmax = 0.0f64;
        for j in 0..n {
            let target = (z[j] - alpha * g[j]).clamp(nlp.lo[j], nlp.hi[j]);
            d[j] = target - z[j];
            dmax = dmax.max(d[j].abs());
        }
        if dmax <= tol {
            return;
        }
        let gdot: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let f_ref = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut step = 1.0;
        let mut z_new;
        let mut f_new;
        let mut ok = false;
        loop {
            z_new = z.iter().zip(&d).map(|(a, b)| a + step * b).collect::<Vec<f64>>();
            f_new = al_value(&z_new);
            if f_new <= f_ref + 1e-4 * step * gdot {
                ok = true;
                break;
            }
            step *= 0.5;
            if step < 1e-11 {
                break;
            }
        }
        if !ok {
            return;
        }
        let g_new = match al_grad(&z_new) {
            Some(g) => g,
            None => return,
        };
        let mut sty = 0.0;
        let mut sts = 0.0;
        for j in 0..n {
            let s = z_new[j] - z[j];
            let yv = g_new[j] - g[j];
            sty += s * yv;
            sts += s * s;
        }
        alpha = if sty > 1e-16 { (sts / sty).clamp(1e-10, 1e10) } else { 1e10 };
        *z = z_new;
        fz = f_new;
        g = g_new;
        history.push(fz);
        if history.len() > 10 {
            history.remove(0);
        }
        if fz < best_f - 1e-14 * (1.0 + best_f.abs()) {
            best_f = fz;
            flat_iters = 0;
        } else {
            flat_iters += 1;
            if flat_iters >= 30 {
                return;
            }
        }
    }
}

/// Deterministic Latin-hypercube start points inside the box.
pub fn latin_hypercube(lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut idx: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        strata.push(idx);
    }
    (0..count)
        .map(|s| {
            (0..n)
                .map(|j| {
                    let w = hi[j] - lo[j];
                    lo[j] + w * (strata[j][s] as f64 + 0.5) / count as f64
                })
                .collect()
        })
        .collect()
}

/// Best local solve across seeded Latin-hypercube starts plus caller-provided
/// candidates. Deterministic: ties break to the lowest start index.
pub fn multistart_local(
    nlp: &Nlp,
    extra_starts: &[Vec<f64>],
    starts: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<KktSolution, NlpError> {
    assert!(starts >= 1);
    let mut points: Vec<Vec<f64>> = extra_starts.to_vec();
    points.extend(latin_hypercube(&nlp.lo, &nlp.hi, starts, seed));

    let mut best_ok: Option<KktSolution> = None;
    let mut best_any: Option<KktSolution> = None;
    for z0 in &points {
        let sol = match solve_local(nlp, z0, opts) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if sol.status == SolveStatus::KktOk {
            let better = best_ok
                .as_ref()
                .map(|b| sol.value < b.value - 1e-14)
                .unwrap_or(true);
            if better {
                best_ok = Some(sol.clone());
            }
        }
        let better_any = best_any
            .as_ref()
            .map(|b| sol.kkt_residual < b.kkt_residual)
            .unwrap_or(true);
        if better_any {
            best_any = Some(sol);
        }
    }
    best_ok
        .or(best_any)
        .ok_or_else(|| NlpError::Dimension("no start point could be evaluated".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn bound_constrained_linear() {
        // min 10 - x1 over [0, 6]: solution at the upper bound with a
        // positive bound multiplier.
        let nlp = Nlp {
            objective: parse("10 - x1").unwrap(),
            constraints: vec![],
            decision: VarKind::X,
            param: VarKind::P,
            lo: vec![0.0],
            hi: vec![6.0],
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        let sol = solve_local(&nlp, &[0.0], &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::KktOk);
        assert!((sol.z[0] - 6.0).abs() < 1e-8);
        assert!((sol.value - 4.0).abs() < 1e-8);
        // upper bound multiplier is index m + n + 0 = 0 + 1 + 0
        assert!(sol.lambda[1] > 0.9);
        assert!(sol.active_set.contains(&1));
    }

    #[test]
    fn mitsos_h_stationary_points() {
        // min x2 over [0,1] x [-1e3,1e3] s.t. -(x1 - 0)^2 - x2 <= 0 from
        // z0 = (0.5, 1): any KKT point is acceptable; the constraint must be
        // active and the value consistent with the hand enumeration
        // (value -0.25 at x = (0.5,-0.25) or -1 at (1,-1)).
        let g = parse("-(x1 - 0)^2 - x2").unwrap();
        let nlp = Nlp {
            objective: parse("x2").unwrap(),
            constraints: vec![g.clone()],
            decision: VarKind::X,
            param: VarKind::P,
            lo: vec![0.0, -1e3],
            hi: vec![1.0, 1e3],
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        let sol = solve_local(&nlp, &[0.5, 1.0], &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::KktOk, "residual {}", sol.kkt_residual);
        let cval = nlp.con_value(&sol.z, 0).unwrap();
        assert!(cval.abs() < 1e-6, "constraint not active: {cval}");
        let near = |v: f64, t: f64| (v - t).abs() < 1e-6;
        assert!(near(sol.value, -0.25) || near(sol.value, -1.0), "value {}", sol.value);
    }

    #[test]
    fn seidel_llp_closed_form() {
        // maximize g(x, y) = -y^2 + 2 y x1 - x2 over y in [-1,1] at
        // x = (0.5, 0): solved as min -g, maximizer y = 0.5, g value 0.25.
        let neg_g = parse("-(-y1^2 + 2*y1*x1 - x2)").unwrap();
        let nlp = Nlp {
            objective: neg_g,
            constraints: vec![],
            decision: VarKind::Y,
            param: VarKind::X,
            lo: vec![-1.0],
            hi: vec![1.0],
            fixed_x: vec![0.5, 0.0],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        let sol = solve_local(&nlp, &[0.0], &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::KktOk);
        assert!((sol.z[0] - 0.5).abs() < 1e-8);
        assert!((-sol.value - 0.25).abs() < 1e-8);
    }

    #[test]
    fn multistart_finds_better_basin() {
        // maximize (x1 - y)^2 over y in [-1, 1] at x1 = 0.5, as min of the
        // negation: two basins (y = -1 value 2.25, y = +1 value 0.25).
        let neg = parse("-(x1 - y1)^2").unwrap();
        let nlp = Nlp {
            objective: neg,
            constraints: vec![],
            decision: VarKind::Y,
            param: VarKind::X,
            lo: vec![-1.0],
            hi: vec![1.0],
            fixed_x: vec![0.5],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        let sol = multistart_local(&nlp, &[], 8, 0, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::KktOk);
        assert!((sol.z[0] + 1.0).abs() < 1e-8);
        assert!((-sol.value - 2.25).abs() < 1e-8);
    }

    #[test]
    fn multistart_deterministic_and_stable_on_convex() {
        let q = parse("(x1 - 0.3)^2 + (x2 + 0.4)^2 + x1*x2").unwrap();
        let nlp = Nlp {
            objective: q,
            constraints: vec![parse("x1 + x2 - 1").unwrap()],
            decision: VarKind::X,
            param: VarKind::P,
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0],
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        let a = multistart_local(&nlp, &[], 1, 7, &opts()).unwrap();
        let b = multistart_local(&nlp, &[], 8, 7, &opts()).unwrap();
        assert!((a.value - b.value).abs() < 1e-8);
        let c = multistart_local(&nlp, &[], 8, 7, &opts()).unwrap();
        assert_eq!(b.z, c.z);
        assert_eq!(b.value, c.value);
    }

    #[test]
    fn multipliers_nonnegative_and_complementary() {
        let nlp = Nlp {
            objective: parse("x1^2 + x2^2").unwrap(),
            constraints: vec![parse("1 - x1 - x2").unwrap()],
            decision: VarKind::X,
            param: VarKind::P,
            lo: vec![-5.0, -5.0],
            hi: vec![5.0, 5.0],
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        let sol = solve_local(&nlp, &[0.0, 0.0], &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::KktOk);
        assert!((sol.z[0] - 0.5).abs() < 1e-7 && (sol.z[1] - 0.5).abs() < 1e-7);
        for i in 0..nlp.total_cons() {
            assert!(sol.lambda[i] >= 0.0);
            let c = nlp.con_value(&sol.z, i).unwrap();
            assert!((sol.lambda[i] * c).abs() < 1e-8);
            assert!(c <= 1e-8);
        }
        assert!(sol.lambda[0] > 0.5); // lambda = 1 for this problem
    }
}

#[cfg(test)]
mod qp_oracle_tests {
    use super::*;
    use crate::expr::Expr;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Qp {
        q: DMatrix<f64>, // positive definite
        lin: DVector<f64>,
        a: DMatrix<f64>, // general constraints a z <= b
        b: DVector<f64>,
        lo: f64,
        hi: f64,
    }

    fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Qp {
        let mraw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &mraw * mraw.transpose() + DMatrix::identity(n, n);
        let lin = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        // keep the origin feasible with margin
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.3..1.5));
        Qp { q, lin, a, b, lo: -2.0, hi: 2.0 }
    }

    fn qp_exprs(qp: &Qp) -> Nlp {
        let n = qp.q.nrows();
        let mut obj = Expr::constant(0.0);
        for i in 0..n {
            for j in 0..n {
                if qp.q[(i, j)] != 0.0 {
                    obj = obj
                        + Expr::constant(0.5 * qp.q[(i, j)]) * Expr::x(i + 1) * Expr::x(j + 1);
                }
            }
            obj = obj + Expr::constant(qp.lin[i]) * Expr::x(i + 1);
        }
        let cons = (0..qp.a.nrows())
            .map(|i| {
                let mut c = Expr::constant(-qp.b[i]);
                for j in 0..n {
                    c = c + Expr::constant(qp.a[(i, j)]) * Expr::x(j + 1);
                }
                c
            })
            .collect();
        Nlp {
            objective: obj,
            constraints: cons,
            decision: crate::expr::VarKind::X,
            param: crate::expr::VarKind::P,
            lo: vec![qp.lo; n],
            hi: vec![qp.hi; n],
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![],
        }
    }

    /// Exact QP oracle: enumerate all active sets over general constraints
    /// and bounds, solve each equality system, keep KKT-consistent feasible
    /// candidates, return the best value.
    fn enumerate_qp(qp: &Qp) -> f64 {
        let n = qp.q.nrows();
        let m = qp.a.nrows();
        let total = m + 2 * n;
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << total) {
            let active: Vec<usize> = (0..total).filter(|i| mask & (1 << i) != 0).collect();
            if active.len() > n {
                continue;
            }
            // bounds cannot be active on both sides
            let mut bad = false;
            for j in 0..n {
                if active.contains(&(m + j)) && active.contains(&(m + n + j)) {
                    bad = true;
                }
            }
            if bad {
                continue;
            }
            let na = active.len();
            let dim = n + na;
            let mut sys = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            for r in 0..n {
                for c in 0..n {
                    sys[(r, c)] = qp.q[(r, c)];
                }
                rhs[r] = -qp.lin[r];
            }
            for (t, &i) in active.iter().enumerate() {
                let (grad, cb): (Vec<f64>, f64) = if i < m {
                    ((0..n).map(|j| qp.a[(i, j)]).collect(), qp.b[i])
                } else if i < m + n {
                    let j = i - m;
                    ((0..n).map(|c| if c == j { -1.0 } else { 0.0 }).collect(), -qp.lo)
                } else {
                    let j = i - m - n;
                    ((0..n).map(|c| if c == j { 1.0 } else { 0.0 }).collect(), qp.hi)
                };
                for r in 0..n {
                    sys[(r, n + t)] = grad[r];
                    sys[(n + t, r)] = grad[r];
                }
                rhs[n + t] = cb;
            }
            let Some(sol) = sys.lu().solve(&rhs) else { continue };
            let z = sol.rows(0, n).into_owned();
            let lambdas = sol.rows(n, na);
            if lambdas.iter().any(|&l| l < -1e-9) {
                continue;
            }
            // primal feasibility
            let mut feas = true;
            for j in 0..n {
                if z[j] < qp.lo - 1e-9 || z[j] > qp.hi + 1e-9 {
                    feas = false;
                }
            }
            let az = &qp.a * &z;
            for i in 0..m {
                if az[i] > qp.b[i] + 1e-9 {
                    feas = false;
                }
            }
            if !feas {
                continue;
            }
            let val = 0.5 * (&z.transpose() * &qp.q * &z)[(0, 0)] + qp.lin.dot(&z);
            if val < best {
                best = val;
            }
        }
        best
    }

    #[test]
    fn solve_local_matches_active_set_enumeration_on_random_qps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..40 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(0..=3);
            let qp = random_qp(&mut rng, n, m);
            let truth = enumerate_qp(&qp);
            assert!(truth.is_finite(), "oracle failed on trial {trial}");
            let nlp = qp_exprs(&qp);
            let sol = multistart_local(&nlp, &[], 4, trial as u64, &SolveOptions::default())
                .unwrap();
            assert_eq!(sol.status, SolveStatus::KktOk, "trial {trial}");
            assert!(
                (sol.value - truth).abs() < 1e-6,
                "trial {trial}: solver {} vs oracle {}",
                sol.value,
                truth
            );
        }
    }
}
