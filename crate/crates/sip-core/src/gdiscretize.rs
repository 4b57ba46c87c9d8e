//! Generalized discretization: affine index-set cuts `(A, b)` whose index
//! point is `proj_Y(Ax + b)`, the smoothed projection used inside the
//! max-min cut search, and the driver realizations G-OPT, G-GREEDY,
//! G-2GREEDY, G-HYBRID.
//!
//! Certified bounds always evaluate the exact clamp (through the global
//! solver); the smooth approximation exists only so the inner minimizations
//! stay twice differentiable for the sensitivity formulas. The smooth clamp
//! used here is the two-sided softplus
//!
//! `p(v) = v + (softplus(t(yL - v)) - softplus(t(v - yU))) / t`
//!
//! whose range is exactly `(yL, yU)`, whose derivative lies in `(0, 1)`, and
//! which converges monotonically to `mid(yL, v, yU)` as `t` grows.
//!
//! The first-order cut at an incumbent `x^k` is `(J, y* - J x^k)` with `J`
//! the lower-level solution Jacobian from parametric sensitivity; when the
//! sensitivity hypotheses fail the zero-slope cut `(0, y*)` stands in, which
//! reduces the scheme to plain discretization.

use crate::bundle::{self, BundleParams, BundleStatus};
use crate::discretize::{DriveError, InnerCfg, MethodParams, ValueFnEval};
use crate::expr::{Expr, VarKind};
pub use crate::global_opt::GenCut;
use crate::global_opt::{self, GlobalOptions, GlobalResult};
use crate::instances::SipInstance;
use crate::nlp_local::{self, Nlp, SolveStatus};
use crate::sensitivity::{self, WeaklyActivePolicy};
use crate::trace::{IterRecord, SolveTrace, TerminalStatus};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ordered list of generalized cuts.
pub type GenCutSet = Vec<GenCut>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GMethod {
    GOpt,
    GGreedy,
    GTwoGreedy,
    GHybrid,
}

impl GMethod {
    pub fn name(&self) -> &'static str {
        match self {
            GMethod::GOpt => "g-opt",
            GMethod::GGreedy => "g-greedy",
            GMethod::GTwoGreedy => "g-2greedy",
            GMethod::GHybrid => "g-hybrid",
        }
    }
}

/// Smoothing parameter of the soft clamp.
pub const SMOOTH_T: f64 = 100.0;

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Componentwise smooth clamp of `v` into `(lo, hi)` with its diagonal
/// Jacobian entries.
pub fn smooth_proj(v: &[f64], lo: &[f64], hi: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out = Vec::with_capacity(v.len());
    let mut jac = Vec::with_capacity(v.len());
    for r in 0..v.len() {
        out.push(v[r] + (softplus(t * (lo[r] - v[r])) - softplus(t * (v[r] - hi[r]))) / t);
        // in (0,1) exactly; clamp away the cancellation at hard saturation
        let d = 1.0 - sigmoid(t * (lo[r] - v[r])) - sigmoid(t * (v[r] - hi[r]));
        jac.push(d.clamp(0.0, 1.0));
    }
    (out, jac)
}

/// Expression form of `softplus(z) = log(1 + exp(z))`, written through `abs`
/// so it stays finite for arbitrarily large `|z|`.
fn softplus_expr(z: Expr) -> Expr {
    let half = Expr::constant(0.5);
    let azs = z.clone().abs();
    half * (z + azs.clone()) + (Expr::constant(1.0) + azs.neg().exp()).log()
}

/// Expression form of the smooth clamp.
pub fn smooth_clamp_expr(v: Expr, lo: f64, hi: f64, t: f64) -> Expr {
    let tinv = Expr::constant(1.0 / t);
    let a = softplus_expr(Expr::constant(t) * (Expr::constant(lo) - v.clone()));
    let b = softplus_expr(Expr::constant(t) * (v.clone() - Expr::constant(hi)));
    v + tinv * (a - b)
}

/// Affine index expression `b_r + sum_s A_rs x_s` with entries either fixed
/// numbers or parameter variables starting at `p_base` (row-major A, then b).
fn cut_row_expr(dx: usize, dy: usize, row: usize, coeffs: Option<&GenCut>, p_base: usize) -> Expr {
    match coeffs {
        Some(cut) => {
            let mut v = Expr::constant(cut.b[row]);
            for (s, &a) in cut.a[row].iter().enumerate() {
                if a != 0.0 {
                    v = v + Expr::constant(a) * Expr::x(s + 1);
                }
            }
            v
        }
        None => {
            let mut v = Expr::p(p_base + dy * dx + row + 1);
            for s in 0..dx {
                v = v + Expr::p(p_base + row * dx + s + 1) * Expr::x(s + 1);
            }
            v
        }
    }
}

/// Constraint `g(x, smooth_proj(Ax + b)) <= 0` with the cut either fixed or
/// free (parameter block starting at `p_base`).
fn smooth_cut_constraint(
    instance: &SipInstance,
    coeffs: Option<&GenCut>,
    p_base: usize,
    t: f64,
) -> Expr {
    let dx = instance.dx;
    let dy = instance.dy;
    instance.constraint.substitute(&|kind, idx| {
        if kind != VarKind::Y {
            return None;
        }
        let row = idx - 1;
        let v = cut_row_expr(dx, dy, row, coeffs, p_base);
        Some(smooth_clamp_expr(v, instance.y_box.lo[row], instance.y_box.hi[row], t))
    })
}

fn flatten_cut(cut: &GenCut) -> Vec<f64> {
    let mut out: Vec<f64> = cut.a.iter().flatten().copied().collect();
    out.extend_from_slice(&cut.b);
    out
}

fn unflatten_cut(dx: usize, dy: usize, flat: &[f64]) -> GenCut {
    let a = (0..dy).map(|r| flat[r * dx..(r + 1) * dx].to_vec()).collect();
    let b = flat[dy * dx..dy * dx + dy].to_vec();
    GenCut { a, b }
}

/// Oracle over the smoothed inner minimization with some cuts fixed and some
/// free (free cuts encoded as parameter blocks).
struct GInnerOracle<'a> {
    instance: &'a SipInstance,
    fixed_cons: Vec<Expr>,
    free_cons: Vec<Expr>,
    free_blocks: usize,
    warm: Option<Vec<f64>>,
    cfg: InnerCfg,
    calls: usize,
}

impl<'a> GInnerOracle<'a> {
    fn new(instance: &'a SipInstance, fixed: &[GenCut], free_blocks: usize, cfg: InnerCfg) -> Self {
        let block = instance.dx * instance.dy + instance.dy;
        let fixed_cons = fixed
            .iter()
            .map(|c| smooth_cut_constraint(instance, Some(c), 0, SMOOTH_T))
            .collect();
        let free_cons = (0..free_blocks)
            .map(|i| smooth_cut_constraint(instance, None, i * block, SMOOTH_T))
            .collect();
        GInnerOracle { instance, fixed_cons, free_cons, free_blocks, warm: None, cfg, calls: 0 }
    }

    fn eval(&mut self, free_flat: &[f64]) -> ValueFnEval {
        let block = self.instance.dx * self.instance.dy + self.instance.dy;
        debug_assert_eq!(free_flat.len(), self.free_blocks * block);
        self.calls += 1;
        let mut constraints = self.fixed_cons.clone();
        constraints.extend(self.free_cons.iter().cloned());
        let nlp = Nlp {
            objective: self.instance.objective.clone(),
            constraints,
            decision: VarKind::X,
            param: VarKind::P,
            lo: self.instance.x_box.lo.clone(),
            hi: self.instance.x_box.hi.clone(),
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: free_flat.to_vec(),
        };
        let mut extras: Vec<Vec<f64>> = Vec::new();
        if let Some(w) = &self.warm {
            extras.push(w.clone());
        }
        extras.push(self.instance.x_box.midpoint());
        let seed = self
            .cfg
            .seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(self.calls as u64);
        let sol =
            match nlp_local::multistart_local(&nlp, &extras, self.cfg.starts, seed, &self.cfg.solve) {
                Ok(s) => s,
                Err(_) => return ValueFnEval { value: f64::NAN, subgrad: vec![], valid: false },
            };
        if sol.status != SolveStatus::KktOk {
            return ValueFnEval { value: f64::NAN, subgrad: vec![], valid: false };
        }
        self.warm = Some(sol.z.clone());
        match sensitivity::value_gradient(&nlp, &sol, self.cfg.policy, &self.cfg.sens) {
            Ok(grad) => ValueFnEval { value: sol.value, subgrad: grad, valid: true },
            Err(_) => ValueFnEval {
                value: sol.value,
                subgrad: vec![0.0; free_flat.len()],
                valid: false,
            },
        }
    }
}

fn g_inner_cfg(seed: u64) -> InnerCfg {
    InnerCfg { seed, policy: WeaklyActivePolicy::ExcludeAll, ..Default::default() }
}

/// Smoothed (or certified-exact) value function over a whole cut list.
pub fn phi_g(
    instance: &SipInstance,
    cuts: &[GenCut],
    smooth: bool,
    cfg: &InnerCfg,
) -> Result<ValueFnEval, DriveError> {
    if smooth {
        let mut oracle = GInnerOracle::new(instance, &[], cuts.len(), cfg.clone());
        let flat: Vec<f64> = cuts.iter().flat_map(flatten_cut).collect();
        Ok(oracle.eval(&flat))
    } else {
        let res = global_opt::solve_glbp(instance, cuts, &GlobalOptions::default())?;
        Ok(ValueFnEval { value: res.value, subgrad: vec![], valid: true })
    }
}

/// Smoothed (or certified-exact) value function with fixed cuts and one free
/// cut.
pub fn psi_g(
    instance: &SipInstance,
    fixed: &[GenCut],
    cut: &GenCut,
    smooth: bool,
    cfg: &InnerCfg,
) -> Result<ValueFnEval, DriveError> {
    if smooth {
        let mut oracle = GInnerOracle::new(instance, fixed, 1, cfg.clone());
        Ok(oracle.eval(&flatten_cut(cut)))
    } else {
        let mut all = fixed.to_vec();
        all.push(cut.clone());
        let res = global_opt::solve_glbp(instance, &all, &GlobalOptions::default())?;
        Ok(ValueFnEval { value: res.value, subgrad: vec![], valid: true })
    }
}

/// Globally solve the lower-level problem at `x` and extract the solution
/// Jacobian `J*_y(x)` when the sensitivity hypotheses hold.
pub fn llp_jacobian(
    instance: &SipInstance,
    x: &[f64],
    gopts: &GlobalOptions,
) -> Result<(Vec<f64>, f64, Option<DMatrix<f64>>), DriveError> {
    if let Some(sphere) = &instance.analytic {
        let (gval, ystar) = sphere.llp(x);
        let jac = sphere.jacobian(x);
        return Ok((ystar, gval, jac));
    }
    let llp = global_opt::solve_llp(instance, x, gopts)?;
    let nlp = Nlp {
        objective: instance.constraint.clone().neg(),
        constraints: vec![],
        decision: VarKind::Y,
        param: VarKind::X,
        lo: instance.y_box.lo.clone(),
        hi: instance.y_box.hi.clone(),
        fixed_x: x.to_vec(),
        fixed_y: vec![],
        fixed_p: vec![],
    };
    let sol = match nlp_local::solve_local(&nlp, &llp.arg, &Default::default()) {
        Ok(s) if s.status == SolveStatus::KktOk => s,
        _ => return Ok((llp.arg, llp.value, None)),
    };
    // The polished maximizer must still be the global one.
    if (sol.value - (-llp.value)).abs() > 1e-6 * (1.0 + llp.value.abs()) {
        return Ok((llp.arg, llp.value, None));
    }
    let jac = sensitivity::solution_jacobian(
        &nlp,
        &sol,
        WeaklyActivePolicy::ExcludeAll,
        &Default::default(),
    )
    .ok();
    Ok((sol.z.clone(), -sol.value, jac))
}

fn first_order_cut(x: &[f64], ystar: &[f64], jac: &Option<DMatrix<f64>>) -> Option<GenCut> {
    let jac = jac.as_ref()?;
    let dy = ystar.len();
    let dx = x.len();
    let mut a = Vec::with_capacity(dy);
    let mut b = Vec::with_capacity(dy);
    for r in 0..dy {
        let row: Vec<f64> = (0..dx).map(|s| jac[(r, s)]).collect();
        let dot: f64 = row.iter().zip(x).map(|(j, v)| j * v).sum();
        a.push(row);
        b.push(ystar[r] - dot);
    }
    let cut = GenCut { a, b };
    cut.is_finite().then_some(cut)
}

/// Box for the bundle's cut variables: slopes within +-10 width(Y)/width(X)
/// per coordinate pair, offsets within one Y-width beyond the Y box.
fn cut_var_box(instance: &SipInstance, blocks: usize) -> (Vec<f64>, Vec<f64>) {
    let dx = instance.dx;
    let dy = instance.dy;
    let mut lo = Vec::with_capacity(blocks * (dx * dy + dy));
    let mut hi = Vec::with_capacity(blocks * (dx * dy + dy));
    for _ in 0..blocks {
        for r in 0..dy {
            let wy = instance.y_box.width(r);
            for s in 0..dx {
                let wx = instance.x_box.width(s).max(1e-9);
                let amax = (10.0 * wy / wx).clamp(1.0, 1e6);
                lo.push(-amax);
                hi.push(amax);
            }
        }
        for r in 0..dy {
            let wy = instance.y_box.width(r);
            lo.push(instance.y_box.lo[r] - wy);
            hi.push(instance.y_box.hi[r] + wy);
        }
    }
    (lo, hi)
}

fn clamp_into(v: &mut [f64], lo: &[f64], hi: &[f64]) {
    for j in 0..v.len() {
        v[j] = v[j].clamp(lo[j], hi[j]);
    }
}

struct GMaxminOutcome {
    candidate: Vec<GenCut>,
    bundle_value: f64,
}

/// Prototype optimality-based generalized discretization driver.
pub fn run_gmethod(
    instance: &SipInstance,
    method: GMethod,
    params: &MethodParams,
) -> Result<SolveTrace, DriveError> {
    gdrive(instance, Some(method), params)
}

/// Generalized driver with the max-min and Jacobian machinery disabled:
/// every iteration appends the zero-slope cut, mirroring the
/// feasibility-based scheme through the generalized bounding problem.
pub fn run_gmethod_degraded(
    instance: &SipInstance,
    params: &MethodParams,
) -> Result<SolveTrace, DriveError> {
    gdrive(instance, None, params)
}

fn gdrive(
    instance: &SipInstance,
    method: Option<GMethod>,
    params: &MethodParams,
) -> Result<SolveTrace, DriveError> {
    let gopts = GlobalOptions::with_tol(params.tol_global);
    let mut cuts: Vec<GenCut> = Vec::new();
    let mut cache: Option<(Vec<GenCut>, GlobalResult)> = None;
    let mut iters: Vec<IterRecord> = Vec::new();
    let sensitivity_enabled = method.is_some() && !params.disable_maxmin;

    for k in 1..=params.iter_cap {
        if let Some(deadline) = params.deadline {
            if std::time::Instant::now() >= deadline {
                return Ok(SolveTrace { iters, status: TerminalStatus::IterLimit });
            }
        }

        let glbp = match cache.take() {
            Some((pts, res)) if pts == cuts => res,
            _ => global_opt::solve_glbp(instance, &cuts, &gopts)?,
        };
        let lbd = glbp.value;
        let x_k = glbp.arg.clone();
        let mut certified = glbp.certified();

        if let Some(vstar) = instance.vstar {
            let tol_eff = params.conv_tol.max(params.conv_tol * vstar.abs());
            if lbd >= vstar - tol_eff {
                iters.push(IterRecord {
                    k,
                    lbd,
                    x: x_k,
                    g_xk: None,
                    yhat: None,
                    maxmin: None,
                    accepted: false,
                    cutset_size: cuts.len(),
                    certified,
                });
                return Ok(SolveTrace { iters, status: TerminalStatus::ConvergedToVstar });
            }
        }

        let (ystar, g_k, jac) = if sensitivity_enabled {
            llp_jacobian(instance, &x_k, &gopts)?
        } else {
            let llp = global_opt::solve_llp(instance, &x_k, &gopts)?;
            (llp.arg, llp.value, None)
        };

        if g_k <= params.eps_f {
            iters.push(IterRecord {
                k,
                lbd,
                x: x_k,
                g_xk: Some(g_k),
                yhat: Some(ystar),
                maxmin: None,
                accepted: false,
                cutset_size: cuts.len(),
                certified,
            });
            return Ok(SolveTrace { iters, status: TerminalStatus::EpsFeasible });
        }

        // line-14 cut: first-order when the sensitivity hypotheses hold,
        // zero-slope otherwise.
        let fallback = first_order_cut(&x_k, &ystar, &jac)
            .unwrap_or_else(|| GenCut::zero_slope(instance.dx, &ystar));

        // G-2GREEDY appends the fallback cut before its max-min search.
        let mut base = cuts.clone();
        if method == Some(GMethod::GTwoGreedy) && sensitivity_enabled {
            base.push(fallback.clone());
        }

        let outcome = if sensitivity_enabled {
            gmaxmin_search(instance, method.unwrap(), k, &cuts, &base, &x_k, &ystar, &fallback, params)
        } else {
            None
        };

        let mut accepted = false;
        let mut maxmin_rec = None;
        let mut next_cuts = {
            let mut fb = base.clone();
            if method != Some(GMethod::GTwoGreedy) || !sensitivity_enabled {
                fb.push(fallback.clone());
            }
            fb
        };
        if let Some(out) = outcome {
            maxmin_rec = Some(out.bundle_value);
            if out.bundle_value >= lbd + params.delta {
                let cert = global_opt::solve_glbp(instance, &out.candidate, &gopts)?;
                certified &= cert.certified();
                maxmin_rec = Some(cert.value);
                if cert.value >= lbd + params.delta {
                    next_cuts = out.candidate.clone();
                    accepted = true;
                    cache = Some((out.candidate, cert));
                }
            }
        }
        cuts = next_cuts;

        iters.push(IterRecord {
            k,
            lbd,
            x: x_k,
            g_xk: Some(g_k),
            yhat: Some(ystar),
            maxmin: maxmin_rec,
            accepted,
            cutset_size: cuts.len(),
            certified,
        });
    }
    Ok(SolveTrace { iters, status: TerminalStatus::IterLimit })
}

#[allow(clippy::too_many_arguments)]
fn gmaxmin_search(
    instance: &SipInstance,
    method: GMethod,
    k: usize,
    cuts: &[GenCut],
    base: &[GenCut],
    x_k: &[f64],
    ystar: &[f64],
    fallback: &GenCut,
    params: &MethodParams,
) -> Option<GMaxminOutcome> {
    let dx = instance.dx;
    let dy = instance.dy;
    let block = dx * dy + dy;
    let fresh_search = match method {
        GMethod::GOpt => true,
        GMethod::GHybrid => k <= params.cap_k,
        _ => false,
    };

    let inner_cfg = g_inner_cfg(params.seed.wrapping_add((k as u64) << 16));
    let bundle_params =
        BundleParams { seed: params.seed.wrapping_add(k as u64), ..params.bundle.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(0xC2F7 + k as u64));

    let random_cut_init = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut a = GenCut {
            a: (0..dy).map(|_| (0..dx).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
            b: vec![0.0; dy],
        };
        for r in 0..dy {
            let ylo = instance.y_box.lo[r];
            let yhi = instance.y_box.hi[r];
            let dot: f64 = a.a[r].iter().zip(x_k).map(|(c, v)| c * v).sum();
            a.b[r] = 0.99 * ystar[r] + 0.005 * (ylo + yhi) - dot;
        }
        flatten_cut(&a)
    };

    if fresh_search {
        let blocks = cuts.len() + 1;
        let mut oracle = GInnerOracle::new(instance, &[], blocks, inner_cfg);
        oracle.warm = Some(x_k.to_vec());
        let (lo, hi) = cut_var_box(instance, blocks);
        let mut init: Vec<f64> = cuts.iter().flat_map(flatten_cut).collect();
        init.extend(flatten_cut(fallback));
        clamp_into(&mut init, &lo, &hi);
        let mut call = |z: &[f64]| {
            let e = oracle.eval(z);
            e.valid.then(|| (e.value, e.subgrad))
        };
        let mut res = bundle::maximize(&mut call, &init, &lo, &hi, &bundle_params);
        if res.status == BundleStatus::SingleIteration {
            // one random re-initialization of the free blocks
            let mut init2: Vec<f64> = Vec::with_capacity(blocks * block);
            for _ in 0..blocks {
                init2.extend(random_cut_init(&mut rng));
            }
            clamp_into(&mut init2, &lo, &hi);
            let retry = bundle::maximize(&mut call, &init2, &lo, &hi, &bundle_params);
            if retry.value > res.value {
                res = retry;
            }
        }
        if !res.value.is_finite() {
            return None;
        }
        let candidate: Vec<GenCut> = res.z.chunks(block).map(|c| unflatten_cut(dx, dy, c)).collect();
        Some(GMaxminOutcome { candidate, bundle_value: res.value })
    } else {
        let mut oracle = GInnerOracle::new(instance, base, 1, inner_cfg);
        oracle.warm = Some(x_k.to_vec());
        let (lo, hi) = cut_var_box(instance, 1);
        let mut init = match method {
            GMethod::GTwoGreedy => random_cut_init(&mut rng),
            _ => flatten_cut(fallback),
        };
        clamp_into(&mut init, &lo, &hi);
        let mut call = |z: &[f64]| {
            let e = oracle.eval(z);
            e.valid.then(|| (e.value, e.subgrad))
        };
        let mut res = bundle::maximize(&mut call, &init, &lo, &hi, &bundle_params);
        if res.status == BundleStatus::SingleIteration {
            let mut init2 = random_cut_init(&mut rng);
            clamp_into(&mut init2, &lo, &hi);
            let retry = bundle::maximize(&mut call, &init2, &lo, &hi, &bundle_params);
            if retry.value > res.value {
                res = retry;
            }
        }
        if !res.value.is_finite() {
            return None;
        }
        let mut candidate = base.to_vec();
        candidate.push(unflatten_cut(dx, dy, &res.z));
        Some(GMaxminOutcome { candidate, bundle_value: res.value })
    }
}
