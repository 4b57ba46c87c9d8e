//! Discretization drivers: the feasibility-based scheme and the
//! optimality-based realizations OPT, GREEDY, 2GREEDY, HYBRID.
//!
//! All drivers share the same outer loop: solve the discretized
//! lower-bounding problem globally, solve the lower-level problem globally at
//! the incumbent, stop when the incumbent is eps-feasible (or the lower bound
//! has reached the known optimum within the convergence tolerance), otherwise
//! grow the discretization. The feasibility-based variant always appends the
//! most-violating index point; the optimality-based variants first try a
//! max-min candidate computed by the bundle method over the value functions
//! `phi_k` / `psi_k`, accepting it only when a certified global solve of the
//! candidate's lower-bounding problem improves the bound by at least delta,
//! and falling back to the feasibility point otherwise.
//!
//! Inner minimizations are solved locally with warm starts plus a small
//! deterministic multistart; their value-function gradients come from the
//! parametric sensitivity formulas with the weakly-active policy that keeps
//! non-bound weakly active constraints.

use crate::bundle::{self, BundleParams};
use crate::expr::{Expr, VarKind};
use crate::global_opt::{self, GlobalError, GlobalOptions, GlobalResult};
use crate::instances::SipInstance;
use crate::nlp_local::{self, Nlp, SolveOptions, SolveStatus};
use crate::sensitivity::{self, SensOptions, WeaklyActivePolicy};
use crate::trace::{IterRecord, SolveTrace, TerminalStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Opt,
    Greedy,
    TwoGreedy,
    Hybrid,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Opt => "opt",
            Method::Greedy => "greedy",
            Method::TwoGreedy => "2greedy",
            Method::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodParams {
    pub eps_f: f64,
    pub delta: f64,
    /// HYBRID switches from fresh-discretization search to single-point
    /// search after this many iterations.
    pub cap_k: usize,
    pub iter_cap: usize,
    pub seed: u64,
    /// Tolerance of the certified global subproblem solves.
    pub tol_global: f64,
    /// Declare convergence when the lower bound is within this of the known
    /// optimum.
    pub conv_tol: f64,
    /// Multistart width of the inner local solves.
    pub inner_starts: usize,
    pub bundle: BundleParams,
    /// Disable the max-min oracle entirely; the driver then degrades to the
    /// feasibility-based scheme point-for-point.
    pub disable_maxmin: bool,
    /// Wall-clock cutoff; exceeded means the run stops with `IterLimit`.
    pub deadline: Option<std::time::Instant>,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            eps_f: 1e-8,
            delta: 1e-8,
            cap_k: 3,
            iter_cap: 100,
            seed: 0,
            tol_global: 1e-6,
            conv_tol: 1e-3,
            inner_starts: 4,
            bundle: BundleParams::default(),
            disable_maxmin: false,
            deadline: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DriveError {
    #[error("global subproblem failed: {0}")]
    Global(#[from] GlobalError),
    #[error("inner solve failed: {0}")]
    Inner(#[from] nlp_local::NlpError),
}

/// Inner minimization value-function evaluation.
#[derive(Debug, Clone)]
pub struct ValueFnEval {
    pub value: f64,
    pub subgrad: Vec<f64>,
    pub valid: bool,
}

/// Configuration of the inner (local) solves behind `phi`/`psi`.
#[derive(Debug, Clone)]
pub struct InnerCfg {
    pub starts: usize,
    pub seed: u64,
    pub solve: SolveOptions,
    pub sens: SensOptions,
    pub policy: WeaklyActivePolicy,
}

impl Default for InnerCfg {
    fn default() -> Self {
        InnerCfg {
            starts: 4,
            seed: 0,
            solve: SolveOptions::default(),
            sens: SensOptions::default(),
            policy: WeaklyActivePolicy::IncludeNonBound,
        }
    }
}

/// Oracle over the inner minimization with some index points fixed and some
/// free (encoded as parameters of the NLP).
pub(crate) struct InnerOracle<'a> {
    instance: &'a SipInstance,
    fixed_cons: Vec<Expr>,
    free_cons: Vec<Expr>,
    free_blocks: usize,
    pub warm: Option<Vec<f64>>,
    cfg: InnerCfg,
    calls: usize,
}

impl<'a> InnerOracle<'a> {
    pub fn new(instance: &'a SipInstance, fixed: &[Vec<f64>], free_blocks: usize, cfg: InnerCfg) -> Self {
        let dy = instance.dy;
        let fixed_cons = fixed
            .iter()
            .map(|y| {
                instance.constraint.substitute(&|kind, idx| {
                    (kind == VarKind::Y).then(|| Expr::constant(y[idx - 1]))
                })
            })
            .collect();
        let free_cons = (0..free_blocks)
            .map(|i| {
                instance.constraint.substitute(&|kind, idx| {
                    (kind == VarKind::Y).then(|| Expr::p(i * dy + idx))
                })
            })
            .collect();
        InnerOracle { instance, fixed_cons, free_cons, free_blocks, warm: None, cfg, calls: 0 }
    }

    fn nlp(&self, free_flat: &[f64]) -> Nlp {
        let mut constraints = self.fixed_cons.clone();
        constraints.extend(self.free_cons.iter().cloned());
        Nlp {
            objective: self.instance.objective.clone(),
            constraints,
            decision: VarKind::X,
            param: VarKind::P,
            lo: self.instance.x_box.lo.clone(),
            hi: self.instance.x_box.hi.clone(),
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: free_flat.to_vec(),
        }
    }

    /// Solve the inner problem; gradient w.r.t. the free point block.
    pub fn eval(&mut self, free_flat: &[f64]) -> ValueFnEval {
        debug_assert_eq!(free_flat.len(), self.free_blocks * self.instance.dy);
        self.calls += 1;
        let nlp = self.nlp(free_flat);
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
        let sol = match nlp_local::multistart_local(&nlp, &extras, self.cfg.starts, seed, &self.cfg.solve)
        {
            Ok(s) => s,
            Err(_) => {
                return ValueFnEval { value: f64::NAN, subgrad: vec![], valid: false };
            }
        };
        if sol.status != SolveStatus::KktOk {
            if std::env::var_os("SIP_DEBUG").is_some() {
                eprintln!(
                    "  [inner] p={free_flat:?} status={:?} residual={:.3e} value={:.6}",
                    sol.status, sol.kkt_residual, sol.value
                );
            }
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

/// Value function of the inner minimization over all of `ys` (every point is
/// a free block); subgradient is per-block `lambda_i * grad_y g(x*, y_i)`.
pub fn phi(instance: &SipInstance, ys: &[Vec<f64>], cfg: &InnerCfg) -> ValueFnEval {
    let mut oracle = InnerOracle::new(instance, &[], ys.len(), cfg.clone());
    let flat: Vec<f64> = ys.iter().flatten().copied().collect();
    oracle.eval(&flat)
}

/// Value function with `fixed` points held constant and one free point.
pub fn psi(instance: &SipInstance, fixed: &[Vec<f64>], y: &[f64], cfg: &InnerCfg) -> ValueFnEval {
    let mut oracle = InnerOracle::new(instance, fixed, 1, cfg.clone());
    oracle.eval(y)
}

/// The Blankenship–Falk loop: always append the most-violating index point.
pub fn run_bf(instance: &SipInstance, eps_f: f64, iter_cap: usize) -> Result<SolveTrace, DriveError> {
    let params = MethodParams { eps_f, iter_cap, ..Default::default() };
    run_bf_with(instance, &params)
}

pub fn run_bf_with(instance: &SipInstance, params: &MethodParams) -> Result<SolveTrace, DriveError> {
    drive(instance, None, params)
}

/// Prototype optimality-based discretization driver with the chosen max-min
/// realization.
pub fn run_method(
    instance: &SipInstance,
    method: Method,
    params: &MethodParams,
) -> Result<SolveTrace, DriveError> {
    drive(instance, Some(method), params)
}

struct MaxminOutcome {
    candidate: Vec<Vec<f64>>,
    bundle_value: f64,
}

fn drive(
    instance: &SipInstance,
    method: Option<Method>,
    params: &MethodParams,
) -> Result<SolveTrace, DriveError> {
    let gopts = GlobalOptions::with_tol(params.tol_global);
    let mut yd: Vec<Vec<f64>> = Vec::new();
    let mut cache: Option<(Vec<Vec<f64>>, GlobalResult)> = None;
    let mut iters: Vec<IterRecord> = Vec::new();
    let mut warm_x: Option<Vec<f64>>;

    for k in 1..=params.iter_cap {
        if let Some(deadline) = params.deadline {
            if std::time::Instant::now() >= deadline {
                return Ok(SolveTrace { iters, status: TerminalStatus::IterLimit });
            }
        }

        let lbp = match cache.take() {
            Some((pts, res)) if pts == yd => res,
            _ => global_opt::solve_lbp(instance, &yd, &gopts)?,
        };
        let lbd = lbp.value;
        let x_k = lbp.arg.clone();
        let mut certified = lbp.certified();
        warm_x = Some(x_k.clone());

        if let Some(vstar) = instance.vstar {
            // absolute-or-relative convergence of the lower bound
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
                    cutset_size: yd.len(),
                    certified,
                });
                return Ok(SolveTrace { iters, status: TerminalStatus::ConvergedToVstar });
            }
        }

        let llp = global_opt::solve_llp(instance, &x_k, &gopts)?;
        let g_k = llp.value;
        let yhat = llp.arg.clone();
        certified &= llp.certified();

        if g_k <= params.eps_f {
            iters.push(IterRecord {
                k,
                lbd,
                x: x_k,
                g_xk: Some(g_k),
                yhat: Some(yhat),
                maxmin: None,
                accepted: false,
                cutset_size: yd.len(),
                certified,
            });
            return Ok(SolveTrace { iters, status: TerminalStatus::EpsFeasible });
        }

        // 2GREEDY appends the feasibility point before its max-min search.
        let mut base = yd.clone();
        if method == Some(Method::TwoGreedy) && !params.disable_maxmin {
            base.push(yhat.clone());
        }

        let outcome = match (method, params.disable_maxmin) {
            (None, _) | (_, true) => None,
            (Some(m), false) => {
                maxmin_search(instance, m, k, &yd, &base, &yhat, &warm_x, params)
            }
        };

        let mut accepted = false;
        let mut maxmin_rec = None;
        let mut next_yd = {
            let mut fb = base.clone();
            if method != Some(Method::TwoGreedy) || params.disable_maxmin {
                fb.push(yhat.clone());
            }
            fb
        };
        if std::env::var_os("SIP_DEBUG").is_some() {
            eprintln!(
                "[drive k={k}] lbd={lbd:.9} g_k={g_k:.3e} outcome={:?}",
                outcome.as_ref().map(|o| (o.bundle_value, o.candidate.len()))
            );
        }
        if let Some(out) = outcome {
            maxmin_rec = Some(out.bundle_value);
            // The local bundle value upper-bounds the certified candidate
            // value, so a failing bundle value rejects without a global solve.
            if out.bundle_value >= lbd + params.delta {
                let cert = global_opt::solve_lbp(instance, &out.candidate, &gopts)?;
                certified &= cert.certified();
                maxmin_rec = Some(cert.value);
                if cert.value >= lbd + params.delta {
                    next_yd = out.candidate.clone();
                    accepted = true;
                    cache = Some((out.candidate, cert));
                }
            }
        }
        yd = next_yd;

        iters.push(IterRecord {
            k,
            lbd,
            x: x_k,
            g_xk: Some(g_k),
            yhat: Some(yhat),
            maxmin: maxmin_rec,
            accepted,
            cutset_size: yd.len(),
            certified,
        });
    }
    Ok(SolveTrace { iters, status: TerminalStatus::IterLimit })
}

fn maxmin_search(
    instance: &SipInstance,
    method: Method,
    k: usize,
    yd: &[Vec<f64>],
    base: &[Vec<f64>],
    yhat: &[f64],
    warm_x: &Option<Vec<f64>>,
    params: &MethodParams,
) -> Option<MaxminOutcome> {
    let dy = instance.dy;
    let fresh_search = match method {
        Method::Opt => true,
        Method::Hybrid => k <= params.cap_k,
        _ => false,
    };

    let inner_cfg = InnerCfg {
        starts: params.inner_starts,
        seed: params.seed.wrapping_add((k as u64) << 16),
        ..Default::default()
    };
    let bundle_params = BundleParams {
        seed: params.seed.wrapping_add(k as u64),
        ..params.bundle.clone()
    };

    if fresh_search {
        // Fresh discretization of |yd| + 1 blocks, initialized from the
        // previous points plus the feasibility point.
        let blocks = yd.len() + 1;
        let mut oracle = InnerOracle::new(instance, &[], blocks, inner_cfg);
        oracle.warm = warm_x.clone();
        let mut init: Vec<f64> = yd.iter().flatten().copied().collect();
        init.extend_from_slice(yhat);
        let (lo, hi) = tile_box(instance, blocks);
        let mut call = |z: &[f64]| {
            let e = oracle.eval(z);
            e.valid.then(|| (e.value, e.subgrad))
        };
        let res = bundle::maximize(&mut call, &init, &lo, &hi, &bundle_params);
        if !res.value.is_finite() {
            return None;
        }
        let candidate: Vec<Vec<f64>> =
            res.z.chunks(dy).map(|c| c.to_vec()).collect();
        Some(MaxminOutcome { candidate, bundle_value: res.value })
    } else {
        // Single-point search against the (possibly extended) base set.
        let init: Vec<f64> = match method {
            Method::TwoGreedy => {
                let ylo = &instance.y_box.lo;
                let yhi = &instance.y_box.hi;
                (0..dy)
                    .map(|r| {
                        (0.99 * yhat[r] + 0.005 * (ylo[r] + yhi[r])).clamp(ylo[r], yhi[r])
                    })
                    .collect()
            }
            _ => yhat.to_vec(),
        };
        let mut oracle = InnerOracle::new(instance, base, 1, inner_cfg);
        oracle.warm = warm_x.clone();
        let (lo, hi) = tile_box(instance, 1);
        let mut call = |z: &[f64]| {
            let e = oracle.eval(z);
            e.valid.then(|| (e.value, e.subgrad))
        };
        let res = bundle::maximize(&mut call, &init, &lo, &hi, &bundle_params);
        if !res.value.is_finite() {
            return None;
        }
        let mut candidate = base.to_vec();
        candidate.push(res.z.clone());
        Some(MaxminOutcome { candidate, bundle_value: res.value })
    }
}

fn tile_box(instance: &SipInstance, blocks: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::with_capacity(blocks * instance.dy);
    let mut hi = Vec::with_capacity(blocks * instance.dy);
    for _ in 0..blocks {
        lo.extend_from_slice(&instance.y_box.lo);
        hi.extend_from_slice(&instance.y_box.hi);
    }
    (lo, hi)
}
