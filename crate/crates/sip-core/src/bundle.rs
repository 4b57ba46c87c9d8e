//! Proximal bundle method for nonsmooth, nonconvex maximization over a box.
//!
//! The oracle returns a value and a (generalized) gradient, or signals
//! failure (e.g. when sensitivity hypotheses fail at the query point). Cuts
//! collected from oracle calls form a piecewise-linear model; nonconcavity is
//! handled by the subgradient locality measure, which shifts each cut so it
//! stays above the current center by at least a curvature term. The next
//! candidate maximizes the model minus a proximal penalty; the ratio of
//! achieved to predicted ascent decides serious vs. null steps and the
//! proximity weight update.
//!
//! Failed oracle calls are retried from slightly perturbed points; if the
//! very first evaluations cannot be completed, the whole run restarts from
//! random points a bounded number of times.

use crate::expr::{Expr, VarKind};
use crate::nlp_local::{self, Nlp, SolveOptions, SolveStatus};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Value/gradient oracle for maximization. `None` signals oracle failure.
pub type Oracle<'a> = dyn FnMut(&[f64]) -> Option<(f64, Vec<f64>)> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleStatus {
    Converged,
    MaxIter,
    OracleFailedRestartExhausted,
    /// Converged after one serious step or fewer; drivers treat this as a
    /// signal to restart from a different initialization.
    SingleIteration,
}

#[derive(Debug, Clone)]
pub struct BundleResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub status: BundleStatus,
}

#[derive(Debug, Clone)]
pub struct BundleParams {
    /// Total oracle-call budget (each call is an inner NLP solve).
    pub max_oracle_calls: usize,
    /// Predicted-ascent stopping threshold.
    pub eps: f64,
    /// Serious-step acceptance ratio.
    pub descent_ratio: f64,
    /// Random perturbation retries per failed oracle call.
    pub perturb_retries: usize,
    /// Whole-run random restarts when the initial point cannot be evaluated.
    pub restarts: usize,
    /// Perturbation radius as a fraction of the box width.
    pub perturb_radius: f64,
    /// Locality-measure curvature constant.
    pub gamma: f64,
    pub prox_init: f64,
    pub prox_min: f64,
    pub prox_max: f64,
    pub max_cuts: usize,
    pub seed: u64,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            max_oracle_calls: 50,
            eps: 1e-6,
            descent_ratio: 0.1,
            perturb_retries: 5,
            restarts: 5,
            perturb_radius: 1e-6,
            gamma: 0.5,
            prox_init: 1.0,
            prox_min: 1e-6,
            prox_max: 1e6,
            max_cuts: 30,
            seed: 0,
        }
    }
}

struct Cut {
    z: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Maximize the oracle over the box `[lo, hi]` starting from `z0`.
pub fn maximize(
    oracle: &mut Oracle<'_>,
    z0: &[f64],
    lo: &[f64],
    hi: &[f64],
    params: &BundleParams,
) -> BundleResult {
    let n = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut calls = 0usize;
    let widths: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| (b - a).max(0.0)).collect();

    let mut best: Option<(f64, Vec<f64>)> = None;

    let mut query = |z: &[f64],
                     calls: &mut usize,
                     rng: &mut ChaCha8Rng,
                     best: &mut Option<(f64, Vec<f64>)>|
     -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let mut zt: Vec<f64> =
            z.iter().enumerate().map(|(j, &v)| v.clamp(lo[j], hi[j])).collect();
        for attempt in 0..=params.perturb_retries {
            if *calls >= params.max_oracle_calls {
                return None;
            }
            *calls += 1;
            if let Some((f, g)) = oracle(&zt) {
                let improve = best.as_ref().map(|(bf, _)| f > *bf).unwrap_or(true);
                if improve {
                    *best = Some((f, zt.clone()));
                }
                return Some((zt, f, g));
            }
            if attempt == params.perturb_retries {
                break;
            }
            for j in 0..n {
                let r = params.perturb_radius * widths[j].max(1e-9);
                zt[j] = (z[j] + rng.gen_range(-1.0..1.0) * r).clamp(lo[j], hi[j]);
            }
        }
        None
    };

    // Establish an evaluable center, restarting randomly when necessary.
    let mut center;
    let mut restarts_used = 0usize;
    let mut start = z0.to_vec();
    loop {
        match query(&start, &mut calls, &mut rng, &mut best) {
            Some(c) => {
                center = c;
                break;
            }
            None => {
                restarts_used += 1;
                if restarts_used > params.restarts || calls >= params.max_oracle_calls {
                    return BundleResult {
                        z: best
                            .as_ref()
                            .map(|(_, z)| z.clone())
                            .unwrap_or_else(|| z0.to_vec()),
                        value: best.as_ref().map(|(f, _)| *f).unwrap_or(f64::NEG_INFINITY),
                        iterations: 0,
                        oracle_calls: calls,
                        status: BundleStatus::OracleFailedRestartExhausted,
                    };
                }
                start = (0..n)
                    .map(|j| {
                        if hi[j] > lo[j] {
                            rng.gen_range(lo[j]..=hi[j])
                        } else {
                            lo[j]
                        }
                    })
                    .collect();
            }
        }
    }

    let mut cuts: Vec<Cut> =
        vec![Cut { z: center.0.clone(), f: center.1, g: center.2.clone() }];
    let mut u = params.prox_init;
    let mut serious = 0usize;
    let mut iterations = 0usize;

    let status = loop {
        if calls >= params.max_oracle_calls {
            break BundleStatus::MaxIter;
        }
        iterations += 1;

        let (z_new, model_at_new) =
            match solve_prox_subproblem(&cuts, &center.0, center.1, u, lo, hi, params.gamma) {
                Some(v) => v,
                None => break BundleStatus::MaxIter,
            };
        let delta = (model_at_new - center.1).max(0.0);
        if delta <= params.eps * (1.0 + center.1.abs()) {
            break if serious <= 1 {
                BundleStatus::SingleIteration
            } else {
                BundleStatus::Converged
            };
        }

        let Some((zq, fq, gq)) = query(&z_new, &mut calls, &mut rng, &mut best) else {
            break if calls >= params.max_oracle_calls {
                BundleStatus::MaxIter
            } else {
                BundleStatus::OracleFailedRestartExhausted
            };
        };

        let achieved = fq - center.1;
        cuts.push(Cut { z: zq.clone(), f: fq, g: gq.clone() });
        if cuts.len() > params.max_cuts {
            cuts.remove(0);
        }

        if achieved >= params.descent_ratio * delta {
            // serious step
            center = (zq, fq, gq);
            serious += 1;
            if achieved >= 0.5 * delta {
                u = (0.5 * u).max(params.prox_min);
            }
        } else {
            u = (2.0 * u).min(params.prox_max);
        }
    };

    let (value, z) = best.unwrap_or((center.1, center.0));
    BundleResult {
        z,
        value,
        iterations: iterations.max(serious),
        oracle_calls: calls,
        status,
    }
}

/// Solve `max_z min_i cut_i(z) - (u/2)||z - c||^2` over the box via the
/// local NLP solver on the epigraph form. Returns the candidate and the
/// (downshifted) model value at it.
fn solve_prox_subproblem(
    cuts: &[Cut],
    center: &[f64],
    f_center: f64,
    u: f64,
    lo: &[f64],
    hi: &[f64],
    gamma: f64,
) -> Option<(Vec<f64>, f64)> {
    let n = lo.len();

    // Downshifted cut constants relative to the center: the cut through z_i
    // evaluated at z is f_center + beta_i + g_i . (z - c), with beta_i >= 0.
    let shifted: Vec<(f64, &[f64])> = cuts
        .iter()
        .map(|cut| {
            let at_center: f64 = cut.f
                + cut
                    .g
                    .iter()
                    .zip(center.iter().zip(cut.z.iter()))
                    .map(|(&g, (&c, &z))| g * (c - z))
                    .sum::<f64>();
            let alpha = at_center - f_center;
            let dist2: f64 =
                center.iter().zip(cut.z.iter()).map(|(&c, &z)| (c - z) * (c - z)).sum();
            let beta = alpha.max(gamma * dist2);
            (beta, cut.g.as_slice())
        })
        .collect();

    let model_at = |z: &[f64]| -> f64 {
        shifted
            .iter()
            .map(|(beta, g)| {
                f_center
                    + beta
                    + g.iter()
                        .zip(z.iter().zip(center.iter()))
                        .map(|(&gj, (&zj, &cj))| gj * (zj - cj))
                        .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    };

    // Epigraph NLP: minimize -w + (u/2)||z - c||^2 subject to
    // w <= f_center + beta_i + g_i . (z - c), z in the box.
    // Variables: x1..xn = z, x_{n+1} = w.
    let mut objective = Expr::x(n + 1).neg();
    for j in 0..n {
        let d = Expr::x(j + 1) - Expr::constant(center[j]);
        objective = objective + Expr::constant(0.5 * u) * d.clone() * d;
    }
    let mut constraints = Vec::with_capacity(shifted.len());
    let mut w_hi = f64::NEG_INFINITY;
    for (beta, g) in &shifted {
        let mut cut_expr = Expr::constant(f_center + beta);
        let mut reach = f_center + beta;
        for j in 0..n {
            if g[j] != 0.0 {
                cut_expr =
                    cut_expr + Expr::constant(g[j]) * (Expr::x(j + 1) - Expr::constant(center[j]));
            }
            reach += g[j].abs() * (hi[j] - lo[j]).max(0.0);
        }
        w_hi = w_hi.max(reach);
        constraints.push(Expr::x(n + 1) - cut_expr);
    }
    let w_lo = f_center - 1.0;
    let w_hi = w_hi.max(w_lo) + 1.0;

    let mut nlp_lo = lo.to_vec();
    let mut nlp_hi = hi.to_vec();
    nlp_lo.push(w_lo);
    nlp_hi.push(w_hi);
    let nlp = Nlp {
        objective,
        constraints,
        decision: VarKind::X,
        param: VarKind::P,
        lo: nlp_lo,
        hi: nlp_hi,
        fixed_x: vec![],
        fixed_y: vec![],
        fixed_p: vec![],
    };
    let mut z0 = center.to_vec();
    z0.push(model_at(center));
    let opts = SolveOptions { tol: 1e-9, ..Default::default() };
    let sol = nlp_local::solve_local(&nlp, &z0, &opts).ok()?;
    if sol.status == SolveStatus::Infeasible {
        return None;
    }
    let z_new: Vec<f64> = sol.z[..n].to_vec();
    let val = model_at(&z_new);
    Some((z_new, val))
}
