//! Acceptance suite: one test per criterion, each printing a summary line.
//!
//! Criteria cover the reported lower-bound trajectory and iteration counts of
//! the feasibility-based scheme, the iteration-count bands of the
//! optimality-based and generalized methods, cube/sphere instance properties,
//! sensitivity-gradient correctness against finite differences, global-solver
//! certification against dense-grid oracles, degradation equivalence of the
//! drivers, scan fidelity, and lower-bound monotonicity.

use sip_core::discretize::{phi, run_bf_with, run_method, InnerCfg, Method, MethodParams};
use sip_core::expr::{Expr, VarKind};
use sip_core::gdiscretize::{run_gmethod, GMethod, GenCut};
use sip_core::global_opt::{solve_glbp, solve_lbp, solve_llp, GlobalOptions};
use sip_core::instances::{builtin, SipInstance};
use sip_core::nlp_local::{multistart_local, solve_local, Nlp, SolveOptions, SolveStatus};
use sip_core::sensitivity::{value_gradient, SensOptions, WeaklyActivePolicy};
use sip_core::trace::{SolveTrace, TerminalStatus};
use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn inst(name: &str) -> SipInstance {
    builtin(name, &BTreeMap::new()).expect("builtin")
}

fn hijazi3() -> SipInstance {
    let mut p = BTreeMap::new();
    p.insert("d_x".to_string(), 3i64);
    builtin("hijazi", &p).expect("hijazi")
}

fn default_params() -> MethodParams {
    MethodParams::default()
}

#[test]
fn criterion_01_table1_bf_trajectory_on_dp() {
    let started = Instant::now();
    let trace = run_bf_with(&inst("dp"), &MethodParams { iter_cap: 40, ..default_params() })
        .expect("bf run");
    let lbds = trace.lbds();
    let targets = [
        (1usize, 4.0),
        (5, 4.74),
        (10, 5.62),
        (15, 6.41),
        (20, 7.12),
        (25, 7.73),
        (28, 8.0),
    ];
    for (k, expected) in targets {
        let got = lbds[k - 1];
        assert!(
            (got - expected).abs() <= 0.05,
            "iteration {k}: LBD {got} vs expected {expected}"
        );
    }
    assert_eq!(trace.status, TerminalStatus::ConvergedToVstar);
    assert_eq!(trace.iterations(), 28, "convergence iteration");
    assert!((lbds[27] - 8.0).abs() <= 1e-3, "final bound {}", lbds[27]);
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "runtime {secs:.1}s exceeds 60s");
    println!("criterion 1 PASS: BF/DP trajectory matches at 7 checkpoints, converges at 28 in {secs:.2}s");
}

#[test]
fn criterion_02_bf_iteration_counts_exact() {
    let cases = [("dp", 28usize), ("seidel", 8), ("tsoukalas", 8)];
    for (name, expect) in cases {
        let trace = run_bf_with(&inst(name), &MethodParams { iter_cap: 40, ..default_params() })
            .expect("bf run");
        assert_eq!(trace.status, TerminalStatus::ConvergedToVstar, "{name}");
        assert_eq!(trace.iterations(), expect, "{name}: lbds {:?}", trace.lbds());
    }
    println!("criterion 2 PASS: BF counts 28 (dp), 8 (seidel), 8 (tsoukalas) exactly");
}

#[test]
fn criterion_03_optimality_method_bands() {
    let params = default_params();
    let methods = [Method::Greedy, Method::TwoGreedy, Method::Hybrid, Method::Opt];
    let mut counts = Vec::new();
    for m in methods {
        let t = run_method(&inst("dp"), m, &params).expect("dp run");
        assert_eq!(t.status, TerminalStatus::ConvergedToVstar, "dp {m:?}");
        assert!(t.iterations() <= 3, "dp {m:?}: {} iterations", t.iterations());
        counts.push(("dp", m.name(), t.iterations()));
    }
    for m in methods {
        let t = run_method(&inst("seidel"), m, &params).expect("seidel run");
        assert_eq!(t.status, TerminalStatus::ConvergedToVstar, "seidel {m:?}");
        assert!(t.iterations() <= 3, "seidel {m:?}: {} iterations", t.iterations());
        counts.push(("seidel", m.name(), t.iterations()));
    }
    let t = run_method(&inst("tsoukalas"), Method::Greedy, &params).expect("tsoukalas run");
    assert_eq!(t.status, TerminalStatus::ConvergedToVstar);
    assert!(t.iterations() <= 6, "tsoukalas greedy: {} iterations", t.iterations());
    counts.push(("tsoukalas", "greedy", t.iterations()));
    println!("criterion 3 PASS: optimality-method counts {counts:?}");
}

#[test]
fn criterion_04_generalized_method_bands() {
    let params = default_params();
    let cases = [("dp", 3usize), ("seidel", 4), ("tsoukalas", 3)];
    let mut counts = Vec::new();
    for (name, band) in cases {
        let t = run_gmethod(&inst(name), GMethod::GGreedy, &params).expect("g-greedy run");
        assert_eq!(t.status, TerminalStatus::ConvergedToVstar, "{name}");
        assert!(t.iterations() <= band, "{name}: {} iterations > {band}", t.iterations());
        counts.push((name, t.iterations()));
    }
    println!("criterion 4 PASS: G-GREEDY counts {counts:?}");
}

#[test]
fn criterion_05_cube_sphere_instance_properties() {
    let h = hijazi3();
    let sphere = h.analytic.clone().expect("sphere overrides");
    let gopts = GlobalOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // Any discretization grown by 7 random sphere points keeps some cube
    // vertex feasible, so the bound stays at -3.
    let mut yd: Vec<Vec<f64>> = Vec::new();
    for step in 0..7 {
        let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        yd.push(sphere.project(&dir));
        let r = solve_lbp(&h, &yd, &gopts).expect("lbp");
        assert!(
            (r.value + 3.0).abs() <= 1e-6,
            "after {} points: value {}",
            step + 1,
            r.value
        );
    }

    // A single identity cut reproduces the convex hull constraint: value
    // 1 - d_x = -2.
    let eye = GenCut {
        a: (0..3)
            .map(|r| (0..3).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect(),
        b: vec![0.0; 3],
    };
    let o = GlobalOptions { node_limit: 40_000, ..gopts };
    let g = solve_glbp(&h, &[eye], &o).expect("glbp");
    assert!((g.value + 2.0).abs() <= 1e-6, "identity-cut value {}", g.value);
    println!(
        "criterion 5 PASS: 7 point cuts keep the -3 vertex bound; identity cut gives {:.9}",
        g.value
    );
}

// --- criterion 6: sensitivity vs finite differences -------------------------

struct RandomQp {
    nlp: Nlp,
    n: usize,
    d: usize,
}

/// Convex QP with parameters entering the constraint right-hand sides:
/// min 1/2 z'Qz + q'z  s.t.  a_i'z <= b_i + p_i.
fn random_parametric_qp(rng: &mut ChaCha8Rng) -> RandomQp {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=3);
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = rng.gen_range(-1.0..1.0);
        }
    }
    // Q = M'M + I
    let mut obj = Expr::constant(0.0);
    for i in 0..n {
        for j in 0..n {
            let mut qij = if i == j { 1.0 } else { 0.0 };
            for (k, row) in q.iter().enumerate() {
                let _ = k;
                qij += row[i] * row[j];
            }
            obj = obj + Expr::constant(0.5 * qij) * Expr::x(i + 1) * Expr::x(j + 1);
        }
        obj = obj + Expr::constant(rng.gen_range(-2.0..2.0)) * Expr::x(i + 1);
    }
    let mut cons = Vec::new();
    for i in 0..m {
        let mut c = Expr::constant(-rng.gen_range(0.2..1.2)) - Expr::p(i + 1);
        for j in 0..n {
            c = c + Expr::constant(rng.gen_range(-1.0..1.0)) * Expr::x(j + 1);
        }
        cons.push(c);
    }
    RandomQp {
        nlp: Nlp {
            objective: obj,
            constraints: cons,
            decision: VarKind::X,
            param: VarKind::P,
            lo: vec![-3.0; n],
            hi: vec![3.0; n],
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![0.0; m],
        },
        n,
        d: m,
    }
}

fn qp_value_and_grad(qp: &RandomQp, p: &[f64], seed: u64) -> Option<(f64, Option<Vec<f64>>)> {
    let mut nlp = qp.nlp.clone();
    nlp.fixed_p = p.to_vec();
    let sol = multistart_local(&nlp, &[vec![0.0; qp.n]], 3, seed, &SolveOptions::default()).ok()?;
    if sol.status != SolveStatus::KktOk {
        return None;
    }
    let grad = value_gradient(
        &nlp,
        &sol,
        WeaklyActivePolicy::IncludeNonBound,
        &SensOptions::default(),
    )
    .ok();
    Some((sol.value, grad))
}

#[test]
fn criterion_06_sensitivity_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let mut qp_checked = 0usize;
    for trial in 0..100 {
        let qp = random_parametric_qp(&mut rng);
        let p0 = vec![0.0; qp.d];
        let Some((_, Some(grad))) = qp_value_and_grad(&qp, &p0, trial) else { continue };
        let mut all_ok = true;
        let mut fd = vec![0.0; qp.d];
        for j in 0..qp.d {
            let mut pp = p0.clone();
            pp[j] += h;
            let mut pm = p0.clone();
            pm[j] -= h;
            match (qp_value_and_grad(&qp, &pp, trial), qp_value_and_grad(&qp, &pm, trial)) {
                (Some((vp, Some(_))), Some((vm, Some(_)))) => fd[j] = (vp - vm) / (2.0 * h),
                _ => {
                    all_ok = false;
                    break;
                }
            }
        }
        if !all_ok {
            continue;
        }
        qp_checked += 1;
        for j in 0..qp.d {
            let denom = fd[j].abs().max(grad[j].abs());
            if denom < 1e-6 {
                continue; // both vanish (inactive parameter): they agree
            }
            let rel = (grad[j] - fd[j]).abs() / denom;
            assert!(
                rel < 1e-4,
                "trial {trial} param {j}: grad {} vs fd {}",
                grad[j],
                fd[j]
            );
        }
    }
    assert!(qp_checked >= 80, "only {qp_checked}/100 QPs were comparable");

    // 20 psi_1-type evaluations on the DP instance (parameter = the point y).
    let dp = inst("dp");
    let eval_at = |yv: f64| -> Option<(f64, Option<Vec<f64>>)> {
        let nlp = Nlp {
            objective: dp.objective.clone(),
            constraints: vec![dp.constraint.clone()],
            decision: VarKind::X,
            param: VarKind::Y,
            lo: dp.x_box.lo.clone(),
            hi: dp.x_box.hi.clone(),
            fixed_x: vec![],
            fixed_y: vec![yv],
            fixed_p: vec![],
        };
        let sol = solve_local(&nlp, &[1.0], &SolveOptions::default()).ok()?;
        if sol.status != SolveStatus::KktOk {
            return None;
        }
        let grad = value_gradient(
            &nlp,
            &sol,
            WeaklyActivePolicy::IncludeNonBound,
            &SensOptions::default(),
        )
        .ok();
        Some((sol.value, grad))
    };
    let mut psi_checked = 0usize;
    let mut rng2 = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..20 {
        let yv = rng2.gen_range(2.05..5.95);
        let (Some((_, Some(grad))), Some((vp, Some(_))), Some((vm, Some(_)))) =
            (eval_at(yv), eval_at(yv + h), eval_at(yv - h))
        else {
            continue;
        };
        let fd = (vp - vm) / (2.0 * h);
        let denom = fd.abs().max(grad[0].abs());
        if denom >= 1e-6 {
            let rel = (grad[0] - fd).abs() / denom;
            assert!(rel < 1e-4, "y={yv}: grad {} vs fd {}", grad[0], fd);
        }
        psi_checked += 1;
    }
    assert!(psi_checked >= 15, "only {psi_checked}/20 psi points were comparable");
    println!(
        "criterion 6 PASS: {qp_checked}/100 QPs and {psi_checked}/20 psi points match FD to 1e-4"
    );
}

// --- criterion 7: global-solver certification --------------------------------

/// Random small instance over x only (d <= 2): nonconvex quadratic objective
/// with eigenvalues bounded away from zero, quadratic constraints kept
/// feasible at the box midpoint.
fn random_small_instance(rng: &mut ChaCha8Rng) -> (SipInstance, usize) {
    let d = rng.gen_range(1..=2);
    let mut obj = Expr::constant(0.0);
    for i in 0..d {
        let mut diag = rng.gen_range(0.3..1.5);
        if rng.gen_bool(0.5) {
            diag = -diag;
        }
        obj = obj + Expr::constant(diag) * Expr::x(i + 1) * Expr::x(i + 1)
            + Expr::constant(rng.gen_range(-1.0..1.0)) * Expr::x(i + 1);
    }
    if d == 2 {
        obj = obj + Expr::constant(rng.gen_range(-0.4..0.4)) * Expr::x(1) * Expr::x(2);
    }
    let ncons = rng.gen_range(1..=2);
    let mut cons = Vec::new();
    for _ in 0..ncons {
        let mut c = Expr::constant(0.0);
        for i in 0..d {
            c = c + Expr::constant(rng.gen_range(-1.0..1.0)) * Expr::x(i + 1) * Expr::x(i + 1)
                + Expr::constant(rng.gen_range(-1.0..1.0)) * Expr::x(i + 1);
        }
        // feasible at the midpoint (origin) with margin
        cons.push(c - Expr::constant(rng.gen_range(0.2..1.0)));
    }
    // encode as a SipInstance with the constraints folded in through fixed
    // "discretization" indices: simpler to solve directly through solve_lbp
    // by treating each constraint as g(x, y_i) with a dummy y; instead build
    // the problem directly as an instance whose constraint switches on y1.
    // To stay on public surfaces, use one instance per constraint count with
    // g(x, y) = sum_i [y == i] c_i(x): selector via polynomial interpolation
    // is overkill -- use the single-constraint trick: g = max is not
    // expressible, so we put each constraint at integer grid points using a
    // Lagrange selector over y in {0, 1}.
    let g = if ncons == 1 {
        cons[0].clone()
    } else {
        // selector: (1 - y) c0 + y c1 with y in {0, 1}
        (Expr::constant(1.0) - Expr::y(1)) * cons[0].clone() + Expr::y(1) * cons[1].clone()
    };
    let inst = SipInstance {
        name: "random".to_string(),
        dx: d,
        dy: 1,
        x_box: sip_core::instances::BoxDomain::new(vec![-1.0; d], vec![1.0; d]),
        y_box: sip_core::instances::BoxDomain::new(vec![0.0], vec![1.0]),
        objective: obj,
        constraint: g,
        analytic: None,
        vstar: None,
        xstar: None,
    };
    (inst, ncons)
}

#[test]
fn criterion_07_certification_and_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gopts = GlobalOptions::default();
    for trial in 0..50 {
        let (instance, ncons) = random_small_instance(&mut rng);
        let yd: Vec<Vec<f64>> = (0..ncons).map(|i| vec![i as f64]).collect();
        let res = solve_lbp(&instance, &yd, &gopts).expect("bnb solve");

        // dense grid + polish oracle (1e6 points)
        let d = instance.dx;
        let steps = if d == 1 { 1_000_000usize } else { 1_000 };
        let mut best = f64::INFINITY;
        let mut best_x = vec![0.0; d];
        let feasible = |x: &[f64]| -> bool {
            yd.iter().all(|y| instance.eval_g(x, y).map(|v| v <= 1e-8).unwrap_or(false))
        };
        if d == 1 {
            for i in 0..=steps {
                let x = [-1.0 + 2.0 * i as f64 / steps as f64];
                if feasible(&x) {
                    let v = instance.eval_f(&x).unwrap();
                    if v < best {
                        best = v;
                        best_x = x.to_vec();
                    }
                }
            }
        } else {
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = [
                        -1.0 + 2.0 * i as f64 / steps as f64,
                        -1.0 + 2.0 * j as f64 / steps as f64,
                    ];
                    if feasible(&x) {
                        let v = instance.eval_f(&x).unwrap();
                        if v < best {
                            best = v;
                            best_x = x.to_vec();
                        }
                    }
                }
            }
        }
        assert!(best.is_finite(), "trial {trial}: grid found no feasible point");
        // polish the grid optimum
        let nlp = Nlp {
            objective: instance.objective.clone(),
            constraints: yd
                .iter()
                .map(|y| {
                    instance.constraint.substitute(&|kind, idx| {
                        (kind == VarKind::Y).then(|| Expr::constant(y[idx - 1]))
                    })
                })
                .collect(),
            decision: VarKind::X,
            param: VarKind::P,
            lo: instance.x_box.lo.clone(),
            hi: instance.x_box.hi.clone(),
            fixed_x: vec![],
            fixed_y: vec![],
            fixed_p: vec![],
        };
        if let Ok(sol) = solve_local(&nlp, &best_x, &SolveOptions::default()) {
            let feas = (0..nlp.total_cons())
                .map(|i| nlp.con_value(&sol.z, i).unwrap_or(f64::INFINITY))
                .fold(f64::NEG_INFINITY, f64::max);
            if sol.status == SolveStatus::KktOk && feas <= 1e-8 && sol.value < best {
                best = sol.value;
            }
        }
        assert!(
            (res.value - best).abs() <= 2e-6,
            "trial {trial}: bnb {} vs oracle {}",
            res.value,
            best
        );
    }

    // relaxation monotonicity on 200 random nested discretization pairs
    let names = ["dp", "seidel", "tsoukalas", "mitsos_h"];
    let mut rng2 = ChaCha8Rng::seed_from_u64(70);
    for pair in 0..200 {
        let instance = inst(names[pair % names.len()]);
        let rand_point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..instance.dy)
                .map(|r| rng.gen_range(instance.y_box.lo[r]..=instance.y_box.hi[r]))
                .collect()
        };
        let base: Vec<Vec<f64>> =
            (0..rng2.gen_range(0..=2)).map(|_| rand_point(&mut rng2)).collect();
        let mut bigger = base.clone();
        for _ in 0..rng2.gen_range(1..=2) {
            bigger.push(rand_point(&mut rng2));
        }
        let a = solve_lbp(&instance, &base, &gopts).expect("subset solve");
        let b = solve_lbp(&instance, &bigger, &gopts).expect("superset solve");
        assert!(
            a.value <= b.value + 2e-6,
            "pair {pair} on {}: subset {} > superset {}",
            instance.name,
            a.value,
            b.value
        );
    }
    println!("criterion 7 PASS: 50 grid-certified instances, 200 monotone discretization pairs");
}

#[test]
fn criterion_08_degradation_equivalence() {
    let cases: [(&str, usize); 5] =
        [("dp", 30), ("seidel", 10), ("tsoukalas", 10), ("mitsos_h", 8), ("hijazi", 10)];
    for (name, cap) in cases {
        let instance = if name == "hijazi" { hijazi3() } else { inst(name) };
        let params =
            MethodParams { iter_cap: cap, disable_maxmin: true, ..default_params() };
        let bf = run_bf_with(&instance, &params).expect("bf");
        for method in [Method::Greedy, Method::TwoGreedy, Method::Hybrid, Method::Opt] {
            let degraded = run_method(&instance, method, &params).expect("degraded");
            let a = bf.lbds();
            let b = degraded.lbds();
            assert_eq!(a.len(), b.len(), "{name} {method:?}: lengths {a:?} vs {b:?}");
            for (i, (x, y)) in a.iter().zip(&b).enumerate() {
                assert!(
                    (x - y).abs() <= 1e-9,
                    "{name} {method:?} iteration {}: {x} vs {y}",
                    i + 1
                );
            }
            assert_eq!(bf.status, degraded.status, "{name} {method:?}");
        }
    }
    println!("criterion 8 PASS: forced-failure traces equal BF point-for-point on all 5 builtins");
}

#[test]
fn criterion_09_scan_fidelity() {
    let gopts = GlobalOptions::default();

    // phi1 scan on DP: maximum within 1e-3 of 8, attained near y = 2.
    let dp = inst("dp");
    let grid = 101usize;
    let mut best = f64::NEG_INFINITY;
    let mut best_y = f64::NAN;
    for i in 0..grid {
        let y = 2.0 + 4.0 * i as f64 / (grid - 1) as f64;
        let v = solve_lbp(&dp, &[vec![y]], &gopts).expect("dp scan").value;
        if v > best {
            best = v;
            best_y = y;
        }
    }
    assert!((best - 8.0).abs() <= 1e-3, "phi1 max {best}");
    assert!(best_y <= 2.2, "phi1 max attained at y = {best_y}");

    // yx scan on Seidel: y*(x1) = x1 to 1e-4.
    let s = inst("seidel");
    for i in 0..grid {
        let x1 = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
        let r = solve_llp(&s, &[x1, 0.0], &gopts).expect("seidel scan");
        assert!((r.arg[0] - x1).abs() <= 1e-4, "y*({x1}) = {}", r.arg[0]);
    }

    // tsoukalas phi1 scan exhibits a jump > 1 between adjacent grid points.
    let t = inst("tsoukalas");
    let mut prev: Option<f64> = None;
    let mut max_jump = 0.0f64;
    for i in 0..grid {
        let y = -6.0 + 12.0 * i as f64 / (grid - 1) as f64;
        let v = solve_lbp(&t, &[vec![y]], &gopts).expect("tsoukalas scan").value;
        if let Some(p) = prev {
            max_jump = max_jump.max((v - p).abs());
        }
        prev = Some(v);
    }
    assert!(max_jump > 1.0, "largest adjacent jump {max_jump}");
    println!(
        "criterion 9 PASS: dp phi1 max {best:.6} near y={best_y:.2}; seidel y*=x1; tsoukalas jump {max_jump:.2}"
    );
}

#[test]
fn criterion_10_monotone_lower_bounds_on_all_traces() {
    let mut traces: Vec<(String, SolveTrace)> = Vec::new();
    let params = default_params();

    traces.push((
        "bf/dp".into(),
        run_bf_with(&inst("dp"), &MethodParams { iter_cap: 40, ..params.clone() }).unwrap(),
    ));
    traces.push(("bf/seidel".into(), run_bf_with(&inst("seidel"), &params).unwrap()));
    traces.push(("bf/tsoukalas".into(), run_bf_with(&inst("tsoukalas"), &params).unwrap()));
    for m in [Method::Greedy, Method::TwoGreedy, Method::Hybrid, Method::Opt] {
        for name in ["dp", "seidel"] {
            traces.push((
                format!("{}/{}", m.name(), name),
                run_method(&inst(name), m, &params).unwrap(),
            ));
        }
    }
    traces.push((
        "greedy/tsoukalas".into(),
        run_method(&inst("tsoukalas"), Method::Greedy, &params).unwrap(),
    ));
    for name in ["dp", "seidel", "tsoukalas"] {
        traces.push((
            format!("g-greedy/{}", name),
            run_gmethod(&inst(name), GMethod::GGreedy, &params).unwrap(),
        ));
    }

    let mut total = 0usize;
    for (label, trace) in &traces {
        let lbds = trace.lbds();
        for w in lbds.windows(2) {
            assert!(
                w[1] >= w[0] - 2e-6,
                "{label}: lower bound decreased {} -> {}",
                w[0],
                w[1]
            );
            total += 1;
        }
    }
    println!(
        "criterion 10 PASS: {} consecutive bound pairs monotone across {} traces",
        total,
        traces.len()
    );
}

// Sanity anchors used by several criteria: phi on known points (kept here so
// the acceptance target exercises the public oracle surface too).
#[test]
fn acceptance_support_value_function_anchors() {
    let dp = inst("dp");
    let cfg = InnerCfg::default();
    let a = phi(&dp, &[vec![2.0]], &cfg);
    assert!((a.value - 8.0).abs() < 1e-6);
    let b = phi(&dp, &[], &cfg);
    assert!((b.value - 4.0).abs() < 1e-6);
}
