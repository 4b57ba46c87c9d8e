//! Certified global solver for the lower-level problem, the discretized
//! lower-bounding problem, and the generalized lower-bounding problem.
//!
//! The engine is an interval branch-and-bound: best-bound node selection,
//! widest-(relative)-dimension bisection, natural interval extensions for
//! bounding, and incumbent generation by local polish at node midpoints.
//! A node is discarded when its objective enclosure cannot beat the incumbent
//! by more than the tolerance or when some constraint enclosure is strictly
//! positive. The reported `gap` certifies `|value - global optimum| <= gap`
//! up to the incumbent feasibility tolerance.
//!
//! Generalized cuts `g(x, mid(yL, Ax + b, yU)) <= 0` are bounded natively:
//! the clamp is interval-monotone, so clamping the endpoints of `Ax + b`
//! gives its exact range, which then feeds the natural extension of `g`.
//! Local polish for such constraints rewrites the exact clamp through `abs`
//! (subgradient-free at the kinks by the `abs'(0) = 0` convention), with a
//! compass-search fallback when no expression form exists (sphere-projected
//! instances).

use crate::expr::{BinOp, Expr, Node, UnOp, VarBoxes, VarKind, Vars};
use crate::instances::{SipInstance, SphereAnalytic};
use crate::interval::Interval;
use crate::nlp_local::{self, Nlp, SolveOptions};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Affine generalized-discretization cut: index point `mid(yL, Ax + b, yU)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenCut {
    /// d_y rows, each of length d_x.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl GenCut {
    pub fn zero_slope(dx: usize, y: &[f64]) -> GenCut {
        GenCut { a: vec![vec![0.0; dx]; y.len()], b: y.to_vec() }
    }

    pub fn dy(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &bi)| bi + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.b.iter().all(|v| v.is_finite())
            && self.a.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalStatus {
    Optimal,
    GapLimit,
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct GlobalResult {
    pub value: f64,
    pub arg: Vec<f64>,
    pub gap: f64,
    pub nodes: usize,
    pub status: GlobalStatus,
}

impl GlobalResult {
    pub fn certified(&self) -> bool {
        self.status == GlobalStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub struct GlobalOptions {
    /// Absolute optimality tolerance.
    pub tol: f64,
    /// Feasibility tolerance for incumbents.
    pub feas_tol: f64,
    pub node_limit: usize,
    /// Polish at every k-th node midpoint.
    pub polish_period: usize,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions { tol: 1e-6, feas_tol: 1e-8, node_limit: 1_000_000, polish_period: 16 }
    }
}

impl GlobalOptions {
    pub fn with_tol(tol: f64) -> Self {
        GlobalOptions { tol, ..Default::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GlobalError {
    #[error("problem proven infeasible")]
    Infeasible,
    #[error("no feasible incumbent found within the node budget")]
    NoIncumbent,
    #[error("evaluation failed: {0}")]
    Eval(#[from] crate::expr::EvalError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

// --- constraint representations --------------------------------------------

enum BnbCon {
    /// Plain expression over the decision block (other families fixed).
    Plain(Expr),
    /// `g(x, mid(yL, Ax + b, yU)) <= 0`, decision block is x.
    MidCut { g: Expr, cut: GenCut, ylo: Vec<f64>, yhi: Vec<f64> },
    /// `g(x, proj_sphere(Ax + b)) <= 0` for the sphere index set.
    SphereCut { g: Expr, cut: GenCut, sphere: SphereAnalytic },
}

impl BnbCon {
    fn eval_point(&self, spec: &BnbSpec, z: &[f64]) -> Option<f64> {
        match self {
            BnbCon::Plain(e) => e.eval(spec.vars_at(z)).ok(),
            BnbCon::MidCut { g, cut, ylo, yhi } => {
                let v = cut.apply(z);
                let y: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(r, &t)| t.clamp(ylo[r], yhi[r]))
                    .collect();
                g.eval(Vars::new(z, &y, &[])).ok()
            }
            BnbCon::SphereCut { g, cut, sphere } => {
                let y = sphere.project(&cut.apply(z));
                g.eval(Vars::new(z, &y, &[])).ok()
            }
        }
    }

    fn eval_interval(&self, spec: &BnbSpec, boxes: &[Interval]) -> Option<Interval> {
        match self {
            BnbCon::Plain(e) => e.eval_interval(spec.boxes_at(boxes)).ok(),
            BnbCon::MidCut { g, cut, ylo, yhi } => {
                let y: Vec<Interval> = (0..cut.dy())
                    .map(|r| {
                        let mut v = Interval::point(cut.b[r]);
                        for (s, &a) in cut.a[r].iter().enumerate() {
                            v = v.add(boxes[s].mul(Interval::point(a)));
                        }
                        v.clamp_to(ylo[r], yhi[r])
                    })
                    .collect();
                g.eval_interval(VarBoxes::new(boxes, &y, &[])).ok()
            }
            BnbCon::SphereCut { g, cut, sphere } => {
                let v: Vec<Interval> = (0..cut.dy())
                    .map(|r| {
                        let mut acc = Interval::point(cut.b[r]);
                        for (s, &a) in cut.a[r].iter().enumerate() {
                            acc = acc.add(boxes[s].mul(Interval::point(a)));
                        }
                        acc
                    })
                    .collect();
                let y = sphere.project_interval(&v);
                g.eval_interval(VarBoxes::new(boxes, &y, &[])).ok()
            }
        }
    }

    /// Expression usable by the local polish, when one exists.
    fn polish_expr(&self) -> Option<Expr> {
        match self {
            BnbCon::Plain(e) => Some(e.clone()),
            BnbCon::MidCut { g, cut, ylo, yhi } => {
                let sub = g.substitute(&|kind, idx| {
                    if kind != VarKind::Y {
                        return None;
                    }
                    let r = idx - 1;
                    let mut v = Expr::constant(cut.b[r]);
                    for (s, &a) in cut.a[r].iter().enumerate() {
                        if a != 0.0 {
                            v = v + Expr::constant(a) * Expr::x(s + 1);
                        }
                    }
                    Some(mid_expr(v, ylo[r], yhi[r]))
                });
                Some(sub)
            }
            BnbCon::SphereCut { .. } => None,
        }
    }
}

/// Exact componentwise clamp written through `abs`:
/// `mid(lo, v, hi) = min(max(v, lo), hi)`.
pub fn mid_expr(v: Expr, lo: f64, hi: f64) -> Expr {
    let half = Expr::constant(0.5);
    let lo_e = Expr::constant(lo);
    let hi_e = Expr::constant(hi);
    let vmax = half.clone() * (v.clone() + lo_e.clone() + (v - lo_e).abs());
    half * (vmax.clone() + hi_e.clone() - (vmax - hi_e).abs())
}

struct BnbSpec {
    objective: Expr,
    constraints: Vec<BnbCon>,
    decision: VarKind,
    lo: Vec<f64>,
    hi: Vec<f64>,
    fixed_x: Vec<f64>,
    fixed_y: Vec<f64>,
    fixed_p: Vec<f64>,
    fixed_x_iv: Vec<Interval>,
    fixed_y_iv: Vec<Interval>,
    fixed_p_iv: Vec<Interval>,
}

impl BnbSpec {
    fn new(
        objective: Expr,
        constraints: Vec<BnbCon>,
        decision: VarKind,
        lo: Vec<f64>,
        hi: Vec<f64>,
        fixed_x: Vec<f64>,
        fixed_y: Vec<f64>,
        fixed_p: Vec<f64>,
    ) -> Self {
        let pt = |v: &Vec<f64>| v.iter().map(|&t| Interval::point(t)).collect();
        BnbSpec {
            fixed_x_iv: pt(&fixed_x),
            fixed_y_iv: pt(&fixed_y),
            fixed_p_iv: pt(&fixed_p),
            objective,
            constraints,
            decision,
            lo,
            hi,
            fixed_x,
            fixed_y,
            fixed_p,
        }
    }

    fn n(&self) -> usize {
        self.lo.len()
    }

    fn vars_at<'a>(&'a self, z: &'a [f64]) -> Vars<'a> {
        match self.decision {
            VarKind::X => Vars::new(z, &self.fixed_y, &self.fixed_p),
            VarKind::Y => Vars::new(&self.fixed_x, z, &self.fixed_p),
            VarKind::P => Vars::new(&self.fixed_x, &self.fixed_y, z),
        }
    }

    fn boxes_at<'a>(&'a self, b: &'a [Interval]) -> VarBoxes<'a> {
        match self.decision {
            VarKind::X => VarBoxes::new(b, &self.fixed_y_iv, &self.fixed_p_iv),
            VarKind::Y => VarBoxes::new(&self.fixed_x_iv, b, &self.fixed_p_iv),
            VarKind::P => VarBoxes::new(&self.fixed_x_iv, &self.fixed_y_iv, b),
        }
    }

    fn objective_value(&self, z: &[f64]) -> Option<f64> {
        self.objective.eval(self.vars_at(z)).ok()
    }

    fn max_violation(&self, z: &[f64]) -> Option<f64> {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let v = c.eval_point(self, z)?;
            worst = worst.max(v);
        }
        Some(worst)
    }

    fn polish_nlp(&self) -> Option<Nlp> {
        let mut cons = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            cons.push(c.polish_expr()?);
        }
        Some(Nlp {
            objective: self.objective.clone(),
            constraints: cons,
            decision: self.decision,
            param: VarKind::P,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            fixed_x: self.fixed_x.clone(),
            fixed_y: self.fixed_y.clone(),
            fixed_p: self.fixed_p.clone(),
        })
    }
}

// --- branch and bound -------------------------------------------------------

struct HeapNode {
    lb: f64,
    id: u64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.lb == other.lb && self.id == other.id
    }
}
impl Eq for HeapNode {}
impl Ord for HeapNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for best-bound-first, ties by
        // insertion order for determinism.
        other.lb.total_cmp(&self.lb).then_with(|| other.id.cmp(&self.id))
    }
}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Incumbent {
    value: f64,
    point: Vec<f64>,
}

fn try_point(spec: &BnbSpec, feas_tol: f64, z: &[f64], incumbent: &mut Option<Incumbent>) {
    if let Some(viol) = spec.max_violation(z) {
        if viol <= feas_tol {
            if let Some(val) = spec.objective_value(z) {
                let better = incumbent.as_ref().map(|i| val < i.value).unwrap_or(true);
                if better {
                    *incumbent = Some(Incumbent { value: val, point: z.to_vec() });
                }
            }
        }
    }
}

fn polish_from(
    spec: &BnbSpec,
    polish_nlp: &Option<Nlp>,
    opts: &GlobalOptions,
    z0: &[f64],
    incumbent: &mut Option<Incumbent>,
) {
    if let Some(nlp) = polish_nlp {
        if let Ok(sol) = nlp_local::solve_local(nlp, z0, &SolveOptions::default()) {
            try_point(spec, opts.feas_tol, &sol.z, incumbent);
            if spec.max_violation(&sol.z).map(|v| v > opts.feas_tol).unwrap_or(false) {
                let mut zz = sol.z.clone();
                compass_refine(spec, &mut zz, 200);
                try_point(spec, opts.feas_tol, &zz, incumbent);
            }
        }
    } else {
        let mut zz = z0.to_vec();
        compass_refine(spec, &mut zz, 400);
        try_point(spec, opts.feas_tol, &zz, incumbent);
    }
}

fn minimize(spec: &BnbSpec, opts: &GlobalOptions) -> Result<GlobalResult, GlobalError> {
    let n = spec.n();
    let mut root_lo = spec.lo.clone();
    let mut root_hi = spec.hi.clone();
    hc4_root_pass(spec, &mut root_lo, &mut root_hi)?;
    let orig_width: Vec<f64> = (0..n).map(|j| (spec.hi[j] - spec.lo[j]).max(1e-300)).collect();

    let polish_nlp = spec.polish_nlp();
    let mut incumbent: Option<Incumbent> = None;
    let mut nodes = 0usize;
    let mut next_id = 0u64;
    let mut heap: BinaryHeap<HeapNode> = BinaryHeap::new();
    let mut pruned_floor = f64::INFINITY;

    // Root node
    let root_boxes: Vec<Interval> =
        root_lo.iter().zip(&root_hi).map(|(&a, &b)| Interval::new(a, b)).collect();
    let mid: Vec<f64> = root_boxes.iter().map(|iv| iv.mid()).collect();
    try_point(spec, opts.feas_tol, &mid, &mut incumbent);
    polish_from(spec, &polish_nlp, opts, &mid, &mut incumbent);
    match node_bounds(spec, &root_boxes) {
        NodeBound::Infeasible => {
            return Err(GlobalError::Infeasible);
        }
        NodeBound::Lb(lb) => {
            heap.push(HeapNode { lb, id: next_id, lo: root_lo, hi: root_hi });
            next_id += 1;
        }
    }

    let final_gap_floor;
    let status;
    loop {
        let Some(node) = heap.pop() else {
            final_gap_floor = pruned_floor;
            status = GlobalStatus::Optimal;
            break;
        };
        if let Some(inc) = &incumbent {
            if node.lb >= inc.value - opts.tol {
                // best-bound order: every remaining node is also within tol
                final_gap_floor = node.lb;
                status = GlobalStatus::Optimal;
                break;
            }
        }
        nodes += 1;
        if nodes > opts.node_limit {
            final_gap_floor = node.lb;
            status = GlobalStatus::NodeLimit;
            break;
        }

        // Split the widest dimension relative to the original widths.
        let split = (0..n)
            .max_by(|&a, &b| {
                let wa = (node.hi[a] - node.lo[a]) / orig_width[a];
                let wb = (node.hi[b] - node.lo[b]) / orig_width[b];
                wa.total_cmp(&wb)
            })
            .unwrap();
        let cut = 0.5 * (node.lo[split] + node.hi[split]);

        for half in 0..2 {
            let mut lo = node.lo.clone();
            let mut hi = node.hi.clone();
            if half == 0 {
                hi[split] = cut;
            } else {
                lo[split] = cut;
            }
            let boxes: Vec<Interval> =
                lo.iter().zip(&hi).map(|(&a, &b)| Interval::new(a, b)).collect();
            match node_bounds(spec, &boxes) {
                NodeBound::Infeasible => continue,
                NodeBound::Lb(lb) => {
                    let lb = lb.max(node.lb);
                    let midc: Vec<f64> = boxes.iter().map(|iv| iv.mid()).collect();
                    try_point(spec, opts.feas_tol, &midc, &mut incumbent);
                    // Polish period escalates with tree size: midpoint
                    // sampling keeps the incumbent fresh on big trees at a
                    // fraction of the cost.
                    let period = if nodes <= 64 * opts.polish_period {
                        opts.polish_period
                    } else {
                        opts.polish_period * 32
                    };
                    if nodes % period == 0 {
                        polish_from(spec, &polish_nlp, opts, &midc, &mut incumbent);
                    }
                    if let Some(inc) = &incumbent {
                        if lb >= inc.value - opts.tol {
                            pruned_floor = pruned_floor.min(lb);
                            continue;
                        }
                    }
                    heap.push(HeapNode { lb, id: next_id, lo, hi });
                    next_id += 1;
                }
            }
        }
    }

    match incumbent {
        Some(inc) => {
            let gap = (inc.value - final_gap_floor.min(inc.value)).max(0.0);
            Ok(GlobalResult { value: inc.value, arg: inc.point, gap, nodes, status })
        }
        None => {
            if status == GlobalStatus::Optimal {
                // Every box was discarded and none by the bound test (no
                // incumbent existed), so the feasible set is empty.
                Err(GlobalError::Infeasible)
            } else {
                Err(GlobalError::NoIncumbent)
            }
        }
    }
}

enum NodeBound {
    Infeasible,
    Lb(f64),
}

fn node_bounds(spec: &BnbSpec, boxes: &[Interval]) -> NodeBound {
    for c in &spec.constraints {
        if let Some(iv) = c.eval_interval(spec, boxes) {
            if iv.lo > 0.0 {
                return NodeBound::Infeasible;
            }
        }
    }
    let lb = match spec.objective.eval_interval(spec.boxes_at(boxes)) {
        Ok(iv) => iv.lo,
        Err(_) => f64::NEG_INFINITY,
    };
    NodeBound::Lb(lb)
}

/// Derivative-free compass search on the exact penalized objective; used to
/// refine incumbents when constraints have no smooth expression form.
fn compass_refine(spec: &BnbSpec, z: &mut Vec<f64>, max_iter: usize) {
    let n = spec.n();
    let pen = |zz: &[f64]| -> f64 {
        let viol = match spec.max_violation(zz) {
            Some(v) => v,
            None => return f64::INFINITY,
        };
        let f = match spec.objective_value(zz) {
            Some(v) => v,
            None => return f64::INFINITY,
        };
        f + 1e8 * viol.max(0.0).powi(2)
    };
    let mut h: Vec<f64> = (0..n).map(|j| 0.25 * (spec.hi[j] - spec.lo[j])).collect();
    let mut fz = pen(z);
    for _ in 0..max_iter {
        let mut improved = false;
        for j in 0..n {
            for dir in [1.0, -1.0] {
                let mut zt = z.clone();
                zt[j] = (zt[j] + dir * h[j]).clamp(spec.lo[j], spec.hi[j]);
                let ft = pen(&zt);
                if ft < fz - 1e-15 {
                    *z = zt;
                    fz = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            let all_tiny = (0..n).all(|j| h[j] < 1e-10 * (spec.hi[j] - spec.lo[j]).max(1e-12));
            if all_tiny {
                return;
            }
            for hj in h.iter_mut() {
                *hj *= 0.5;
            }
        }
    }
}

// --- HC4 constraint propagation at the root --------------------------------

/// Forward-backward interval passes per plain constraint, narrowing the
/// decision box under `c <= 0`. Conservative: rules that cannot narrow
/// safely skip their subtree.
fn hc4_root_pass(spec: &BnbSpec, lo: &mut [f64], hi: &mut [f64]) -> Result<(), GlobalError> {
    for _ in 0..3 {
        let mut changed = false;
        for c in &spec.constraints {
            let BnbCon::Plain(e) = c else { continue };
            let mut boxes: Vec<Interval> =
                lo.iter().zip(hi.iter()).map(|(&a, &b)| Interval::new(a, b)).collect();
            match hc4_revise(spec, e.root(), Interval::new(f64::NEG_INFINITY, 0.0), &mut boxes) {
                Hc4::Empty => return Err(GlobalError::Infeasible),
                Hc4::Ok => {}
            }
            for j in 0..lo.len() {
                if boxes[j].lo > lo[j] + 1e-12 || boxes[j].hi < hi[j] - 1e-12 {
                    changed = true;
                }
                lo[j] = boxes[j].lo;
                hi[j] = boxes[j].hi;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(())
}

enum Hc4 {
    Ok,
    Empty,
}

fn hc4_forward(spec: &BnbSpec, node: &Node, boxes: &[Interval]) -> Option<Interval> {
    let e = Expr::from_node(std::sync::Arc::new(node.clone()));
    e.eval_interval(spec.boxes_at(boxes)).ok()
}

fn hc4_revise(spec: &BnbSpec, node: &Node, required: Interval, boxes: &mut Vec<Interval>) -> Hc4 {
    let Some(fwd) = hc4_forward(spec, node, boxes) else {
        return Hc4::Ok; // cannot reason over a domain error; no narrowing
    };
    let Some(narrowed) = fwd.intersect(required) else {
        return Hc4::Empty;
    };
    match node {
        Node::Const(_) => Hc4::Ok,
        Node::Var(kind, idx) => {
            if *kind == spec.decision {
                boxes[*idx - 1] = narrowed;
            }
            Hc4::Ok
        }
        Node::Un(op, a) => {
            let inv = match op {
                UnOp::Neg => Some(narrowed.neg()),
                UnOp::Exp => narrowed.intersect(Interval::new(0.0, f64::INFINITY)).map(|r| {
                    let lo = if r.lo <= 0.0 { f64::NEG_INFINITY } else { r.lo.ln() };
                    Interval::new(lo, r.hi.ln())
                }),
                UnOp::Log => Some(narrowed.exp()),
                UnOp::Sqrt => narrowed
                    .intersect(Interval::new(0.0, f64::INFINITY))
                    .map(|r| Interval::new(r.lo * r.lo, r.hi * r.hi)),
                UnOp::Abs => narrowed
                    .intersect(Interval::new(0.0, f64::INFINITY))
                    .map(|r| Interval::new(-r.hi, r.hi)),
            };
            match inv {
                Some(req) => hc4_revise(spec, a, widen(req), boxes),
                None => Hc4::Empty,
            }
        }
        Node::Bin(op, a, b) => {
            let fa = hc4_forward(spec, a, boxes);
            let fb = hc4_forward(spec, b, boxes);
            let (Some(fa), Some(fb)) = (fa, fb) else { return Hc4::Ok };
            match op {
                BinOp::Add => {
                    if let Hc4::Empty = hc4_revise(spec, a, widen(narrowed.sub(fb)), boxes) {
                        return Hc4::Empty;
                    }
                    hc4_revise(spec, b, widen(narrowed.sub(fa)), boxes)
                }
                BinOp::Sub => {
                    if let Hc4::Empty = hc4_revise(spec, a, widen(narrowed.add(fb)), boxes) {
                        return Hc4::Empty;
                    }
                    hc4_revise(spec, b, widen(fa.sub(narrowed)), boxes)
                }
                BinOp::Mul => {
                    if !fb.contains_zero() {
                        if let Hc4::Empty = hc4_revise(spec, a, widen(narrowed.div(fb)), boxes) {
                            return Hc4::Empty;
                        }
                    }
                    if !fa.contains_zero() {
                        return hc4_revise(spec, b, widen(narrowed.div(fa)), boxes);
                    }
                    Hc4::Ok
                }
                BinOp::Div => {
                    if let Hc4::Empty = hc4_revise(spec, a, widen(narrowed.mul(fb)), boxes) {
                        return Hc4::Empty;
                    }
                    if !narrowed.contains_zero() {
                        return hc4_revise(spec, b, widen(fa.div(narrowed)), boxes);
                    }
                    Hc4::Ok
                }
                BinOp::Pow => {
                    let Node::Const(exp) = b.as_ref() else { return Hc4::Ok };
                    let Some(nint) = crate::expr::as_integer_exponent(*exp) else {
                        return Hc4::Ok;
                    };
                    if nint <= 0 {
                        return Hc4::Ok;
                    }
                    let req = if nint % 2 == 1 {
                        Interval::new(nth_root(narrowed.lo, nint), nth_root(narrowed.hi, nint))
                    } else {
                        match narrowed.intersect(Interval::new(0.0, f64::INFINITY)) {
                            Some(r) => {
                                let m = nth_root(r.hi, nint);
                                Interval::new(-m, m)
                            }
                            None => return Hc4::Empty,
                        }
                    };
                    hc4_revise(spec, a, widen(req), boxes)
                }
            }
        }
    }
}

fn widen(iv: Interval) -> Interval {
    // Outward slack so propagation never cuts a marginal feasible point.
    let pad = 1e-12 + 1e-12 * iv.mag().min(1e12);
    Interval::new(
        if iv.lo.is_finite() { iv.lo - pad } else { iv.lo },
        if iv.hi.is_finite() { iv.hi + pad } else { iv.hi },
    )
}

fn nth_root(v: f64, n: i32) -> f64 {
    if !v.is_finite() {
        return v;
    }
    if n % 2 == 1 {
        v.signum() * v.abs().powf(1.0 / n as f64)
    } else {
        v.max(0.0).powf(1.0 / n as f64)
    }
}

// --- problem wrappers -------------------------------------------------------

/// Global solve of the lower-level problem `G(x) = max_{y in Y} g(x, y)`.
/// Returns the maximum value and a maximizer.
pub fn solve_llp(
    instance: &SipInstance,
    x: &[f64],
    opts: &GlobalOptions,
) -> Result<GlobalResult, GlobalError> {
    if x.len() != instance.dx {
        return Err(GlobalError::Invalid(format!(
            "x has length {}, expected {}",
            x.len(),
            instance.dx
        )));
    }
    if let Some(sphere) = &instance.analytic {
        let (g, ystar) = sphere.llp(x);
        return Ok(GlobalResult {
            value: g,
            arg: ystar,
            gap: 0.0,
            nodes: 0,
            status: GlobalStatus::Optimal,
        });
    }
    let spec = BnbSpec::new(
        instance.constraint.clone().neg(),
        vec![],
        VarKind::Y,
        instance.y_box.lo.clone(),
        instance.y_box.hi.clone(),
        x.to_vec(),
        vec![],
        vec![],
    );
    let res = minimize(&spec, opts)?;
    Ok(GlobalResult { value: -res.value, ..res })
}

/// Global solve of the discretized lower-bounding problem
/// `min f(x) s.t. g(x, y) <= 0 for y in Yd`.
pub fn solve_lbp(
    instance: &SipInstance,
    yd: &[Vec<f64>],
    opts: &GlobalOptions,
) -> Result<GlobalResult, GlobalError> {
    for (i, y) in yd.iter().enumerate() {
        if y.len() != instance.dy {
            return Err(GlobalError::Invalid(format!(
                "discretization point {i} has length {}, expected {}",
                y.len(),
                instance.dy
            )));
        }
        if !instance.y_box.contains(y, opts.feas_tol.max(1e-9)) {
            return Err(GlobalError::Invalid(format!(
                "discretization point {i} lies outside Y"
            )));
        }
    }
    let cons: Vec<BnbCon> = yd
        .iter()
        .map(|y| {
            BnbCon::Plain(instance.constraint.substitute(&|kind, idx| {
                (kind == VarKind::Y).then(|| Expr::constant(y[idx - 1]))
            }))
        })
        .collect();
    let spec = BnbSpec::new(
        instance.objective.clone(),
        cons,
        VarKind::X,
        instance.x_box.lo.clone(),
        instance.x_box.hi.clone(),
        vec![],
        vec![],
        vec![],
    );
    minimize(&spec, opts)
}

/// Global solve of the generalized lower-bounding problem
/// `min f(x) s.t. g(x, proj_Y(A^i x + b^i)) <= 0 for each cut`.
pub fn solve_glbp(
    instance: &SipInstance,
    cuts: &[GenCut],
    opts: &GlobalOptions,
) -> Result<GlobalResult, GlobalError> {
    for (i, cut) in cuts.iter().enumerate() {
        if cut.dy() != instance.dy || cut.a.iter().any(|r| r.len() != instance.dx) {
            return Err(GlobalError::Invalid(format!("cut {i} has wrong dimensions")));
        }
        if !cut.is_finite() {
            return Err(GlobalError::Invalid(format!("cut {i} has non-finite entries")));
        }
    }
    let cons: Vec<BnbCon> = cuts
        .iter()
        .map(|cut| match &instance.analytic {
            Some(sphere) => BnbCon::SphereCut {
                g: instance.constraint.clone(),
                cut: cut.clone(),
                sphere: sphere.clone(),
            },
            None => BnbCon::MidCut {
                g: instance.constraint.clone(),
                cut: cut.clone(),
                ylo: instance.y_box.lo.clone(),
                yhi: instance.y_box.hi.clone(),
            },
        })
        .collect();
    let spec = BnbSpec::new(
        instance.objective.clone(),
        cons,
        VarKind::X,
        instance.x_box.lo.clone(),
        instance.x_box.hi.clone(),
        vec![],
        vec![],
        vec![],
    );
    minimize(&spec, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::builtin;
    use std::collections::BTreeMap;

    fn inst(name: &str) -> crate::instances::SipInstance {
        builtin(name, &BTreeMap::new()).unwrap()
    }

    fn hijazi(dx: i64) -> crate::instances::SipInstance {
        let mut p = BTreeMap::new();
        p.insert("d_x".to_string(), dx);
        builtin("hijazi", &p).unwrap()
    }

    fn opts() -> GlobalOptions {
        GlobalOptions::default()
    }

    #[test]
    fn dp_lbp_with_empty_discretization() {
        let dp = inst("dp");
        let r = solve_lbp(&dp, &[], &opts()).unwrap();
        assert_eq!(r.status, GlobalStatus::Optimal);
        assert!((r.value - 4.0).abs() < 1e-6, "value {}", r.value);
        assert!((r.arg[0] - 6.0).abs() < 1e-5);
    }

    #[test]
    fn dp_lbp_with_optimal_single_point() {
        let dp = inst("dp");
        let r = solve_lbp(&dp, &[vec![2.0]], &opts()).unwrap();
        assert_eq!(r.status, GlobalStatus::Optimal);
        assert!((r.value - 8.0).abs() < 1e-6, "value {}", r.value);
    }

    #[test]
    fn dp_llp_at_optimum() {
        let dp = inst("dp");
        let r = solve_llp(&dp, &[2.0], &opts()).unwrap();
        assert!(r.value.abs() < 1e-6, "G(2) = {}", r.value);
        assert!((r.arg[0] - 2.0).abs() < 1e-3, "argmax {}", r.arg[0]);
    }

    #[test]
    fn seidel_llp_closed_form() {
        let s = inst("seidel");
        let r = solve_llp(&s, &[0.5, 0.0], &opts()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-6);
        assert!((r.arg[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn hijazi_llp_is_analytic() {
        let h = hijazi(3);
        let r = solve_llp(&h, &[1.0, 1.0, 1.0], &opts()).unwrap();
        let norm = 3.0f64.sqrt();
        let expect = 2.0f64.sqrt() * norm - 2.0;
        assert!((r.value - expect).abs() < 1e-12);
        assert_eq!(r.nodes, 0);
    }

    #[test]
    fn mitsos_h_lbp_solves_quickly_after_propagation() {
        let m = inst("mitsos_h");
        let r = solve_lbp(&m, &[vec![0.5]], &opts()).unwrap();
        assert_eq!(r.status, GlobalStatus::Optimal);
        // min x2 s.t. x2 >= -(x1 - 0.5)^2 over [0,1]: optimum -(0.5)^2 = -0.25
        assert!((r.value + 0.25).abs() < 1e-6, "value {}", r.value);
        assert!(r.nodes < 20_000, "nodes {}", r.nodes);
    }

    #[test]
    fn zero_slope_cuts_match_plain_discretization() {
        let dp = inst("dp");
        let y = vec![3.1];
        let lbp = solve_lbp(&dp, &[y.clone()], &opts()).unwrap();
        let glbp = solve_glbp(&dp, &[GenCut::zero_slope(1, &y)], &opts()).unwrap();
        assert!((lbp.value - glbp.value).abs() < 2e-6);

        let s = inst("seidel");
        let y = vec![0.4];
        let lbp = solve_lbp(&s, &[y.clone()], &opts()).unwrap();
        let glbp = solve_glbp(&s, &[GenCut::zero_slope(2, &y)], &opts()).unwrap();
        assert!((lbp.value - glbp.value).abs() < 2e-6);
    }

    #[test]
    fn seidel_identity_cut_reproduces_sip_optimum() {
        let s = inst("seidel");
        // cut y = x1 exactly reproduces y*(x), so G-LBP equals the SIP value
        let cut = GenCut { a: vec![vec![1.0, 0.0]], b: vec![0.0] };
        let r = solve_glbp(&s, &[cut], &opts()).unwrap();
        assert!((r.value + 1.0 / 6.0).abs() < 1e-5, "value {}", r.value);
    }

    #[test]
    fn hijazi_lbp_keeps_a_vertex() {
        let h = hijazi(3);
        let sphere = h.analytic.clone().unwrap();
        // single discretization point: the projection of one vertex
        let y = sphere.project(&[1.0, 1.0, 1.0]);
        let r = solve_lbp(&h, &[y], &opts()).unwrap();
        assert_eq!(r.status, GlobalStatus::Optimal);
        assert!((r.value + 3.0).abs() < 1e-6, "value {}", r.value);
    }

    #[test]
    fn hijazi_identity_cut_value() {
        let h = hijazi(3);
        let eye = GenCut {
            a: (0..3)
                .map(|r| (0..3).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
                .collect(),
            b: vec![0.0; 3],
        };
        let o = GlobalOptions { node_limit: 40_000, ..opts() };
        let r = solve_glbp(&h, &[eye], &o).unwrap();
        // optimum -2 on a whole sphere of minimizers: the incumbent value is
        // accurate even though interval bounds cannot certify the manifold
        assert!((r.value + 2.0).abs() < 1e-6, "value {}", r.value);
    }

    #[test]
    fn relaxation_monotonicity_smoke() {
        let dp = inst("dp");
        let y1 = vec![vec![2.5]];
        let y2 = vec![vec![2.5], vec![4.0]];
        let a = solve_lbp(&dp, &y1, &opts()).unwrap();
        let b = solve_lbp(&dp, &y2, &opts()).unwrap();
        assert!(a.value <= b.value + 1e-6);
    }

    #[test]
    fn infeasible_discretization_reported() {
        let text = r#"
            name = "infeas"
            dims.x = 1
            dims.y = 1
            box_x = [[1, 2]]
            box_y = [[0, 0]]
            objective = "x1"
            constraint = "x1^2 + 1 + y1"
        "#;
        let inst2 = crate::instances::load_str(text).unwrap();
        match solve_lbp(&inst2, &[vec![0.0]], &opts()) {
            Err(GlobalError::Infeasible) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}
