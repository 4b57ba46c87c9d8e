//! Solve traces and serializable run reports.
//!
//! Every discretization driver produces a [`SolveTrace`]: one record per
//! outer iteration, plus a terminal status. The [`Report`] is the stable
//! JSON surface written by the command-line front end:
//!
//! ```json
//! {"config": {...},
//!  "trace": [{"k": 1, "lbd": 4.0, "x": [6.0], "g_xk": 32.4,
//!             "accepted": false, "maxmin": null, "certified": true}, ...],
//!  "summary": {"iterations_to_converge": 2, "final_lbd": 8.0,
//!              "vstar_gap": 0.0, "certified_all": true, "wall_ms": 12}}
//! ```

use serde::{Deserialize, Serialize};

/// One outer iteration of any discretization driver.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub k: usize,
    pub lbd: f64,
    pub x: Vec<f64>,
    /// Lower-level value at x^k; absent on the final iteration when the
    /// lower bound converged before the feasibility check ran.
    pub g_xk: Option<f64>,
    /// Lower-level maximizer at x^k.
    pub yhat: Option<Vec<f64>>,
    /// Certified value of the max-min candidate, when one was evaluated.
    pub maxmin: Option<f64>,
    /// Whether the max-min candidate replaced/extended the cut set.
    pub accepted: bool,
    /// Discretization points (or generalized cuts) after this iteration.
    pub cutset_size: usize,
    /// All global solves of this iteration were certified optimal.
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    ConvergedToVstar,
    EpsFeasible,
    IterLimit,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub iters: Vec<IterRecord>,
    pub status: TerminalStatus,
}

impl SolveTrace {
    pub fn final_lbd(&self) -> f64 {
        self.iters.last().map(|r| r.lbd).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn iterations(&self) -> usize {
        self.iters.len()
    }

    pub fn lbds(&self) -> Vec<f64> {
        self.iters.iter().map(|r| r.lbd).collect()
    }

    pub fn all_certified(&self) -> bool {
        self.iters.iter().all(|r| r.certified)
    }
}

/// Trace row in the stable report schema.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub lbd: f64,
    pub x: Vec<f64>,
    pub g_xk: Option<f64>,
    pub accepted: bool,
    pub maxmin: Option<f64>,
    pub certified: bool,
}

impl From<&IterRecord> for TraceRow {
    fn from(r: &IterRecord) -> Self {
        TraceRow {
            k: r.k,
            lbd: r.lbd,
            x: r.x.clone(),
            g_xk: r.g_xk,
            accepted: r.accepted,
            maxmin: r.maxmin,
            certified: r.certified,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub iterations_to_converge: Option<usize>,
    pub final_lbd: f64,
    pub vstar_gap: Option<f64>,
    pub certified_all: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub config: serde_json::Value,
    pub trace: Vec<TraceRow>,
    pub summary: Summary,
}

impl Report {
    pub fn build(
        config: serde_json::Value,
        trace: &SolveTrace,
        vstar: Option<f64>,
        wall_ms: u64,
    ) -> Report {
        let rows: Vec<TraceRow> = trace.iters.iter().map(TraceRow::from).collect();
        let final_lbd = trace.final_lbd();
        Report {
            config,
            trace: rows,
            summary: Summary {
                iterations_to_converge: (trace.status == TerminalStatus::ConvergedToVstar
                    || trace.status == TerminalStatus::EpsFeasible)
                    .then(|| trace.iterations()),
                final_lbd,
                vstar_gap: vstar.map(|v| (v - final_lbd).abs()),
                certified_all: trace.all_certified(),
                wall_ms,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
