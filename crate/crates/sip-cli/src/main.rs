//! `sipd` — batch driver for the semi-infinite programming solvers.
//!
//! Subcommands:
//! * `solve`   — run one instance/method pair and write a JSON report.
//! * `compare` — run an instance x method grid and write an iteration-count
//!   CSV table (cells show counts, or `ITER` / `TLE` / `ERR` markers).
//! * `scan`    — tabulate a value function or the lower-level solution
//!   mapping on a grid, as CSV for external plotting.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 iteration or
//! time limit.

use clap::{Args, Parser, Subcommand};
use sip_core::discretize::{run_bf_with, run_method, Method, MethodParams};
use sip_core::gdiscretize::{run_gmethod, GMethod};
use sip_core::global_opt::{solve_lbp, solve_llp, GlobalOptions};
use sip_core::instances::{builtin, load, SipInstance, BUILTIN_NAMES};
use sip_core::trace::{Report, SolveTrace, TerminalStatus};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[derive(Parser)]
#[command(name = "sipd", version, about = "Discretization methods for semi-infinite programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AnyMethod {
    Bf,
    Plain(Method),
    Gen(GMethod),
}

impl AnyMethod {
    fn parse(s: &str) -> Result<AnyMethod, String> {
        Ok(match s {
            "bf" => AnyMethod::Bf,
            "opt" => AnyMethod::Plain(Method::Opt),
            "greedy" => AnyMethod::Plain(Method::Greedy),
            "2greedy" => AnyMethod::Plain(Method::TwoGreedy),
            "hybrid" => AnyMethod::Plain(Method::Hybrid),
            "g-opt" => AnyMethod::Gen(GMethod::GOpt),
            "g-greedy" => AnyMethod::Gen(GMethod::GGreedy),
            "g-2greedy" => AnyMethod::Gen(GMethod::GTwoGreedy),
            "g-hybrid" => AnyMethod::Gen(GMethod::GHybrid),
            other => return Err(format!("unknown method `{other}`")),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            AnyMethod::Bf => "bf",
            AnyMethod::Plain(m) => m.name(),
            AnyMethod::Gen(m) => m.name(),
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Feasibility tolerance eps_f.
    #[arg(long = "eps-f", default_value_t = 1e-8)]
    eps_f: f64,
    /// Minimum sufficient bound increase delta.
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    /// Iterations of fresh-discretization search in the hybrid methods.
    #[arg(long = "K", default_value_t = 3)]
    cap_k: usize,
    #[arg(long = "iter-cap", default_value_t = 100)]
    iter_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Absolute tolerance of the certified global subproblem solves.
    #[arg(long = "tol", default_value_t = 1e-6)]
    tol_global: f64,
}

impl SolverArgs {
    fn params(&self, deadline: Option<Instant>) -> MethodParams {
        MethodParams {
            eps_f: self.eps_f,
            delta: self.delta,
            cap_k: self.cap_k,
            iter_cap: self.iter_cap,
            seed: self.seed,
            tol_global: self.tol_global,
            deadline,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one discretization method on one instance.
    Solve {
        /// Built-in instance name or instance file path.
        #[arg(long)]
        instance: String,
        /// Instance parameters, e.g. `--param d_x=3` (repeatable).
        #[arg(long = "param")]
        params: Vec<String>,
        /// bf | opt | greedy | 2greedy | hybrid | g-opt | g-greedy | g-2greedy | g-hybrid
        #[arg(long)]
        method: String,
        #[command(flatten)]
        solver: SolverArgs,
        /// Report file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an instances x methods grid and tabulate iteration counts.
    Compare {
        /// Comma-separated instance names/paths.
        #[arg(long)]
        instances: String,
        /// Comma-separated method names.
        #[arg(long)]
        methods: String,
        #[arg(long = "param")]
        params: Vec<String>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Per-cell wall-clock cap in seconds; exceeding it marks `TLE`.
        #[arg(long = "cell-timeout", default_value_t = 600.0)]
        cell_timeout: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate a value function or the lower-level solution mapping.
    Scan {
        #[arg(long)]
        instance: String,
        #[arg(long = "param")]
        params: Vec<String>,
        /// phi1 | psi | yx
        #[arg(long)]
        kind: String,
        /// Number of grid points.
        #[arg(long)]
        grid: usize,
        /// For `psi`: fixed discretization points `y1;y2;...`.
        /// For `yx`: fixed values of x2.. as `v2,v3,...` (default midpoint).
        #[arg(long)]
        fixed: Option<String>,
        #[arg(long = "tol", default_value_t = 1e-6)]
        tol_global: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_params(items: &[String]) -> Result<BTreeMap<String, i64>, String> {
    let mut map = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format!("bad --param `{item}`, expected key=value"))?;
        let value: i64 = v.parse().map_err(|_| format!("bad --param value `{v}`"))?;
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

fn resolve_instance(name: &str, params: &BTreeMap<String, i64>) -> Result<SipInstance, String> {
    if BUILTIN_NAMES.contains(&name) {
        return builtin(name, params).map_err(|e| e.to_string());
    }
    let path = Path::new(name);
    if path.exists() {
        return load(path).map_err(|e| e.to_string());
    }
    Err(format!("unknown instance `{name}` (not a builtin, not a file)"))
}

fn run_any(
    instance: &SipInstance,
    method: AnyMethod,
    params: &MethodParams,
) -> Result<SolveTrace, String> {
    match method {
        AnyMethod::Bf => run_bf_with(instance, params).map_err(|e| e.to_string()),
        AnyMethod::Plain(m) => run_method(instance, m, params).map_err(|e| e.to_string()),
        AnyMethod::Gen(m) => run_gmethod(instance, m, params).map_err(|e| e.to_string()),
    }
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| e.to_string()),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(|e| e.to_string())
        }
    }
}

fn cmd_solve(
    instance_name: &str,
    param_items: &[String],
    method_name: &str,
    solver: &SolverArgs,
    out: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    let params = parse_params(param_items)?;
    let instance = resolve_instance(instance_name, &params)?;
    let method = AnyMethod::parse(method_name)?;
    let mparams = solver.params(None);

    let started = Instant::now();
    let trace = run_any(&instance, method, &mparams)?;
    let wall_ms = started.elapsed().as_millis() as u64;

    let config = serde_json::json!({
        "instance": instance.name,
        "method": method.name(),
        "eps_f": solver.eps_f,
        "delta": solver.delta,
        "K": solver.cap_k,
        "iter_cap": solver.iter_cap,
        "seed": solver.seed,
        "tol_global": solver.tol_global,
        "format": "json",
    });
    let report = Report::build(config, &trace, instance.vstar, wall_ms);
    write_output(out, &(report.to_json() + "\n"))?;

    Ok(match trace.status {
        TerminalStatus::ConvergedToVstar | TerminalStatus::EpsFeasible => ExitCode::SUCCESS,
        TerminalStatus::IterLimit => ExitCode::from(2),
    })
}

fn cmd_compare(
    instances: &str,
    methods: &str,
    param_items: &[String],
    solver: &SolverArgs,
    cell_timeout: f64,
    out: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    let params = parse_params(param_items)?;
    let instance_names: Vec<&str> = instances.split(',').filter(|s| !s.is_empty()).collect();
    let method_names: Vec<&str> = methods.split(',').filter(|s| !s.is_empty()).collect();
    if instance_names.is_empty() {
        return Err("empty instances list".to_string());
    }
    if method_names.is_empty() {
        return Err("empty methods list".to_string());
    }
    let methods: Vec<AnyMethod> = method_names
        .iter()
        .map(|m| AnyMethod::parse(m))
        .collect::<Result<_, _>>()?;

    let mut csv = String::new();
    csv.push_str("instance");
    for m in &methods {
        csv.push(',');
        csv.push_str(m.name());
    }
    csv.push('\n');

    for iname in &instance_names {
        csv.push_str(iname);
        match resolve_instance(iname, &params) {
            Ok(instance) => {
                for &method in &methods {
                    let deadline = Instant::now() + Duration::from_secs_f64(cell_timeout);
                    let mparams = solver.params(Some(deadline));
                    let cell = match run_any(&instance, method, &mparams) {
                        Ok(trace) => match trace.status {
                            TerminalStatus::ConvergedToVstar | TerminalStatus::EpsFeasible => {
                                trace.iterations().to_string()
                            }
                            TerminalStatus::IterLimit => {
                                if Instant::now() >= deadline {
                                    "TLE".to_string()
                                } else {
                                    "ITER".to_string()
                                }
                            }
                        },
                        Err(_) => "ERR".to_string(),
                    };
                    csv.push(',');
                    csv.push_str(&cell);
                }
            }
            Err(_) => {
                for _ in &methods {
                    csv.push_str(",ERR");
                }
            }
        }
        csv.push('\n');
    }
    write_output(out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_float_list(s: &str, sep: char) -> Result<Vec<f64>, String> {
    s.split(sep)
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}

fn cmd_scan(
    instance_name: &str,
    param_items: &[String],
    kind: &str,
    grid: usize,
    fixed: &Option<String>,
    tol: f64,
    out: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    let params = parse_params(param_items)?;
    let instance = resolve_instance(instance_name, &params)?;
    if grid < 2 {
        return Err("grid must have at least 2 points".to_string());
    }
    let gopts = GlobalOptions::with_tol(tol);
    let mut csv = String::new();

    match kind {
        "phi1" | "psi" => {
            if instance.dy != 1 {
                return Err(format!(
                    "{kind} scan requires d_y = 1, instance has d_y = {}",
                    instance.dy
                ));
            }
            let fixed_pts: Vec<Vec<f64>> = match (kind, fixed) {
                ("psi", Some(list)) => {
                    parse_float_list(list, ';')?.into_iter().map(|v| vec![v]).collect()
                }
                ("psi", None) => Vec::new(),
                _ => Vec::new(),
            };
            csv.push_str(if kind == "phi1" { "y,phi1\n" } else { "y,psi\n" });
            let (lo, hi) = (instance.y_box.lo[0], instance.y_box.hi[0]);
            for i in 0..grid {
                let y = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
                let mut yd = fixed_pts.clone();
                yd.push(vec![y]);
                let value = solve_lbp(&instance, &yd, &gopts)
                    .map(|r| r.value)
                    .map_err(|e| format!("scan point y = {y}: {e}"))?;
                csv.push_str(&format!("{y},{value}\n"));
            }
        }
        "yx" => {
            let rest: Vec<f64> = match fixed {
                Some(list) => parse_float_list(list, ',')?,
                None => instance.x_box.midpoint()[1..].to_vec(),
            };
            if rest.len() != instance.dx - 1 {
                return Err(format!(
                    "yx scan over x1 needs {} fixed coordinates, got {}",
                    instance.dx - 1,
                    rest.len()
                ));
            }
            csv.push_str("x1");
            for r in 0..instance.dy {
                csv.push_str(&format!(",ystar{}", r + 1));
            }
            csv.push('\n');
            let (lo, hi) = (instance.x_box.lo[0], instance.x_box.hi[0]);
            for i in 0..grid {
                let x1 = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
                let mut x = vec![x1];
                x.extend_from_slice(&rest);
                let res = solve_llp(&instance, &x, &gopts)
                    .map_err(|e| format!("scan point x1 = {x1}: {e}"))?;
                csv.push_str(&format!("{x1}"));
                for v in &res.arg {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
            }
        }
        other => return Err(format!("unknown scan kind `{other}` (phi1 | psi | yx)")),
    }
    write_output(out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Solve { instance, params, method, solver, out } => {
            cmd_solve(instance, params, method, solver, out)
        }
        Cmd::Compare { instances, methods, params, solver, cell_timeout, out } => {
            cmd_compare(instances, methods, params, solver, *cell_timeout, out)
        }
        Cmd::Scan { instance, params, kind, grid, fixed, tol_global, out } => {
            cmd_scan(instance, params, kind, *grid, fixed, *tol_global, out)
        }
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
