//! SIP test instances: the built-in library and a line-oriented file loader.
//!
//! An instance is `min f(x) over X s.t. g(x,y) <= 0 for all y in Y` with
//! compact boxes `X`, `Y`. One built-in (`hijazi`) has a sphere for `Y`;
//! rather than generalizing the solvers to non-box index sets, the instance
//! carries analytic overrides (closed-form lower-level solution and radial
//! projection) and the generic machinery never sees the sphere.

use crate::expr::{parse, Expr, VarKind, Vars};
use crate::interval::Interval;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Axis-aligned box with finite bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        BoxDomain { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.hi[j] - self.lo[j]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, v: &[f64], slack: f64) -> bool {
        v.len() == self.dim()
            && v.iter()
                .enumerate()
                .all(|(j, &t)| t >= self.lo[j] - slack && t <= self.hi[j] + slack)
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(j, &t)| t.clamp(self.lo[j], self.hi[j]))
            .collect()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| Interval::new(a, b))
            .collect()
    }

    fn validate(&self) -> Result<(), String> {
        for j in 0..self.dim() {
            if !self.lo[j].is_finite() || !self.hi[j].is_finite() {
                return Err(format!("box bound {j} is not finite"));
            }
            if self.lo[j] > self.hi[j] {
                return Err(format!(
                    "box lower bound {} exceeds upper bound {} in coordinate {}",
                    self.lo[j],
                    self.hi[j],
                    j + 1
                ));
            }
        }
        Ok(())
    }
}

/// Analytic overrides for the sphere index set `{y : ||y||^2 = r^2}`.
///
/// `g(x,y) = sum_i (x_i - y_i) y_i = x·y - r^2` on the sphere, so the
/// lower-level maximum and its argmax have closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereAnalytic {
    pub radius: f64,
}

impl SphereAnalytic {
    /// Global lower-level solve: `G(x) = r·||x|| - r^2`, maximizer `r·x/||x||`.
    pub fn llp(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let r = self.radius;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // any point of the sphere is optimal at x = 0; fix one
            let mut y = vec![0.0; x.len()];
            y[0] = r;
            return (-r * r, y);
        }
        let y: Vec<f64> = x.iter().map(|v| r * v / norm).collect();
        (r * norm - r * r, y)
    }

    /// Radial projection of an arbitrary vector onto the sphere.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let r = self.radius;
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut y = vec![0.0; v.len()];
            y[0] = r;
            return y;
        }
        v.iter().map(|t| r * t / norm).collect()
    }

    /// Interval enclosure of the radial projection over a box of `v`. When
    /// the box contains the origin the projection can reach the whole
    /// sphere, so the enclosure falls back to the bounding cube.
    pub fn project_interval(&self, v: &[Interval]) -> Vec<Interval> {
        let r = self.radius;
        if v.iter().all(|iv| iv.contains_zero()) {
            return vec![Interval::new(-r, r); v.len()];
        }
        let mut norm_sq = Interval::point(0.0);
        for iv in v {
            norm_sq = norm_sq.add(iv.powi(2));
        }
        let norm = norm_sq.sqrt().expect("norm-square is nonnegative");
        v.iter()
            .map(|iv| {
                iv.mul(Interval::point(r))
                    .div(norm)
                    .clamp_to(-r, r)
            })
            .collect()
    }

    /// Jacobian of the lower-level argmax `y*(x) = r x / ||x||`; undefined
    /// (discontinuous) at the origin.
    pub fn jacobian(&self, x: &[f64]) -> Option<nalgebra::DMatrix<f64>> {
        let n = x.len();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return None;
        }
        let r = self.radius;
        let mut j = nalgebra::DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let kron = if a == b { 1.0 } else { 0.0 };
                j[(a, b)] = r * (kron / norm - x[a] * x[b] / norm.powi(3));
            }
        }
        Some(j)
    }
}

/// One semi-infinite program with optional known-optimum metadata.
#[derive(Debug, Clone)]
pub struct SipInstance {
    pub name: String,
    pub dx: usize,
    pub dy: usize,
    pub x_box: BoxDomain,
    /// For box-valued `Y` this is `Y` itself; for the sphere instance it is
    /// the bounding cube (the analytic overrides do the real work).
    pub y_box: BoxDomain,
    pub objective: Expr,
    pub constraint: Expr,
    pub analytic: Option<SphereAnalytic>,
    pub vstar: Option<f64>,
    pub xstar: Option<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("unknown instance `{0}`")]
    UnknownName(String),
    #[error("missing or invalid parameter `{0}`")]
    BadParam(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid box: {0}")]
    BadBox(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SipInstance {
    fn validate(&self) -> Result<(), InstanceError> {
        if self.x_box.dim() != self.dx || self.y_box.dim() != self.dy {
            return Err(InstanceError::Dimension(format!(
                "boxes of dimension {}/{} do not match dims {}/{}",
                self.x_box.dim(),
                self.y_box.dim(),
                self.dx,
                self.dy
            )));
        }
        self.x_box.validate().map_err(InstanceError::BadBox)?;
        self.y_box.validate().map_err(InstanceError::BadBox)?;
        if self.objective.max_index(VarKind::X) > self.dx {
            return Err(InstanceError::Dimension(format!(
                "objective references x{} but dims.x = {}",
                self.objective.max_index(VarKind::X),
                self.dx
            )));
        }
        if self.objective.max_index(VarKind::Y) > 0 || self.objective.max_index(VarKind::P) > 0 {
            return Err(InstanceError::Dimension(
                "objective must reference only x variables".to_string(),
            ));
        }
        if self.constraint.max_index(VarKind::X) > self.dx {
            return Err(InstanceError::Dimension(format!(
                "constraint references x{} but dims.x = {}",
                self.constraint.max_index(VarKind::X),
                self.dx
            )));
        }
        if self.constraint.max_index(VarKind::Y) > self.dy {
            return Err(InstanceError::Dimension(format!(
                "constraint references y{} but dims.y = {}",
                self.constraint.max_index(VarKind::Y),
                self.dy
            )));
        }
        if let Some(xs) = &self.xstar {
            if xs.len() != self.dx {
                return Err(InstanceError::Dimension("xstar has wrong length".to_string()));
            }
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<f64, crate::expr::EvalError> {
        self.objective.eval(Vars::x_only(x))
    }

    pub fn eval_g(&self, x: &[f64], y: &[f64]) -> Result<f64, crate::expr::EvalError> {
        self.constraint.eval(Vars::new(x, y, &[]))
    }
}

/// Construct one of the built-in instances.
///
/// Names: `dp`, `seidel`, `tsoukalas`, `mitsos_h`, `hijazi`. The `hijazi`
/// family takes a parameter `d_x >= 2` giving the cube dimension.
pub fn builtin(name: &str, params: &BTreeMap<String, i64>) -> Result<SipInstance, InstanceError> {
    let inst = match name {
        "dp" => SipInstance {
            name: "dp".to_string(),
            dx: 1,
            dy: 1,
            x_box: BoxDomain::new(vec![0.0], vec![6.0]),
            y_box: BoxDomain::new(vec![2.0], vec![6.0]),
            objective: parse("10 - x1").unwrap(),
            constraint: parse("y1^2/(1 + exp(-40*(x1 - y1))) + x1 - y1 - 2").unwrap(),
            analytic: None,
            vstar: Some(8.0),
            xstar: Some(vec![2.0]),
        },
        "seidel" => SipInstance {
            name: "seidel".to_string(),
            dx: 2,
            dy: 1,
            x_box: BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            y_box: BoxDomain::new(vec![-1.0], vec![1.0]),
            objective: parse("-x1 + 1.5*x2").unwrap(),
            constraint: parse("-y1^2 + 2*y1*x1 - x2").unwrap(),
            analytic: None,
            vstar: Some(-1.0 / 6.0),
            xstar: Some(vec![1.0 / 3.0, 1.0 / 9.0]),
        },
        "tsoukalas" => SipInstance {
            name: "tsoukalas".to_string(),
            dx: 1,
            dy: 1,
            x_box: BoxDomain::new(vec![-6.0], vec![6.0]),
            y_box: BoxDomain::new(vec![-6.0], vec![6.0]),
            objective: parse("10 - x1").unwrap(),
            // corrected constraint (the original source has a typo)
            constraint: parse("-x1^4 + x1^2 - x1^2*y1^2 + 2*x1^3*y1 - 4").unwrap(),
            analytic: None,
            vstar: Some(8.0),
            xstar: Some(vec![2.0]),
        },
        "mitsos_h" => SipInstance {
            name: "mitsos_h".to_string(),
            dx: 2,
            dy: 1,
            x_box: BoxDomain::new(vec![0.0, -1e3], vec![1.0, 1e3]),
            y_box: BoxDomain::new(vec![-1.0], vec![1.0]),
            objective: parse("x2").unwrap(),
            constraint: parse("-(x1 - y1)^2 - x2").unwrap(),
            analytic: None,
            vstar: Some(0.0),
            // the optimum set is a continuum (x1 free in [0,1]); no xstar
            xstar: None,
        },
        "hijazi" => {
            let dx = *params
                .get("d_x")
                .ok_or_else(|| InstanceError::BadParam("d_x".to_string()))?;
            if dx < 2 {
                return Err(InstanceError::BadParam(format!("d_x = {dx} must be >= 2")));
            }
            let dx = dx as usize;
            let radius = ((dx - 1) as f64).sqrt();
            let mut objective = Expr::x(1).powi(2);
            let mut constraint =
                (Expr::x(1) - Expr::y(1)) * Expr::y(1);
            for i in 2..=dx {
                objective = objective + Expr::x(i).powi(2);
                constraint = constraint + (Expr::x(i) - Expr::y(i)) * Expr::y(i);
            }
            SipInstance {
                name: format!("hijazi(d_x={dx})"),
                dx,
                dy: dx,
                x_box: BoxDomain::new(vec![-1.0; dx], vec![1.0; dx]),
                y_box: BoxDomain::new(vec![-radius; dx], vec![radius; dx]),
                objective: objective.neg(),
                constraint,
                analytic: Some(SphereAnalytic { radius }),
                vstar: Some(1.0 - dx as f64),
                xstar: None,
            }
        }
        other => return Err(InstanceError::UnknownName(other.to_string())),
    };
    inst.validate()?;
    Ok(inst)
}

pub const BUILTIN_NAMES: [&str; 5] = ["dp", "seidel", "tsoukalas", "mitsos_h", "hijazi"];

/// Load an instance from the line-oriented `key = value` file format.
pub fn load(path: &Path) -> Result<SipInstance, InstanceError> {
    let text = std::fs::read_to_string(path)?;
    load_str(&text)
}

pub fn load_str(text: &str) -> Result<SipInstance, InstanceError> {
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| InstanceError::Parse {
            line: line_no,
            msg: "expected `key = value`".to_string(),
        })?;
        fields.insert(key.trim().to_string(), (line_no, value.trim().to_string()));
    }

    let take = |key: &str| -> Result<(usize, String), InstanceError> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| InstanceError::Parse { line: 0, msg: format!("missing key `{key}`") })
    };

    let (ln, name_raw) = take("name")?;
    let name = name_raw.trim_matches('"').to_string();
    if name.is_empty() {
        return Err(InstanceError::Parse { line: ln, msg: "empty name".to_string() });
    }

    let parse_usize = |key: &str| -> Result<usize, InstanceError> {
        let (ln, v) = take(key)?;
        v.parse::<usize>().map_err(|_| InstanceError::Parse {
            line: ln,
            msg: format!("`{key}` must be a nonnegative integer, got `{v}`"),
        })
    };
    let dx = parse_usize("dims.x")?;
    let dy = parse_usize("dims.y")?;
    if dx == 0 || dy == 0 {
        return Err(InstanceError::Dimension("dims must be positive".to_string()));
    }

    let parse_box = |key: &str, want: usize| -> Result<BoxDomain, InstanceError> {
        let (ln, v) = take(key)?;
        let pairs = parse_pair_list(&v).map_err(|msg| InstanceError::Parse { line: ln, msg })?;
        if pairs.len() != want {
            return Err(InstanceError::Dimension(format!(
                "`{key}` has {} pairs but expected {}",
                pairs.len(),
                want
            )));
        }
        let (lo, hi) = pairs.into_iter().unzip();
        let b = BoxDomain::new(lo, hi);
        b.validate().map_err(InstanceError::BadBox)?;
        Ok(b)
    };
    let x_box = parse_box("box_x", dx)?;
    let y_box = parse_box("box_y", dy)?;

    let parse_expr_field = |key: &str| -> Result<Expr, InstanceError> {
        let (ln, v) = take(key)?;
        let src = v.trim_matches('"');
        parse(src).map_err(|e| InstanceError::Parse { line: ln, msg: e.to_string() })
    };
    let objective = parse_expr_field("objective")?;
    let constraint = parse_expr_field("constraint")?;

    let vstar = match fields.get("vstar") {
        Some((ln, v)) => Some(v.parse::<f64>().map_err(|_| InstanceError::Parse {
            line: *ln,
            msg: format!("`vstar` must be a real, got `{v}`"),
        })?),
        None => None,
    };
    let xstar = match fields.get("xstar") {
        Some((ln, v)) => Some(parse_real_list(v).map_err(|msg| InstanceError::Parse {
            line: *ln,
            msg,
        })?),
        None => None,
    };

    let inst = SipInstance {
        name,
        dx,
        dy,
        x_box,
        y_box,
        objective,
        constraint,
        analytic: None,
        vstar,
        xstar,
    };
    inst.validate()?;
    Ok(inst)
}

fn parse_real_list(s: &str) -> Result<Vec<f64>, String> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected `[a, b, ...]`, got `{s}`"))?;
    inner
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{}`", t.trim())))
        .collect()
}

fn parse_pair_list(s: &str) -> Result<Vec<(f64, f64)>, String> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected `[[lo,hi],...]`, got `{s}`"))?;
    let mut out = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let start = rest.find('[').ok_or_else(|| "expected `[`".to_string())?;
        let end = rest[start..]
            .find(']')
            .ok_or_else(|| "unterminated pair".to_string())?
            + start;
        let body = &rest[start + 1..end];
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(format!("pair `{body}` must have two entries"));
        }
        let lo = parts[0].parse::<f64>().map_err(|_| format!("bad number `{}`", parts[0]))?;
        let hi = parts[1].parse::<f64>().map_err(|_| format!("bad number `{}`", parts[1]))?;
        out.push((lo, hi));
        rest = rest[end + 1..].trim_start_matches([',', ' ']).trim();
    }
    Ok(out)
}

impl fmt::Display for SipInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (d_x={}, d_y={}): min {} s.t. {} <= 0",
            self.name, self.dx, self.dy, self.objective, self.constraint
        )
    }
}
