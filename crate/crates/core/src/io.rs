//! Plain-text serialization: field CSV (with a header recording the
//! lattice and role), and CSV / `key: value` renderings of the reports.
//!
//! Floats are written with Rust's `Display`, the shortest representation
//! that parses back to the same bits, so output is bit-reproducible.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::barriers::BarrierConstants;
use crate::error::{Error, Result};
use crate::field::{Domain, Role, ScalarField, Shape};
use crate::operators::Phase;
use crate::regularity::RegularityReport;
use crate::solver::SolveReport;
use crate::transmission::TransmissionResult;
use crate::viscosity::ScanReport;

/// `# domain=... h=... role=...` for the field's lattice.
pub fn field_header(domain: &Domain, role: Role) -> String {
    let shape = match *domain.shape() {
        Shape::Interval { lo, hi } => format!("domain=interval lo={lo} hi={hi}"),
        Shape::Rect { x, y } => format!(
            "domain=rect x0={} x1={} y0={} y1={}",
            x[0], x[1], y[0], y[1]
        ),
        Shape::Disk { center, radius } => {
            format!("domain=disk cx={} cy={} r={radius}", center[0], center[1])
        }
    };
    format!("# {shape} h={} role={}", domain.h(), role.as_str())
}

/// Header, column line, then one row per active node in lattice order.
pub fn field_to_csv(field: &ScalarField) -> String {
    let d = field.domain();
    let mut out = field_header(d, field.role());
    out.push('\n');
    out.push_str(if d.dim() == 1 {
        "x,value\n"
    } else {
        "x,y,value\n"
    });
    for k in d.active_nodes() {
        let p = d.coords(k);
        if d.dim() == 1 {
            let _ = writeln!(out, "{},{}", p[0], field.value(k));
        } else {
            let _ = writeln!(out, "{},{},{}", p[0], p[1], field.value(k));
        }
    }
    out
}

fn csv_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Csv(format!("line {line}: {msg}"))
}

fn parse_header(line: &str) -> Result<(Domain, Role)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| csv_err(1, "expected a '# domain=...' header"))?;
    let mut kv = HashMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| csv_err(1, format!("header token {tok:?} is not key=value")))?;
        if kv.insert(k, v).is_some() {
            return Err(csv_err(1, format!("header key {k:?} repeated")));
        }
    }
    let num = |k: &str| -> Result<f64> {
        let v = kv
            .get(k)
            .ok_or_else(|| csv_err(1, format!("header lacks {k}=")))?;
        v.parse::<f64>()
            .map_err(|_| csv_err(1, format!("{k}={v} is not a number")))
    };
    let shape = match kv.get("domain").copied() {
        Some("interval") => Shape::Interval {
            lo: num("lo")?,
            hi: num("hi")?,
        },
        Some("rect") => Shape::Rect {
            x: [num("x0")?, num("x1")?],
            y: [num("y0")?, num("y1")?],
        },
        Some("disk") => Shape::Disk {
            center: [num("cx")?, num("cy")?],
            radius: num("r")?,
        },
        Some(other) => return Err(csv_err(1, format!("unknown domain {other:?}"))),
        None => return Err(csv_err(1, "header lacks domain=")),
    };
    let role_tag = kv
        .get("role")
        .ok_or_else(|| csv_err(1, "header lacks role="))?;
    let role =
        Role::parse(role_tag).ok_or_else(|| csv_err(1, format!("unknown role {role_tag:?}")))?;
    let domain = Domain::new(shape, num("h")?).map_err(|e| csv_err(1, e))?;
    Ok((domain, role))
}

/// Inverse of [`field_to_csv`]. Every active node must appear exactly once,
/// at its lattice coordinates; row order is free.
pub fn parse_field_csv(text: &str) -> Result<ScalarField> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Csv("empty input".into()))?;
    let (domain, role) = parse_header(header)?;
    let dim = domain.dim();
    let (cols_line, cols) = lines
        .next()
        .ok_or_else(|| Error::Csv("missing column line".into()))?;
    let expected = if dim == 1 { "x,value" } else { "x,y,value" };
    if cols.replace(' ', "") != expected {
        return Err(csv_err(
            cols_line,
            format!("expected columns {expected:?}, found {cols:?}"),
        ));
    }
    let mut values = vec![0.0; domain.len()];
    let mut seen = vec![false; domain.len()];
    let slack = 1e-6 * domain.h();
    for (n, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != dim + 1 {
            return Err(csv_err(
                n,
                format!("expected {} cells, found {}", dim + 1, cells.len()),
            ));
        }
        let mut nums = [0.0; 3];
        for (slot, cell) in nums.iter_mut().zip(&cells) {
            *slot = cell
                .parse::<f64>()
                .map_err(|_| csv_err(n, format!("{cell:?} is not a number")))?;
        }
        let p = if dim == 1 {
            [nums[0], 0.0]
        } else {
            [nums[0], nums[1]]
        };
        let value = nums[dim];
        let k = domain
            .node_at(p)
            .ok_or_else(|| csv_err(n, format!("point {p:?} is not an active node")))?;
        let c = domain.coords(k);
        if (c[0] - p[0]).abs() > slack || (c[1] - p[1]).abs() > slack {
            return Err(csv_err(n, format!("point {p:?} is off the lattice")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(csv_err(n, format!("node at {c:?} given twice")));
        }
        values[k] = value;
    }
    if let Some(k) = domain.active_nodes().find(|&k| !seen[k]) {
        return Err(Error::Csv(format!(
            "no row for node at {:?}",
            domain.coords(k)
        )));
    }
    ScalarField::new(Arc::new(domain), values, role)
}

/// `key: value` lines.
pub fn solve_report_text(report: &SolveReport, constants: Option<&BarrierConstants>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "converged: {}", report.converged);
    let _ = writeln!(out, "iterations: {}", report.iterations);
    let _ = writeln!(out, "final_residual_norm: {}", report.final_residual_norm);
    let _ = writeln!(out, "rejected_sweeps: {}", report.rejected_sweeps);
    let _ = writeln!(out, "pseudo_time_step: {}", report.pseudo_time_step);
    let _ = writeln!(out, "bracket_violations: {}", report.bracket_violations);
    let _ = writeln!(out, "bracket_excess: {}", report.bracket_excess);
    let _ = writeln!(out, "bracket_tol: {}", report.bracket_tol);
    if let Some(c) = constants {
        out.push_str(&barrier_constants_text(c));
    }
    out
}

pub fn barrier_constants_text(c: &BarrierConstants) -> String {
    let mut out = String::new();
    for (k, v) in [
        ("gamma1", c.gamma1),
        ("gamma2", c.gamma2),
        ("gamma", c.gamma),
        ("l", c.l),
        ("r_star", c.r_star),
        ("r_tilde", c.r_tilde),
        ("diameter", c.diameter),
        ("f_norm", c.f_norm),
        ("g_norm", c.g_norm),
        ("lambda_n", c.lambda_n),
    ] {
        let _ = writeln!(out, "barrier_{k}: {v}");
    }
    let _ = writeln!(out, "barrier_vertex: {},{}", c.x0[0], c.x0[1]);
    out
}

pub fn residual_history_csv(report: &SolveReport) -> String {
    let mut out = String::from("sweep,residual\n");
    for (i, r) in report.residual_history.iter().enumerate() {
        let _ = writeln!(out, "{i},{r}");
    }
    out
}

/// One row per outer step.
pub fn transmission_manifest_csv(result: &TransmissionResult) -> String {
    let mut out = String::from(
        "k,epsilon,inner_iterations,inner_converged,inner_residual,sign_delta,change_norm\n",
    );
    for s in &result.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.k,
            s.epsilon,
            s.report.iterations,
            s.report.converged,
            s.report.final_residual_norm,
            s.sign_delta,
            s.change_norm
        );
    }
    out
}

pub fn seminorm_csv(report: &RegularityReport) -> String {
    let mut out = String::from("beta0,seminorm\n");
    for (b, s) in &report.seminorms {
        let _ = writeln!(out, "{b},{s}");
    }
    out
}

pub fn oscillation_csv(report: &RegularityReport) -> String {
    let mut out = String::from("kappa,radius,osc,xi_x,xi_y,nodes\n");
    for e in &report.decay.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.kappa, e.radius, e.osc, e.xi[0], e.xi[1], e.nodes
        );
    }
    out
}

pub fn bound_check_csv(report: &RegularityReport) -> String {
    let mut out = String::from("beta0,z0_x,z0_y,x0_x,x0_y,a1,a2,value\n");
    for c in &report.bound_checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.constants.beta0,
            c.z0[0],
            c.z0[1],
            c.x0[0],
            c.x0[1],
            c.constants.a1,
            c.constants.a2,
            c.value
        );
    }
    out
}

pub fn regularity_summary_text(report: &RegularityReport) -> String {
    let mut out = String::new();
    match report.decay.alpha0 {
        Some(a) => {
            let _ = writeln!(out, "alpha0: {a}");
        }
        None => out.push_str("alpha0: none\n"),
    }
    let _ = writeln!(out, "affine: {}", report.decay.affine);
    let _ = writeln!(out, "truncated: {}", report.decay.truncated);
    let _ = writeln!(
        out,
        "alpha_window: {},{}",
        report.alpha_window.0, report.alpha_window.1
    );
    let _ = writeln!(out, "sigma: {}", report.sigma);
    out.push_str("sigma_theoretical: unknown (non-constructive)\n");
    let worst = report
        .bound_checks
        .iter()
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst.is_finite() {
        let _ = writeln!(out, "max_bound_check: {worst}");
    }
    out
}

fn phase_str(p: Phase) -> &'static str {
    match p {
        Phase::Positive => "positive",
        Phase::Negative => "negative",
        Phase::Zero => "band",
    }
}

pub fn certificates_csv(report: &ScanReport) -> String {
    let mut out = String::from("trial,x,y,side,region,value,tol,verdict\n");
    for c in &report.certificates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.trial,
            c.coords[0],
            c.coords[1],
            c.side.as_str(),
            phase_str(c.region),
            c.value,
            report.tol,
            if c.violation { "violation" } else { "ok" }
        );
    }
    out
}
