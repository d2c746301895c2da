//! Experiment configuration: TOML in, validated problem objects out.
//!
//! Loading happens in two stages. [`Config::from_toml`] checks the syntax and
//! every field that can be judged on its own; [`Config::build`] then
//! constructs the domain, fields, law, operator and problem for one
//! parameter point, which runs every invariant of the solver types. All
//! problems found along the way are reported together in one [`ConfigError`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use freetrans_core::io::parse_field_csv;
use freetrans_core::operators::SymMatrix;
use freetrans_core::regularity::ProbeOptions;
use freetrans_core::regularity::{HolderVariant, Subdomain};
use freetrans_core::solver::{Init, Sweep};
use freetrans_core::{
    DegeneracyLaw, Domain, EllipticOperator, ProblemSpec, Role, ScalarField, SolverOptions,
    TransmissionOptions,
};
use serde::Deserialize;

use crate::expr::{parse_expr, Expr};

/// Every problem found while validating a configuration, one per line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    fn single(problem: impl Into<String>) -> Self {
        ConfigError {
            problems: vec![problem.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} problem(s) in config", self.problems.len())?;
        for p in &self.problems {
            write!(f, "\n  {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// A scalar field given as a number, an expression in `x` and `y`, or a CSV
/// file written by this tool (path relative to the config file).
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Expr(String),
    Csv { csv: String },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    pub operator: OperatorConfig,
    pub law: LawConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub transmission: TransmissionConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// `interval`, `rect` or `disk`.
    pub shape: String,
    pub x: Option<[f64; 2]>,
    pub y: Option<[f64; 2]>,
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    /// `neg_trace`, `pucci_plus`, `pucci_minus` or `weighted_trace`.
    pub kind: String,
    pub lambda: Option<f64>,
    pub cap_lambda: Option<f64>,
    /// Row-major weight matrix for `weighted_trace`.
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// Constant exponents via `p_plus`/`p_minus` (with numeric `q`, `s`), or a
/// variable law via the field `p` (with field `q`, `s`).
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub p_plus: Option<f64>,
    pub p_minus: Option<f64>,
    pub p: Option<FieldSpec>,
    pub q: FieldSpec,
    pub s: FieldSpec,
    #[serde(default = "zero_field")]
    pub a: FieldSpec,
    #[serde(default = "zero_field")]
    pub b: FieldSpec,
}

fn zero_field() -> FieldSpec {
    FieldSpec::Number(0.0)
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub forcing: FieldSpec,
    pub boundary: FieldSpec,
    /// Free-boundary band multiplier: the band is `|v| <= band * h`.
    pub band: Option<f64>,
    /// Sign field for the frozen-switch solve; defaults to the midpoint of
    /// the barriers.
    pub switch: Option<FieldSpec>,
    /// Mollifier radius for the switch indicators; 0 keeps them sharp.
    #[serde(default)]
    pub switch_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// `gauss_seidel` or `jacobi`.
    pub sweep: String,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.01,
            tol: 1e-8,
            max_iter: 500_000,
            sweep: "gauss_seidel".into(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmissionConfig {
    pub k_max: usize,
    /// Regularization per outer step; empty uses the halving default.
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub damping: f64,
}

impl Default for TransmissionConfig {
    fn default() -> Self {
        let d = TransmissionOptions::default();
        TransmissionConfig {
            k_max: d.k_max,
            schedule: d.schedule,
            tol: d.tol,
            damping: d.damping,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Probe this field instead of a fresh solution.
    pub field: Option<FieldSpec>,
    pub betas: Vec<f64>,
    pub sigma: f64,
    pub k_max: usize,
    pub centers: usize,
    pub rho: f64,
    pub decay_center: [f64; 2],
    /// `multiphase` or `switched`.
    pub variant: String,
    pub alpha_homog: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let d = ProbeOptions::default();
        ProbeConfig {
            field: None,
            betas: d.betas,
            sigma: d.sigma,
            k_max: d.k_max,
            centers: d.probe_centers,
            rho: d.rho,
            decay_center: d.decay_center,
            variant: d.variant.as_str().into(),
            alpha_homog: d.alpha_homog,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub trials: usize,
    pub coefficient_bound: f64,
    pub search_radius: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 200,
            coefficient_bound: 4.0,
            search_radius: 0.125,
        }
    }
}

/// Cartesian product of the listed values; an omitted list keeps the base
/// value.
#[derive(Clone, Debug, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub epsilon: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// One parameter point of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub epsilon: f64,
    pub h: f64,
}

/// Everything a pipeline needs for one parameter point.
#[derive(Clone, Debug)]
pub struct Built {
    pub point: Point,
    pub spec: ProblemSpec,
    pub switch_field: Option<ScalarField>,
    pub probe_field: Option<ScalarField>,
}

struct Problems(Vec<String>);

impl Problems {
    fn check(&mut self, ok: bool, key: &str, msg: impl fmt::Display) {
        if !ok {
            self.0.push(format!("{key}: {msg}"));
        }
    }

    fn push(&mut self, key: &str, msg: impl fmt::Display) {
        self.0.push(format!("{key}: {msg}"));
    }

    fn positive(&mut self, key: &str, v: f64) {
        self.check(
            v > 0.0 && v.is_finite(),
            key,
            format!("{v} must be positive and finite"),
        );
    }

    fn finish(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems: self.0 })
        }
    }
}

impl Config {
    /// Parse and check everything that needs no file access.
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| ConfigError::single(format!("syntax: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mut pr = Problems(Vec::new());
        let d = &self.domain;
        pr.positive("domain.h", d.h);
        match d.shape.as_str() {
            "interval" => {
                pr.check(d.x.is_some(), "domain.x", "interval needs x = [lo, hi]");
                pr.check(
                    d.y.is_none() && d.center.is_none() && d.radius.is_none(),
                    "domain",
                    "interval takes only x and h",
                );
            }
            "rect" => {
                pr.check(
                    d.x.is_some() && d.y.is_some(),
                    "domain",
                    "rect needs x and y ranges",
                );
                pr.check(
                    d.center.is_none() && d.radius.is_none(),
                    "domain",
                    "rect takes only x, y and h",
                );
            }
            "disk" => {
                pr.check(
                    d.center.is_some() && d.radius.is_some(),
                    "domain",
                    "disk needs center and radius",
                );
                pr.check(
                    d.x.is_none() && d.y.is_none(),
                    "domain",
                    "disk takes only center, radius and h",
                );
            }
            other => pr.push(
                "domain.shape",
                format!("unknown shape {other:?} (interval, rect, disk)"),
            ),
        }

        let op = &self.operator;
        match op.kind.as_str() {
            "neg_trace" => pr.check(
                op.lambda.is_none() && op.cap_lambda.is_none() && op.matrix.is_none(),
                "operator",
                "neg_trace takes no parameters",
            ),
            "pucci_plus" | "pucci_minus" | "weighted_trace" => {
                pr.check(op.lambda.is_some() && op.cap_lambda.is_some(), "operator", "needs lambda and cap_lambda");
                pr.check(
                    (op.kind == "weighted_trace") == op.matrix.is_some(),
                    "operator.matrix",
                    "required for weighted_trace and only there",
                );
            }
            other => pr.push(
                "operator.kind",
                format!("unknown operator {other:?} (neg_trace, pucci_plus, pucci_minus, weighted_trace)"),
            ),
        }

        let law = &self.law;
        match (&law.p, law.p_plus, law.p_minus) {
            (None, Some(_), Some(_)) => {
                for (key, f) in [("law.q", &law.q), ("law.s", &law.s)] {
                    pr.check(
                        matches!(f, FieldSpec::Number(_)),
                        key,
                        "must be a number for a constant law",
                    );
                }
            }
            (Some(_), None, None) => {}
            _ => pr.push(
                "law",
                "give either p_plus and p_minus (constant law) or p (variable law)",
            ),
        }

        let mut fields = vec![
            ("law.q", &law.q),
            ("law.s", &law.s),
            ("law.a", &law.a),
            ("law.b", &law.b),
            ("problem.forcing", &self.problem.forcing),
            ("problem.boundary", &self.problem.boundary),
        ];
        fields.extend(law.p.as_ref().map(|f| ("law.p", f)));
        fields.extend(self.problem.switch.as_ref().map(|f| ("problem.switch", f)));
        fields.extend(self.probe.field.as_ref().map(|f| ("probe.field", f)));
        for (key, f) in fields {
            if let FieldSpec::Expr(src) = f {
                match parse_expr(src) {
                    Ok(e) => pr.check(
                        !(e.uses_y() && d.shape == "interval"),
                        key,
                        "uses y on a one-dimensional domain",
                    ),
                    Err(e) => pr.push(key, e),
                }
            }
        }

        if let Some(b) = self.problem.band {
            pr.check(
                b >= 0.0 && b.is_finite(),
                "problem.band",
                format!("{b} must be nonnegative"),
            );
        }
        let r = self.problem.switch_radius;
        pr.check(
            r >= 0.0 && r.is_finite(),
            "problem.switch_radius",
            format!("{r} must be nonnegative"),
        );

        let s = &self.solver;
        pr.check(
            (0.0..=1.0).contains(&s.epsilon),
            "solver.epsilon",
            format!("{} outside [0, 1]", s.epsilon),
        );
        pr.check(
            s.epsilon > 0.0 || self.problem.switch.is_some(),
            "solver.epsilon",
            "0 needs an explicit problem.switch",
        );
        pr.positive("solver.tol", s.tol);
        pr.check(s.max_iter > 0, "solver.max_iter", "must be positive");
        pr.check(
            matches!(s.sweep.as_str(), "gauss_seidel" | "jacobi"),
            "solver.sweep",
            format!("unknown sweep {:?} (gauss_seidel, jacobi)", s.sweep),
        );

        let t = &self.transmission;
        pr.check(t.k_max > 0, "transmission.k_max", "must be positive");
        pr.positive("transmission.tol", t.tol);
        pr.check(
            t.damping > 0.0 && t.damping <= 1.0,
            "transmission.damping",
            format!("{} outside (0, 1]", t.damping),
        );
        for e in &t.schedule {
            pr.check(
                *e > 0.0 && *e <= 1.0,
                "transmission.schedule",
                format!("{e} outside (0, 1]"),
            );
        }

        let p = &self.probe;
        pr.check(!p.betas.is_empty(), "probe.betas", "must not be empty");
        for b in &p.betas {
            pr.check(
                *b > 0.0 && *b <= 1.0,
                "probe.betas",
                format!("{b} outside (0, 1]"),
            );
        }
        pr.check(
            p.sigma > 0.0 && p.sigma < 1.0,
            "probe.sigma",
            format!("{} outside (0, 1)", p.sigma),
        );
        pr.check(p.k_max >= 2, "probe.k_max", "needs at least 2 scales");
        pr.positive("probe.rho", p.rho);
        pr.positive("probe.alpha_homog", p.alpha_homog);
        pr.check(
            matches!(p.variant.as_str(), "multiphase" | "switched"),
            "probe.variant",
            format!("unknown variant {:?} (multiphase, switched)", p.variant),
        );

        let v = &self.verify;
        pr.check(v.trials > 0, "verify.trials", "must be positive");
        pr.positive("verify.coefficient_bound", v.coefficient_bound);
        pr.positive("verify.search_radius", v.search_radius);

        if let Some(sw) = &self.sweep {
            pr.check(
                !(sw.epsilon.is_empty() && sw.h.is_empty()),
                "sweep",
                "lists no values",
            );
            for e in &sw.epsilon {
                pr.check(
                    *e > 0.0 && *e <= 1.0,
                    "sweep.epsilon",
                    format!("{e} outside (0, 1]"),
                );
            }
            for h in &sw.h {
                pr.positive("sweep.h", *h);
            }
        }
        pr.finish()
    }

    /// The base point, or the sweep's cartesian product (epsilon-major).
    pub fn points(&self, sweep: bool) -> Vec<Point> {
        let base = Point {
            epsilon: self.solver.epsilon,
            h: self.domain.h,
        };
        match (&self.sweep, sweep) {
            (Some(sw), true) => {
                let eps = if sw.epsilon.is_empty() {
                    vec![base.epsilon]
                } else {
                    sw.epsilon.clone()
                };
                let hs = if sw.h.is_empty() {
                    vec![base.h]
                } else {
                    sw.h.clone()
                };
                eps.iter()
                    .flat_map(|&epsilon| hs.iter().map(move |&h| Point { epsilon, h }))
                    .collect()
            }
            _ => vec![base],
        }
    }

    /// Construct the problem at `point`; CSV paths resolve against `base`.
    pub fn build(&self, base: &Path, point: Point) -> Result<Built, ConfigError> {
        let domain = self.build_domain(point.h).map_err(ConfigError::single)?;
        let mut pr = Problems(Vec::new());
        let mut field = |key: &str, spec: &FieldSpec, role: Role| -> Option<ScalarField> {
            match load_field(&domain, base, spec, role) {
                Ok(f) => Some(f),
                Err(e) => {
                    pr.push(key, e);
                    None
                }
            }
        };
        let law = &self.law;
        let a = field("law.a", &law.a, Role::Coefficient);
        let b = field("law.b", &law.b, Role::Coefficient);
        let q = field("law.q", &law.q, Role::Coefficient);
        let s = field("law.s", &law.s, Role::Coefficient);
        let p = law
            .p
            .as_ref()
            .and_then(|f| field("law.p", f, Role::Coefficient));
        let forcing = field("problem.forcing", &self.problem.forcing, Role::Forcing);
        let boundary = field("problem.boundary", &self.problem.boundary, Role::Boundary);
        let switch_field = self
            .problem
            .switch
            .as_ref()
            .map(|f| field("problem.switch", f, Role::Solution));
        let probe_field = self
            .probe
            .field
            .as_ref()
            .map(|f| field("probe.field", f, Role::Solution));

        let operator = self
            .build_operator()
            .map_err(|e| pr.push("operator", e))
            .ok();
        let law = match (a, b, q, s) {
            (Some(a), Some(b), Some(q), Some(s)) => {
                let built = match (p, law.p_plus, law.p_minus) {
                    (Some(p), _, _) => DegeneracyLaw::variable(p, q, s, a, b),
                    (None, Some(pp), Some(pm)) => {
                        let (FieldSpec::Number(qv), FieldSpec::Number(sv)) = (&law.q, &law.s)
                        else {
                            unreachable!("constant exponents are validated on parse")
                        };
                        DegeneracyLaw::constant(pp, pm, *qv, *sv, a, b)
                    }
                    _ => unreachable!("law shape is validated on parse"),
                };
                built.map_err(|e| pr.push("law", e)).ok()
            }
            _ => None,
        };
        let (Some(operator), Some(law), Some(forcing), Some(boundary)) =
            (operator, law, forcing, boundary)
        else {
            pr.finish()?;
            unreachable!("a missing component always records a problem");
        };
        let spec = ProblemSpec::new(operator, law, forcing, boundary, point.epsilon)
            .and_then(|s| s.with_band(self.problem.band.unwrap_or(1.0)));
        let spec = match spec {
            Ok(s) => s,
            Err(e) => {
                pr.push("problem", e);
                return Err(ConfigError { problems: pr.0 });
            }
        };
        pr.finish()?;
        Ok(Built {
            point,
            spec,
            switch_field: switch_field.flatten(),
            probe_field: probe_field.flatten(),
        })
    }

    fn build_domain(&self, h: f64) -> Result<Arc<Domain>, String> {
        let d = &self.domain;
        let domain = match d.shape.as_str() {
            "interval" => {
                let [lo, hi] = d.x.unwrap_or_default();
                Domain::interval(lo, hi, h)
            }
            "rect" => Domain::rect(d.x.unwrap_or_default(), d.y.unwrap_or_default(), h),
            _ => Domain::disk(
                d.center.unwrap_or_default(),
                d.radius.unwrap_or_default(),
                h,
            ),
        };
        domain.map(Arc::new).map_err(|e| format!("domain: {e}"))
    }

    fn build_operator(&self) -> freetrans_core::Result<EllipticOperator> {
        let op = &self.operator;
        let (l, cl) = (op.lambda.unwrap_or(1.0), op.cap_lambda.unwrap_or(1.0));
        match op.kind.as_str() {
            "neg_trace" => Ok(EllipticOperator::neg_trace()),
            "pucci_plus" => EllipticOperator::pucci_plus(l, cl),
            "pucci_minus" => EllipticOperator::pucci_minus(l, cl),
            _ => {
                let rows = op.matrix.clone().unwrap_or_default();
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(freetrans_core::Error::InvalidOperator(
                        "weight matrix must be square".into(),
                    ));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                EllipticOperator::weighted_trace(SymMatrix::from_row_slice(n, &flat)?, l, cl)
            }
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            sweep: if self.solver.sweep == "jacobi" {
                Sweep::Jacobi
            } else {
                Sweep::GaussSeidel
            },
            init: Init::Midpoint,
            ..SolverOptions::default()
        }
    }

    pub fn transmission_options(&self) -> TransmissionOptions {
        let t = &self.transmission;
        TransmissionOptions {
            k_max: t.k_max,
            schedule: t.schedule.clone(),
            tol: t.tol,
            damping: t.damping,
            solver: self.solver_options(),
        }
    }

    pub fn probe_options(&self, seed: u64) -> ProbeOptions {
        let p = &self.probe;
        ProbeOptions {
            betas: p.betas.clone(),
            subdomain: Subdomain::Interior,
            rho: p.rho,
            probe_centers: p.centers,
            seed,
            variant: if p.variant == "switched" {
                HolderVariant::Switched
            } else {
                HolderVariant::MultiPhase
            },
            decay_center: p.decay_center,
            sigma: p.sigma,
            k_max: p.k_max,
            alpha_homog: p.alpha_homog,
        }
    }
}

fn load_field(
    domain: &Arc<Domain>,
    base: &Path,
    spec: &FieldSpec,
    role: Role,
) -> Result<ScalarField, String> {
    match spec {
        FieldSpec::Number(v) => {
            ScalarField::constant(domain.clone(), role, *v).map_err(|e| e.to_string())
        }
        FieldSpec::Expr(src) => {
            let e: Expr = parse_expr(src).map_err(|e| e.to_string())?;
            ScalarField::from_fn(domain.clone(), role, |p| e.eval(p)).map_err(|e| e.to_string())
        }
        FieldSpec::Csv { csv } => {
            let path = base.join(csv);
            let text =
                std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let f = parse_field_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            if f.domain() != domain.as_ref() {
                return Err(format!(
                    "{}: lattice differs from the configured domain",
                    path.display()
                ));
            }
            ScalarField::new(domain.clone(), f.into_values(), role).map_err(|e| e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[domain]
shape = "interval"
x = [-1, 1]
h = 0.0625

[operator]
kind = "neg_trace"

[law]
p_plus = 1
p_minus = 1
q = 1
s = 1

[problem]
forcing = -1.125
boundary = "|x|^1.5"
"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = Config::from_toml(BASE).unwrap();
        let built = cfg.build(Path::new("."), cfg.points(false)[0]).unwrap();
        assert_eq!(built.spec.domain().len(), 33);
        assert_eq!(built.spec.boundary().value(0), 1.0);
        assert_eq!(built.spec.epsilon(), 0.01);
    }

    #[test]
    fn problems_are_aggregated() {
        let text = BASE
            .replace("h = 0.0625", "h = -1\nradius = 2")
            .replace("neg_trace", "pucci_plus")
            .replace("\"|x|^1.5\"", "\"|y| +\"")
            + "[solver]\nsweep = \"sideways\"\n";
        let err = Config::from_toml(&text).unwrap_err();
        let all = err.problems.join("\n");
        for key in [
            "domain.h",
            "domain:",
            "operator:",
            "problem.boundary",
            "solver.sweep",
        ] {
            assert!(all.contains(key), "{key} missing from\n{all}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err =
            Config::from_toml(&(BASE.to_string() + "[solver]\ntolerance = 1e-3\n")).unwrap_err();
        assert!(err.problems[0].contains("tolerance"), "{err}");
    }

    #[test]
    fn build_reports_type_invariants() {
        let cfg = Config::from_toml(&BASE.replace("q = 1", "q = 0.5")).unwrap();
        let err = cfg.build(Path::new("."), cfg.points(false)[0]).unwrap_err();
        assert!(err.problems[0].starts_with("law:"), "{err}");
    }

    #[test]
    fn constant_law_on_a_disk() {
        // Node 0 of a disk lattice is exterior; exponents must not be read
        // from a field value there.
        let text = BASE.replace(
            "shape = \"interval\"\nx = [-1, 1]",
            "shape = \"disk\"\ncenter = [0, 0]\nradius = 1",
        );
        let cfg = Config::from_toml(&text).unwrap();
        cfg.build(Path::new("."), cfg.points(false)[0]).unwrap();
    }

    #[test]
    fn sweep_points_are_cartesian() {
        let cfg = Config::from_toml(
            &(BASE.to_string() + "[sweep]\nepsilon = [0.1, 0.01]\nh = [0.25, 0.125, 0.0625]\n"),
        )
        .unwrap();
        let pts = cfg.points(true);
        assert_eq!(pts.len(), 6);
        assert_eq!(
            pts[1],
            Point {
                epsilon: 0.1,
                h: 0.125
            }
        );
        assert_eq!(cfg.points(false).len(), 1);
    }
}
