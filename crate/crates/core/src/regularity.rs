//! Empirical regularity checks: discrete Hölder seminorms, the explicit
//! Hölder constants and bound functional, oscillation decay of `u` minus its
//! best affine fit, and the blow-up into the smallness regime.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{dist, Domain, Point, Role, ScalarField, Shape};
use crate::operators::{check_ellipticity, pow0, DegeneracyLaw, Exponents};
use crate::scheme::{ProblemSpec, SwitchSource};

/// Which proposition the constants are taken from: the switched equation
/// or the multi-phase variant, which carries an extra `||u||` in `A1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HolderVariant {
    Switched,
    #[default]
    MultiPhase,
}

impl HolderVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            HolderVariant::Switched => "switched",
            HolderVariant::MultiPhase => "multiphase",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderConstants {
    pub beta0: f64,
    pub rho: f64,
    pub a1: f64,
    pub a2: f64,
    pub variant: HolderVariant,
}

#[allow(clippy::too_many_arguments)]
pub fn holder_constants(
    beta0: f64,
    rho: f64,
    u_norm: f64,
    f_norm: f64,
    lambda: f64,
    cap_lambda: f64,
    n: usize,
    variant: HolderVariant,
) -> Result<HolderConstants> {
    if !(beta0 > 0.0 && beta0 < 1.0) || !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidProbe(format!(
            "need beta0 in (0, 1) and rho > 0, got {beta0} and {rho}"
        )));
    }
    let a2 = 64.0 * u_norm / (rho * rho);
    let bump = match variant {
        HolderVariant::Switched => 0.0,
        HolderVariant::MultiPhase => u_norm,
    };
    let a1 = 4.0 / (beta0 * (1.0 - beta0))
        * ((f_norm + bump) / lambda
            + (2.0 * a2 + 1.0) * (cap_lambda * (n as f64 - 1.0) / lambda + 1.0));
    Ok(HolderConstants {
        beta0,
        rho,
        a1,
        a2,
        variant,
    })
}

fn ball_nodes(domain: &Domain, center: Point, radius: f64) -> Vec<usize> {
    domain
        .active_nodes()
        .filter(|&k| dist(domain.coords(k), center) <= radius * (1.0 + 1e-12))
        .collect()
}

/// `sup u(x) - u(y) - A1|x-y|^beta0 - A2(|x-x0|^2 + |y-x0|^2)` over node
/// pairs in `B_rho(z0)`. Nonpositive for solutions.
pub fn check_holder_bound(
    u: &ScalarField,
    z0: Point,
    x0: Point,
    hc: &HolderConstants,
) -> Result<f64> {
    let d = u.domain();
    if 2.0 * hc.rho / d.h() < 4.0 {
        return Err(Error::InvalidProbe(format!(
            "ball radius {} spans fewer than 5 nodes at h = {}",
            hc.rho,
            d.h()
        )));
    }
    if d.distance_to_boundary(z0) < hc.rho - 1e-12 {
        return Err(Error::InvalidProbe(format!(
            "ball of radius {} around {z0:?} leaves the domain",
            hc.rho
        )));
    }
    if dist(x0, z0) > 0.5 * hc.rho + 1e-12 {
        return Err(Error::InvalidProbe(format!(
            "x0 = {x0:?} is not in the half ball around {z0:?}"
        )));
    }
    let nodes = ball_nodes(d, z0, hc.rho);
    let pts: Vec<(Point, f64, f64)> = nodes
        .iter()
        .map(|&k| {
            let x = d.coords(k);
            let r = dist(x, x0);
            (x, u.value(k), hc.a2 * r * r)
        })
        .collect();
    Ok(pts
        .par_iter()
        .map(|&(x, ux, wx)| {
            pts.iter()
                .map(|&(y, uy, wy)| ux - uy - hc.a1 * dist(x, y).powf(hc.beta0) - wx - wy)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Subdomain {
    All,
    Interior,
    Ball {
        center: Point,
        radius: f64,
    },
    /// Nodes at distance at least `d` from the continuum boundary.
    Inset(f64),
}

/// Pairwise scans are exact up to this many nodes; larger sets keep every
/// `ceil(len / EXACT_LIMIT)`-th node in lattice order.
pub const EXACT_LIMIT: usize = 129 * 129;

pub fn subdomain_nodes(domain: &Domain, sub: Subdomain) -> Vec<usize> {
    match sub {
        Subdomain::All => domain.active_nodes().collect(),
        Subdomain::Interior => domain.interior_nodes().collect(),
        Subdomain::Ball { center, radius } => ball_nodes(domain, center, radius),
        Subdomain::Inset(r) => domain
            .active_nodes()
            .filter(|&k| domain.distance_to_boundary(domain.coords(k)) >= r - 1e-12)
            .collect(),
    }
}

/// `sup |u(x) - u(y)| / |x - y|^beta` over distinct node pairs of `sub`.
pub fn holder_seminorm(u: &ScalarField, beta: f64, sub: Subdomain) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidProbe(format!(
            "Hölder exponent {beta} outside (0, 1]"
        )));
    }
    let d = u.domain();
    let mut nodes = subdomain_nodes(d, sub);
    if nodes.len() < 2 {
        return Err(Error::InvalidProbe(format!(
            "subdomain {sub:?} has fewer than two nodes"
        )));
    }
    if nodes.len() > EXACT_LIMIT {
        let stride = nodes.len().div_ceil(EXACT_LIMIT);
        log::debug!(
            "seminorm over {} nodes sampled with stride {stride}",
            nodes.len()
        );
        nodes = nodes.into_iter().step_by(stride).collect();
    }
    let pts: Vec<(Point, f64)> = nodes.iter().map(|&k| (d.coords(k), u.value(k))).collect();
    Ok((0..pts.len())
        .into_par_iter()
        .map(|i| {
            let (x, ux) = pts[i];
            pts[i + 1..]
                .iter()
                .map(|&(y, uy)| (ux - uy).abs() / dist(x, y).powf(beta))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillationEntry {
    pub kappa: usize,
    pub radius: f64,
    pub osc: f64,
    pub xi: Point,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OscillationDecay {
    pub entries: Vec<OscillationEntry>,
    /// Slope of `log osc` against `log radius`, minus one.
    pub alpha0: Option<f64>,
    /// Every oscillation vanished: `u` is affine on the probed balls.
    pub affine: bool,
    /// Balls below three nodes across were dropped.
    pub truncated: bool,
}

const AFFINE_OSC: f64 = 1e-12;

/// Least-squares affine fit `u ~ c + xi.(x - center)`; returns `xi` and the
/// oscillation of the remainder `u - xi.x`.
fn affine_oscillation(u: &ScalarField, nodes: &[usize], center: Point) -> Result<(Point, f64)> {
    let d = u.domain();
    let cols = d.dim() + 1;
    let mut a = DMatrix::zeros(nodes.len(), cols);
    let mut rhs = DVector::zeros(nodes.len());
    for (r, &k) in nodes.iter().enumerate() {
        let x = d.coords(k);
        a[(r, 0)] = 1.0;
        for c in 1..cols {
            a[(r, c)] = x[c - 1] - center[c - 1];
        }
        rhs[r] = u.value(k);
    }
    let svd = a.svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidProbe(format!("affine fit failed: {e}")))?;
    let xi = [coef[1], if cols == 3 { coef[2] } else { 0.0 }];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &k in nodes {
        let x = d.coords(k);
        let r = u.value(k) - xi[0] * x[0] - xi[1] * x[1];
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((xi, hi - lo))
}

/// Oscillation of `u - xi_k.x` on `B_{sigma^k}(center)` for `k = 0..=K`.
pub fn oscillation_decay(
    u: &ScalarField,
    center: Point,
    sigma: f64,
    k_max: usize,
) -> Result<OscillationDecay> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidProbe(format!(
            "sigma = {sigma} outside (0, 1)"
        )));
    }
    let d = u.domain();
    let mut entries = Vec::new();
    let mut truncated = false;
    for kappa in 0..=k_max {
        let radius = sigma.powi(kappa as i32);
        if radius < d.h() {
            truncated = true;
            break;
        }
        let nodes = ball_nodes(d, center, radius);
        if nodes.len() < d.dim() + 2 {
            truncated = true;
            break;
        }
        let (xi, osc) = affine_oscillation(u, &nodes, center)?;
        entries.push(OscillationEntry {
            kappa,
            radius,
            osc,
            xi,
            nodes: nodes.len(),
        });
    }
    if truncated {
        log::warn!(
            "oscillation table truncated after {} balls at h = {}",
            entries.len(),
            d.h()
        );
    }
    if entries.is_empty() {
        return Err(Error::InvalidProbe(format!(
            "no ball around {center:?} is resolved at h = {}",
            d.h()
        )));
    }
    let affine = entries.iter().all(|e| e.osc <= AFFINE_OSC);
    let usable: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.osc > AFFINE_OSC)
        .map(|e| (e.radius.ln(), e.osc.ln()))
        .collect();
    let alpha0 = if affine || usable.len() < 2 {
        None
    } else {
        let n = usable.len() as f64;
        let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
        let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx - 1.0)
    };
    Ok(OscillationDecay {
        entries,
        alpha0,
        affine,
        truncated,
    })
}

/// Upper end of the admissible window for the gradient Hölder exponent;
/// the lower end is 0.
pub fn expected_alpha_window(
    p_plus: f64,
    p_minus: f64,
    alpha_homog: f64,
    sigma: f64,
) -> Result<(f64, f64)> {
    if !(p_plus >= 0.0 && p_minus >= 0.0 && alpha_homog > 0.0 && sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidProbe(
            "window needs p >= 0, alpha > 0 and sigma in (0, 1)".into(),
        ));
    }
    let upper = alpha_homog
        .min(1.0 / (p_plus.max(p_minus) + 1.0))
        .min(2f64.ln() / -sigma.ln());
    Ok((0.0, upper))
}

/// `u(x0 + tau y) / M` on the unit ball together with the matching problem.
#[derive(Clone, Debug)]
pub struct SmallnessRescaling {
    pub x0: Point,
    pub tau: f64,
    /// The normalizing constant `M`.
    pub m: f64,
    /// Bound for the rescaled right-hand side.
    pub c: f64,
    pub field: ScalarField,
    pub spec: ProblemSpec,
    pub sup: f64,
    pub osc: f64,
}

/// Linear (bilinear in 2D) interpolation on the active lattice, falling back
/// to the nearest active node when a cell corner is missing.
pub fn sample(u: &ScalarField, p: Point) -> Option<f64> {
    let d = u.domain();
    let o = d.origin();
    let h = d.h();
    let (nx, ny) = d.lattice_dims();
    let fx = (p[0] - o[0]) / h;
    let fy = if d.dim() == 1 { 0.0 } else { (p[1] - o[1]) / h };
    if fx < -0.5 || fy < -0.5 || fx > nx as f64 - 0.5 || fy > ny as f64 - 0.5 {
        return None;
    }
    let i = (fx.floor().max(0.0) as usize).min(nx.saturating_sub(2));
    let j = if d.dim() == 1 {
        0
    } else {
        (fy.floor().max(0.0) as usize).min(ny.saturating_sub(2))
    };
    let (tx, ty) = (
        (fx - i as f64).clamp(0.0, 1.0),
        if d.dim() == 1 {
            0.0
        } else {
            (fy - j as f64).clamp(0.0, 1.0)
        },
    );
    let corners: &[(usize, usize, f64)] = if d.dim() == 1 {
        &[(0, 0, 1.0 - tx), (1, 0, tx)]
    } else {
        &[
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ]
    };
    let mut acc = 0.0;
    for &(di, dj, w) in corners {
        let k = (j + dj) * nx + i + di;
        if !d.is_active(k) {
            return d.node_at(p).map(|k| u.value(k));
        }
        acc += w * u.value(k);
    }
    Some(acc)
}

fn pull_back(
    src: &ScalarField,
    target: &Arc<Domain>,
    x0: Point,
    tau: f64,
    role: Role,
    scale: impl Fn(usize, f64) -> f64,
) -> Result<ScalarField> {
    let mut values = vec![0.0; target.len()];
    for k in target.active_nodes() {
        let y = target.coords(k);
        let x = [x0[0] + tau * y[0], x0[1] + tau * y[1]];
        let v = sample(src, x)
            .ok_or_else(|| Error::Smallness(format!("point {x:?} is outside the lattice")))?;
        values[k] = scale(k, v);
    }
    ScalarField::new(target.clone(), values, role)
}

/// Blows `u` up around `x0` at scale `tau = eps0^(1/2)` into the smallness
/// regime and asserts its contract: `||u'|| <= 1`, `osc u' <= 1`, a
/// right-hand side bounded by `eps0`, and an elliptic rescaled operator.
pub fn rescale_smallness(
    u: &ScalarField,
    spec: &ProblemSpec,
    eps0: f64,
    x0: Point,
) -> Result<SmallnessRescaling> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::Smallness(format!("eps0 = {eps0} outside (0, 1)")));
    }
    if !u.same_domain(spec.forcing()) {
        return Err(Error::DomainMismatch("rescaled field".into()));
    }
    let d = u.domain();
    let tau = eps0.sqrt();
    if d.distance_to_boundary(x0) < tau - 1e-12 {
        return Err(Error::Smallness(format!(
            "ball of radius {tau} around {x0:?} does not fit in the domain"
        )));
    }
    let f_norm = spec.forcing().sup_norm();
    let (p_lo, p_hi) = match spec.law().exponents() {
        Exponents::Constant {
            p_plus, p_minus, ..
        } => (*p_plus, *p_minus),
        Exponents::Variable { p, .. } => {
            let lo = d
                .active_nodes()
                .map(|k| p.value(k))
                .fold(f64::INFINITY, f64::min);
            (lo, p.sup_norm())
        }
    };
    let m = 16.0
        * (1.0
            + u.sup_norm()
            + f_norm
            + f_norm.powf(1.0 / (p_lo + 1.0))
            + f_norm.powf(1.0 / (p_hi + 1.0)));
    let c = (tau.powf(p_lo + 2.0) / m.powf(p_lo + 1.0))
        .max(tau.powf(p_hi + 2.0) / m.powf(p_hi + 1.0))
        .max(tau * tau / m)
        * f_norm;

    // Unit ball resolved at the original spacing, at least 5 nodes across.
    let steps = (tau / d.h()).round().max(4.0);
    let h1 = 1.0 / steps;
    let target = Arc::new(match d.shape() {
        Shape::Interval { .. } => Domain::interval(-1.0, 1.0, h1)?,
        _ => Domain::disk([0.0, 0.0], 1.0, h1)?,
    });
    let field = pull_back(u, &target, x0, tau, Role::Solution, |_, v| v / m)?;

    let ratio = m / tau;
    let law = spec.law();
    let rescaled_law = match law.exponents() {
        Exponents::Constant {
            p_plus,
            p_minus,
            q,
            s,
        } => {
            let a = pull_back(law.a(), &target, x0, tau, Role::Coefficient, |_, v| {
                ratio.powf(q - p_plus) * v
            })?;
            let b = pull_back(law.b(), &target, x0, tau, Role::Coefficient, |_, v| {
                ratio.powf(s - p_minus) * v
            })?;
            DegeneracyLaw::constant(*p_plus, *p_minus, *q, *s, a, b)?
        }
        Exponents::Variable { p, q, s } => {
            let p1 = pull_back(p, &target, x0, tau, Role::Coefficient, |_, v| v)?;
            let q1 = pull_back(q, &target, x0, tau, Role::Coefficient, |_, v| v)?;
            let s1 = pull_back(s, &target, x0, tau, Role::Coefficient, |_, v| v)?;
            let a = pull_back(law.a(), &target, x0, tau, Role::Coefficient, |k, v| {
                ratio.powf(q1.value(k) - p1.value(k)) * v
            })?;
            let b = pull_back(law.b(), &target, x0, tau, Role::Coefficient, |k, v| {
                ratio.powf(s1.value(k) - p1.value(k)) * v
            })?;
            DegeneracyLaw::variable(p1, q1, s1, a, b)?
        }
    };
    // Exact phase-wise rescaling of f; its modulus is bounded by `c`.
    let forcing = pull_back(spec.forcing(), &target, x0, tau, Role::Forcing, |k, v| {
        let w = field.value(k);
        let p = match law.exponents() {
            Exponents::Constant {
                p_plus, p_minus, ..
            } if w > 0.0 => Some(*p_plus),
            Exponents::Constant { p_minus, .. } if w < 0.0 => Some(*p_minus),
            Exponents::Constant { .. } => None,
            Exponents::Variable { .. } => match rescaled_law.exponents() {
                Exponents::Variable { p, .. } => Some(p.value(k)),
                _ => None,
            },
        };
        match p {
            Some(p) => v * tau.powf(p + 2.0) / m.powf(p + 1.0),
            None => v * tau * tau / m,
        }
    })?;
    let boundary = field.clone().with_role(Role::Boundary)?;
    let operator = spec.operator().clone().scaled(tau * tau / m)?;
    let rescaled = ProblemSpec::new(
        operator.clone(),
        rescaled_law,
        forcing.clone(),
        boundary,
        spec.epsilon().max(1e-3),
    )?
    .with_switch_source(SwitchSource::External(field.clone()))?
    .with_band(spec.band())?
    .with_epsilon(0.0)?;

    let sup = field.sup_norm();
    let osc = field.oscillation_over(target.active_nodes());
    let check = check_ellipticity(&operator, d.dim(), 200, 0x5eed);
    let mut failures = Vec::new();
    if sup > 1.0 {
        failures.push(format!("sup norm {sup} > 1"));
    }
    if osc > 1.0 {
        failures.push(format!("oscillation {osc} > 1"));
    }
    if c > eps0 {
        failures.push(format!("right-hand constant {c} > {eps0}"));
    }
    if forcing.sup_norm() > c * (1.0 + 1e-12) {
        failures.push(format!(
            "rescaled forcing {} exceeds its bound {c}",
            forcing.sup_norm()
        ));
    }
    if !check.passes(1e-10) {
        failures.push(format!("rescaled operator fails ellipticity: {check:?}"));
    }
    if !failures.is_empty() {
        return Err(Error::Smallness(failures.join("; ")));
    }
    Ok(SmallnessRescaling {
        x0,
        tau,
        m,
        c,
        field,
        spec: rescaled,
        sup,
        osc,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOptions {
    pub betas: Vec<f64>,
    pub subdomain: Subdomain,
    pub rho: f64,
    pub probe_centers: usize,
    pub seed: u64,
    pub variant: HolderVariant,
    pub decay_center: Point,
    pub sigma: f64,
    pub k_max: usize,
    /// Exponent of the homogeneous problem, for the theoretical window.
    pub alpha_homog: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            betas: vec![0.25, 0.5, 0.75],
            subdomain: Subdomain::Interior,
            rho: 0.25,
            probe_centers: 5,
            seed: 0,
            variant: HolderVariant::default(),
            decay_center: [0.0, 0.0],
            sigma: 0.5,
            k_max: 6,
            alpha_homog: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub z0: Point,
    pub x0: Point,
    pub value: f64,
    pub constants: HolderConstants,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub seminorms: Vec<(f64, f64)>,
    pub bound_checks: Vec<BoundCheck>,
    pub decay: OscillationDecay,
    pub alpha_window: (f64, f64),
    pub sigma: f64,
}

/// Random ball center whose `rho`-ball fits, and a point in its half ball.
fn probe_point<R: Rng>(rng: &mut R, d: &Domain, rho: f64) -> Option<(Point, Point)> {
    let fits: Vec<usize> = d
        .active_nodes()
        .filter(|&k| d.distance_to_boundary(d.coords(k)) >= rho)
        .collect();
    if fits.is_empty() {
        return None;
    }
    let z0 = d.coords(fits[rng.random_range(0..fits.len())]);
    let r = 0.5 * rho * rng.random::<f64>();
    let x0 = if d.dim() == 1 {
        [z0[0] + if rng.random_bool(0.5) { r } else { -r }, 0.0]
    } else {
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        [z0[0] + r * t.cos(), z0[1] + r * t.sin()]
    };
    Some((z0, x0))
}

pub fn probe(
    u: &ScalarField,
    spec: &ProblemSpec,
    options: &ProbeOptions,
) -> Result<RegularityReport> {
    let d = u.domain();
    let seminorms = options
        .betas
        .iter()
        .map(|&b| Ok((b, holder_seminorm(u, b, options.subdomain)?)))
        .collect::<Result<Vec<_>>>()?;
    let op = spec.operator();
    let mut bound_checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for &(beta0, _) in seminorms.iter().filter(|(b, _)| *b < 1.0) {
        let hc = holder_constants(
            beta0,
            options.rho,
            u.sup_norm(),
            spec.forcing().sup_norm(),
            op.lambda(),
            op.cap_lambda(),
            d.dim(),
            options.variant,
        )?;
        for _ in 0..options.probe_centers {
            let (z0, x0) = probe_point(&mut rng, d, options.rho).ok_or_else(|| {
                Error::InvalidProbe(format!("no ball of radius {} fits in {d}", options.rho))
            })?;
            let value = check_holder_bound(u, z0, x0, &hc)?;
            bound_checks.push(BoundCheck {
                z0,
                x0,
                value,
                constants: hc,
            });
        }
    }
    let decay = oscillation_decay(u, options.decay_center, options.sigma, options.k_max)?;
    let (pp, pm) = match spec.law().exponents() {
        Exponents::Constant {
            p_plus, p_minus, ..
        } => (*p_plus, *p_minus),
        Exponents::Variable { p, .. } => (p.sup_norm(), p.sup_norm()),
    };
    let alpha_window = expected_alpha_window(pp, pm, options.alpha_homog, options.sigma)?;
    Ok(RegularityReport {
        seminorms,
        bound_checks,
        decay,
        alpha_window,
        sigma: options.sigma,
    })
}

/// `|x|^{(p+2)/(p+1)}`, the one-dimensional profile whose gradient is
/// exactly `1/(p+1)`-Hölder.
pub fn exact_profile(p: f64, x: f64) -> f64 {
    pow0(x.abs(), (p + 2.0) / (p + 1.0))
}
