//! Quadratic touching tests: the viscosity sub/supersolution definitions
//! checked directly on a sampled field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{dist, gradient, hessian, GradientMode, Point, ScalarField};
use crate::operators::{random_psd, Exponents, Phase, SymMatrix};
use crate::scheme::{envelope_value, tolerance, MollifiedSwitch, ProblemSpec, Side};

/// Which equation the touching inequality is evaluated against.
#[derive(Clone, Debug, PartialEq)]
pub enum TouchMode {
    /// The switched equation with sign sets from `v`: `H_q F` on `{v > band}`,
    /// `H_s F` on `{v < -band}` and the branch envelope against `||f||` on
    /// the band.
    Raw,
    /// The regularized equation `G(Dphi)(eps u + F) = f` under a frozen switch.
    Regularized(MollifiedSwitch),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub trials: usize,
    pub seed: u64,
    pub mode: TouchMode,
    /// Clamp for the Hessian of `u` the drawn quadratics start from; the
    /// random semidefinite part has entries of the same order.
    pub coefficient_bound: f64,
    /// Contacts farther than this from the anchor are discarded; raised to
    /// at least `3h`.
    pub search_radius: f64,
    /// Negate the random gradient perturbation; pairs a scan of `u` with the
    /// scan of `-u` under the mirrored equation, whose quadratics are then
    /// exactly the negated ones.
    pub mirror: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            trials: 200,
            seed: 0,
            mode: TouchMode::Raw,
            coefficient_bound: 4.0,
            search_radius: 0.125,
            mirror: false,
        }
    }
}

/// `phi(x) = offset + b.(x - c) + (x - c)^T A (x - c) / 2`, recorded after
/// the shift that makes it touch `u` at `node`.
#[derive(Clone, Debug, PartialEq)]
pub struct TouchingCertificate {
    pub trial: usize,
    pub node: usize,
    pub coords: Point,
    pub side: Side,
    pub region: Phase,
    /// Anchor of the drawn quadratic.
    pub center: Point,
    pub b: Point,
    /// `[a11, a12, a22]`.
    pub a: [f64; 3],
    pub offset: f64,
    /// Amount by which the inequality fails; nonpositive when it holds.
    pub value: f64,
    pub h_max: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanReport {
    pub certificates: Vec<TouchingCertificate>,
    /// Touching points on the boundary, which carry no information.
    pub discarded: usize,
    pub tol: f64,
}

impl ScanReport {
    pub fn violations(&self) -> usize {
        self.certificates.iter().filter(|c| c.violation).count()
    }

    pub fn worst(&self) -> f64 {
        self.certificates
            .iter()
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Quadratic {
    center: Point,
    b: Point,
    a: [f64; 3],
}

impl Quadratic {
    fn eval(&self, x: Point) -> f64 {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        self.b[0] * dx
            + self.b[1] * dy
            + 0.5 * (self.a[0] * dx * dx + 2.0 * self.a[1] * dx * dy + self.a[2] * dy * dy)
    }

    fn gradient(&self, x: Point) -> Point {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        [
            self.b[0] + self.a[0] * dx + self.a[1] * dy,
            self.b[1] + self.a[1] * dx + self.a[2] * dy,
        ]
    }

    fn hessian(&self, dim: usize) -> SymMatrix {
        if dim == 1 {
            SymMatrix::diagonal(&[self.a[0]])
        } else {
            SymMatrix::from_row_slice(2, &[self.a[0], self.a[1], self.a[1], self.a[2]])
                .expect("symmetric by construction")
        }
    }
}

/// Random quadratic anchored at a random interior node. Its gradient there
/// is the centered gradient of `u` plus a perturbation up to a quarter of the
/// search radius; its Hessian is the discrete Hessian of `u` at the anchor,
/// clamped to `[-bound, bound]`, plus (sub side) or minus (super side) a
/// random positive semidefinite matrix, so that contact happens nearby.
fn draw(
    u: &ScalarField,
    seed: u64,
    trial: usize,
    bound: f64,
    radius: f64,
    mirror: bool,
    side: Side,
) -> Result<Quadratic> {
    let d = u.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let interior: Vec<usize> = d.interior_nodes().collect();
    let anchor = interior[rng.random_range(0..interior.len())];
    let n = d.dim();
    let r = 0.25 * radius;
    let db = [
        rng.random_range(-r..=r),
        if n == 2 {
            rng.random_range(-r..=r)
        } else {
            0.0
        },
    ];
    let p = random_psd(&mut rng, n, (0.5 * bound).sqrt());
    let s = if mirror { -1.0 } else { 1.0 };
    let t = match side {
        Side::Sub => 1.0,
        Side::Super => -1.0,
    };
    let du = gradient(u, anchor, GradientMode::Centered)?;
    let (m11, m12, m22) = hessian(u, anchor)?.matrix_entries();
    let c = |m: f64| m.clamp(-bound, bound);
    let a = if n == 1 {
        [c(m11) + t * p.get(0, 0), 0.0, 0.0]
    } else {
        [
            c(m11) + t * p.get(0, 0),
            c(m12) + t * p.get(0, 1),
            c(m22) + t * p.get(1, 1),
        ]
    };
    Ok(Quadratic {
        center: d.coords(anchor),
        b: [du[0] + s * db[0], du[1] + s * db[1]],
        a,
    })
}

/// Steepest ascent of `u - phi` (descent on the super side) over the
/// stencil, starting at the anchor; ties go to the lowest node index. Stops
/// at a node no neighbour improves on, a discrete local maximum (minimum).
/// `None` when the walk reaches the boundary or leaves the ball of `radius`.
fn contact(u: &ScalarField, phi: &Quadratic, side: Side, radius: f64) -> Option<(usize, f64)> {
    let d = u.domain();
    let sign = match side {
        Side::Sub => 1.0,
        Side::Super => -1.0,
    };
    let score = |k: usize| sign * (u.value(k) - phi.eval(d.coords(k)));
    let mut k = d.node_at(phi.center)?;
    loop {
        if !d.is_interior(k) || dist(d.coords(k), phi.center) > radius {
            return None;
        }
        let here = score(k);
        let mut next = (k, here);
        for &(di, dj) in d.stencil() {
            for off in [(di, dj), (-di, -dj)] {
                let j = d.neighbor(k, off)?;
                let g = score(j);
                if g > next.1 || (g == next.1 && next.0 != k && j < next.0) {
                    next = (j, g);
                }
            }
        }
        if next.0 == k {
            return Some((k, sign * here));
        }
        k = next.0;
    }
}

/// Runs `trials` seeded touching tests on both sides. Certificates are
/// returned in trial order, sub side before super side.
pub fn touching_scan(
    u: &ScalarField,
    spec: &ProblemSpec,
    v: &ScalarField,
    options: &ScanOptions,
) -> Result<ScanReport> {
    if options.trials == 0 {
        return Err(Error::InvalidProbe(
            "touching scan needs at least one trial".into(),
        ));
    }
    if !u.same_domain(spec.forcing()) || !v.same_domain(spec.forcing()) {
        return Err(Error::DomainMismatch("touching scan fields".into()));
    }
    if let TouchMode::Regularized(sw) = &options.mode {
        if !sw.chi_plus().same_domain(u) {
            return Err(Error::DomainMismatch("touching scan switch".into()));
        }
    }
    let d = u.domain();
    let f_norm = spec.forcing().sup_norm();
    let band = spec.band_width();
    let law = spec.law();
    let switched = matches!(law.exponents(), Exponents::Constant { .. });
    let radius = options.search_radius.max(3.0 * d.h());
    let results: Vec<(Vec<TouchingCertificate>, usize)> = (0..options.trials)
        .into_par_iter()
        .map(|trial| {
            let mut certs = Vec::new();
            let mut discarded = 0;
            for side in [Side::Sub, Side::Super] {
                let phi = draw(
                    u,
                    options.seed,
                    trial,
                    options.coefficient_bound,
                    radius,
                    options.mirror,
                    side,
                )?;
                let f_a = spec.operator().evaluate(&phi.hessian(d.dim()));
                let Some((node, shift)) = contact(u, &phi, side, radius) else {
                    discarded += 1;
                    continue;
                };
                let x = d.coords(node);
                let grad = phi.gradient(x);
                let f = spec.forcing().value(node);
                let region = crate::scheme::phase_with_band(v.value(node), band);
                let (value, h_max) = match &options.mode {
                    TouchMode::Raw => {
                        let r = grad[0].hypot(grad[1]);
                        let rhs = match (region, switched, side) {
                            (Phase::Zero, true, Side::Sub) => f_norm,
                            (Phase::Zero, true, Side::Super) => -f_norm,
                            _ => f,
                        };
                        let e =
                            envelope_value(law, node, region, (r, r), [0.0, 0.0], f_a, rhs, side);
                        (e.value, e.h_max)
                    }
                    TouchMode::Regularized(sw) => {
                        let g = sw.g_factor(node, grad);
                        (g * (sw.epsilon() * u.value(node) + f_a) - f, g)
                    }
                };
                let value = match side {
                    Side::Sub => value,
                    Side::Super => -value,
                };
                certs.push(TouchingCertificate {
                    trial,
                    node,
                    coords: x,
                    side,
                    region,
                    center: phi.center,
                    b: phi.b,
                    a: phi.a,
                    offset: shift,
                    value,
                    h_max,
                    violation: false,
                });
            }
            Ok((certs, discarded))
        })
        .collect::<Result<_>>()?;
    let mut certificates: Vec<TouchingCertificate> = Vec::new();
    let mut discarded = 0;
    for (c, n) in results {
        certificates.extend(c);
        discarded += n;
    }
    let h_max = certificates.iter().map(|c| c.h_max).fold(0.0, f64::max);
    let tol = tolerance(d.h(), f_norm, h_max);
    for c in &mut certificates {
        c.violation = c.value > tol;
    }
    if certificates.is_empty() {
        log::warn!(
            "all {} touching trials landed on the boundary",
            options.trials
        );
    }
    Ok(ScanReport {
        certificates,
        discarded,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Domain, Role};
    use crate::operators::{DegeneracyLaw, EllipticOperator};
    use crate::scheme::SwitchSource;
    use std::sync::Arc;

    fn exact_spec(h: f64) -> (ScalarField, ProblemSpec) {
        let d = Arc::new(Domain::interval(-1.0, 1.0, h).unwrap());
        let zero = ScalarField::zeros(d.clone(), Role::Coefficient);
        let law = DegeneracyLaw::constant(1.0, 1.0, 1.0, 1.0, zero.clone(), zero).unwrap();
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0].abs().powf(1.5)).unwrap();
        let spec = ProblemSpec::new(
            EllipticOperator::neg_trace(),
            law,
            ScalarField::constant(d.clone(), Role::Forcing, -1.125).unwrap(),
            u.clone().with_role(Role::Boundary).unwrap(),
            0.1,
        )
        .unwrap()
        .with_switch_source(SwitchSource::External(u.clone()))
        .unwrap()
        .with_epsilon(0.0)
        .unwrap();
        (u, spec)
    }

    #[test]
    fn exact_profile_has_no_violations() {
        let (u, spec) = exact_spec(1.0 / 128.0);
        let r = touching_scan(&u, &spec, &u, &ScanOptions::default()).unwrap();
        let w = r
            .certificates
            .iter()
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .unwrap();
        assert_eq!(r.violations(), 0, "worst {:?} tol {}", w, r.tol);
        assert_eq!(r.certificates.len() + r.discarded, 400);
        assert!(
            r.certificates.len() >= 200,
            "only {} contacts",
            r.certificates.len()
        );
    }

    #[test]
    fn contacts_are_local_extrema() {
        let (u, spec) = exact_spec(1.0 / 64.0);
        let r = touching_scan(
            &u,
            &spec,
            &u,
            &ScanOptions {
                trials: 40,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!r.certificates.is_empty());
        let d = u.domain();
        for c in &r.certificates {
            let phi = Quadratic {
                center: c.center,
                b: c.b,
                a: c.a,
            };
            let g = |k: usize| u.value(k) - phi.eval(d.coords(k));
            for &(di, dj) in d.stencil() {
                for off in [(di, dj), (-di, -dj)] {
                    let k = d.neighbor(c.node, off).unwrap();
                    match c.side {
                        Side::Sub => assert!(g(k) <= g(c.node)),
                        Side::Super => assert!(g(k) >= g(c.node)),
                    }
                }
            }
        }
    }

    #[test]
    fn checkerboard_is_caught() {
        let (u, spec) = exact_spec(1.0 / 64.0);
        let noisy = ScalarField::from_fn(u.domain_arc().clone(), Role::Solution, |p| {
            let i = (p[0] * 64.0).round() as i64;
            p[0].abs().powf(1.5) + if i % 2 == 0 { 0.5 } else { -0.5 }
        })
        .unwrap();
        let r = touching_scan(&noisy, &spec, &noisy, &ScanOptions::default()).unwrap();
        assert!(
            r.violations() > 0,
            "worst {} tol {} certs {} discarded {}",
            r.worst(),
            r.tol,
            r.certificates.len(),
            r.discarded
        );
        assert!(r.worst() > r.tol);
    }

    #[test]
    fn deterministic_under_seed() {
        let (u, spec) = exact_spec(1.0 / 64.0);
        let o = ScanOptions {
            trials: 50,
            seed: 7,
            ..Default::default()
        };
        assert_eq!(
            touching_scan(&u, &spec, &u, &o).unwrap(),
            touching_scan(&u, &spec, &u, &o).unwrap()
        );
    }

    #[test]
    fn mirrored_scan_matches_trial_for_trial() {
        let d = Arc::new(Domain::rect([-1.0, 1.0], [-1.0, 1.0], 1.0 / 16.0).unwrap());
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| {
            p[0] * p[0] - 0.5 * p[1] + 0.3 * p[0] * p[1]
        })
        .unwrap();
        let law = DegeneracyLaw::constant(
            1.0,
            0.5,
            2.0,
            1.5,
            ScalarField::from_fn(d.clone(), Role::Coefficient, |p| 1.0 + p[0]).unwrap(),
            ScalarField::constant(d.clone(), Role::Coefficient, 0.3).unwrap(),
        )
        .unwrap();
        let spec = ProblemSpec::new(
            EllipticOperator::pucci_plus(0.5, 2.0).unwrap(),
            law,
            ScalarField::from_fn(d.clone(), Role::Forcing, |p| p[1].sin()).unwrap(),
            u.clone().with_role(Role::Boundary).unwrap(),
            0.1,
        )
        .unwrap()
        .with_switch_source(SwitchSource::External(u.clone()))
        .unwrap()
        .with_epsilon(0.0)
        .unwrap();
        let neg = u.map(Role::Solution, |x| -x).unwrap();
        let mspec = spec.mirrored();
        let o = ScanOptions {
            trials: 60,
            seed: 3,
            ..Default::default()
        };
        let a = touching_scan(&u, &spec, &u, &o).unwrap();
        let b = touching_scan(
            &neg,
            &mspec,
            &neg,
            &ScanOptions {
                mirror: true,
                ..o.clone()
            },
        )
        .unwrap();
        let pick = |r: &ScanReport, side: Side| {
            r.certificates
                .iter()
                .filter(|c| c.side == side)
                .cloned()
                .collect::<Vec<_>>()
        };
        for (x, y) in [
            (pick(&a, Side::Sub), pick(&b, Side::Super)),
            (pick(&a, Side::Super), pick(&b, Side::Sub)),
        ] {
            assert_eq!(x.len(), y.len());
            assert!(!x.is_empty());
            for (c, m) in x.iter().zip(&y) {
                assert_eq!((c.trial, c.node), (m.trial, m.node));
                assert!(
                    (c.value - m.value).abs() <= 1e-12 * (1.0 + c.value.abs()),
                    "{} vs {}",
                    c.value,
                    m.value
                );
            }
        }

        let sw = MollifiedSwitch::sharp(&u, spec.law(), 0.05).unwrap();
        let msw = sw.mirrored(mspec.law()).unwrap();
        let reg = |m| ScanOptions {
            mode: TouchMode::Regularized(m),
            ..o.clone()
        };
        let a = touching_scan(&u, &spec, &u, &reg(sw)).unwrap();
        let b = touching_scan(
            &neg,
            &mspec,
            &neg,
            &ScanOptions {
                mirror: true,
                ..reg(msw)
            },
        )
        .unwrap();
        for (c, m) in pick(&a, Side::Sub).iter().zip(&pick(&b, Side::Super)) {
            assert_eq!(c.node, m.node);
            assert!((c.value - m.value).abs() <= 1e-12 * (1.0 + c.value.abs()));
        }
    }
}
