//! Explicit global super- and subsolutions bracketing every solve.
//!
//! The supersolution is the lower envelope of the concave paraboloid
//! `w~ = Gamma2 - Gamma1 |x - x0|^2 / (2 lambda n)` and of the family
//! `g(y) + tau + Gamma_tau w_y` with `w_y = L (r*^-gamma - |x - x_y|^-gamma)`
//! attached to exterior spheres `B_{r*}(x_y)` touching the boundary at `y`.
//! None of the constants depend on the switch, the exponents or the
//! coefficients, so one pair of barriers serves every outer iterate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{dist, Domain, Point, Role, ScalarField, Shape};
use crate::scheme::ProblemSpec;

pub const DEFAULT_TAU_GRID: [f64; 3] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierConstants {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
    pub l: f64,
    pub r_star: f64,
    pub r_tilde: f64,
    pub diameter: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    /// `lambda n`.
    pub lambda_n: f64,
    /// Vertex of the paraboloid, at distance >= 1 from the domain.
    pub x0: Point,
}

/// Exterior-sphere radius used for each shape: a quarter of the shortest
/// side for intervals and boxes, half the radius for disks.
pub fn exterior_radius(domain: &Domain) -> f64 {
    match *domain.shape() {
        Shape::Interval { lo, hi } => (hi - lo) / 4.0,
        Shape::Rect { x, y } => (x[1] - x[0]).min(y[1] - y[0]) / 4.0,
        Shape::Disk { radius, .. } => radius / 2.0,
    }
}

fn paraboloid_vertex(domain: &Domain) -> Point {
    match *domain.shape() {
        Shape::Interval { hi, .. } => [hi + 1.0, 0.0],
        Shape::Rect { x, y } => [x[1] + 1.0, 0.5 * (y[0] + y[1])],
        Shape::Disk { center, radius } => [center[0] + radius + 1.0, center[1]],
    }
}

pub fn barrier_constants(spec: &ProblemSpec) -> BarrierConstants {
    let domain = spec.domain();
    let n = domain.dim() as f64;
    let (lambda, cap) = (spec.operator().lambda(), spec.operator().cap_lambda());
    let f_norm = spec.forcing().sup_norm();
    let g_norm = spec.boundary().sup_norm_boundary();
    let diameter = domain.diameter();
    let gamma1 = f_norm.max(lambda * n);
    let gamma2 = 16.0 * (1.0 + diameter).powi(2) * gamma1 / (lambda * n) + g_norm;
    let gamma = 2.0f64.max(1.0 / lambda + n * cap / lambda) + 1.0;
    let r_star = exterior_radius(domain);
    let r_tilde = r_star + diameter;
    let l = (r_tilde.powf(gamma + 1.0) / gamma)
        .max((f_norm + g_norm) * r_tilde.powf(gamma + 2.0) / gamma);
    BarrierConstants {
        gamma1,
        gamma2,
        gamma,
        l,
        r_star,
        r_tilde,
        diameter,
        f_norm,
        g_norm,
        lambda_n: lambda * n,
        x0: paraboloid_vertex(domain),
    }
}

/// Center `x_y` of an exterior ball of radius `r*` whose closure meets the
/// closed domain only at (the boundary point nearest to) `y`.
///
/// Box faces push along the outward normal and corners along the diagonal.
/// Disk ring nodes are first projected radially onto the circle, so the
/// ball never contains a lattice node (though for ring nodes off the circle
/// it may touch a different boundary node).
pub fn exterior_center(domain: &Domain, node: usize, r_star: f64) -> Result<Point> {
    if !domain.is_boundary(node) {
        return Err(Error::ExteriorSphere(format!(
            "node {node} is not a boundary node"
        )));
    }
    let y = domain.coords(node);
    let (nx, ny) = domain.lattice_dims();
    let (i, j) = domain.grid_index(node);
    match *domain.shape() {
        Shape::Interval { .. } => {
            let sign = if i == 0 { -1.0 } else { 1.0 };
            Ok([y[0] + sign * r_star, 0.0])
        }
        Shape::Rect { .. } => {
            let sx = if i == 0 {
                -1.0
            } else if i == nx - 1 {
                1.0
            } else {
                0.0
            };
            let sy = if j == 0 {
                -1.0
            } else if j == ny - 1 {
                1.0
            } else {
                0.0
            };
            let len = f64::hypot(sx, sy);
            if len == 0.0 {
                return Err(Error::ExteriorSphere(format!(
                    "node {node} is not on the box edge"
                )));
            }
            Ok([y[0] + r_star * sx / len, y[1] + r_star * sy / len])
        }
        Shape::Disk { center, radius } => {
            let d = dist(y, center);
            if d == 0.0 {
                return Err(Error::ExteriorSphere(
                    "boundary node at the disk center".into(),
                ));
            }
            let reach = (radius + r_star) / d;
            Ok([
                center[0] + (y[0] - center[0]) * reach,
                center[1] + (y[1] - center[1]) * reach,
            ])
        }
    }
}

/// Discrete modulus of continuity of boundary samples:
/// `omega(t) = max |g(x) - g(y)|` over boundary pairs with `|x - y| <= t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryModulus {
    distances: Vec<f64>,
    running_max: Vec<f64>,
}

impl BoundaryModulus {
    pub fn new(g: &ScalarField) -> Self {
        let domain = g.domain();
        let nodes: Vec<usize> = domain.boundary_nodes().collect();
        let mut pairs: Vec<(f64, f64)> = nodes
            .iter()
            .enumerate()
            .flat_map(|(a, &x)| {
                nodes[a + 1..].iter().map(move |&y| {
                    (
                        dist(domain.coords(x), domain.coords(y)),
                        (g.value(x) - g.value(y)).abs(),
                    )
                })
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc: f64 = 0.0;
        let (distances, running_max) = pairs
            .into_iter()
            .map(|(d, v)| {
                acc = acc.max(v);
                (d, acc)
            })
            .unzip();
        BoundaryModulus {
            distances,
            running_max,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.distances.partition_point(|&d| d <= t);
        if idx == 0 {
            0.0
        } else {
            self.running_max[idx - 1]
        }
    }
}

fn w_y(c: &BarrierConstants, x_y: Point, x: Point) -> f64 {
    c.l * (c.r_star.powf(-c.gamma) - dist(x, x_y).powf(-c.gamma))
}

/// One member `g(y) + tau + Gamma_tau w_y` of the barrier family.
#[derive(Clone, Copy, Debug)]
struct Member {
    x_y: Point,
    base: f64,
    gamma_tau: f64,
}

fn members(g: &ScalarField, c: &BarrierConstants, taus: &[f64]) -> Result<Vec<Member>> {
    let domain = g.domain();
    let modulus = BoundaryModulus::new(g);
    let boundary: Vec<usize> = domain.boundary_nodes().collect();
    let mut out = Vec::with_capacity(boundary.len() * taus.len());
    for &y in &boundary {
        let x_y = exterior_center(domain, y, c.r_star)?;
        let py = domain.coords(y);
        for &tau in taus {
            let sup = boundary
                .iter()
                .filter(|&&x| x != y)
                .map(|&x| {
                    let px = domain.coords(x);
                    let excess = (modulus.eval(dist(px, py)) - tau).max(0.0);
                    if excess == 0.0 {
                        0.0
                    } else {
                        excess / w_y(c, x_y, px)
                    }
                })
                .fold(0.0, f64::max);
            let gamma_tau = 4.0 * sup + 1.0;
            // A ring node whose ball touches the circle at another boundary
            // node cannot pay for the data jump there; dropping the member
            // keeps the envelope an upper bound.
            if gamma_tau.is_finite() {
                out.push(Member {
                    x_y,
                    base: g.value(y) + tau,
                    gamma_tau,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::ExteriorSphere(
            "no boundary node admits a finite barrier".into(),
        ));
    }
    Ok(out)
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::InvalidProblem(format!(
            "tau grid {taus:?} must be nonempty inside (0, 1)"
        )));
    }
    Ok(())
}

fn upper_envelope(g: &ScalarField, c: &BarrierConstants, taus: &[f64]) -> Result<ScalarField> {
    check_taus(taus)?;
    let domain = g.domain_arc().clone();
    let family = members(g, c, taus)?;
    let values: Vec<f64> = (0..domain.len())
        .into_par_iter()
        .map(|k| {
            if !domain.is_active(k) {
                return 0.0;
            }
            let x = domain.coords(k);
            let paraboloid = c.gamma2 - c.gamma1 * dist(x, c.x0).powi(2) / (2.0 * c.lambda_n);
            family
                .iter()
                .map(|m| m.base + m.gamma_tau * w_y(c, m.x_y, x))
                .fold(paraboloid, f64::min)
        })
        .collect();
    ScalarField::new(domain, values, Role::Solution)
}

/// `w_bar = min(w~, min_{y, tau} g(y) + tau + Gamma_tau w_y)` over boundary
/// nodes `y` and the sampled `taus`.
pub fn supersolution_field(
    spec: &ProblemSpec,
    constants: &BarrierConstants,
    taus: &[f64],
) -> Result<ScalarField> {
    upper_envelope(spec.boundary(), constants, taus)
}

/// `w_under = -w_bar[-g]`, the mirror image of the supersolution built for
/// the negated boundary datum.
pub fn subsolution_field(
    spec: &ProblemSpec,
    constants: &BarrierConstants,
    taus: &[f64],
) -> Result<ScalarField> {
    let neg_g = spec.boundary().map(Role::Boundary, |v| -v)?;
    let upper = upper_envelope(&neg_g, constants, taus)?;
    upper.map(Role::Solution, |v| -v)
}

/// Both barriers together with their constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Barriers {
    pub constants: BarrierConstants,
    pub lower: ScalarField,
    pub upper: ScalarField,
}

impl Barriers {
    pub fn new(spec: &ProblemSpec, taus: &[f64]) -> Result<Self> {
        let constants = barrier_constants(spec);
        Ok(Barriers {
            lower: subsolution_field(spec, &constants, taus)?,
            upper: supersolution_field(spec, &constants, taus)?,
            constants,
        })
    }

    pub fn midpoint(&self) -> ScalarField {
        self.lower
            .combine(0.5, &self.upper, 0.5)
            .expect("barriers share a domain")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{DegeneracyLaw, EllipticOperator};
    use crate::scheme::{envelope_check, SwitchSource};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn spec_on(
        domain: Domain,
        op: EllipticOperator,
        f: f64,
        g: impl Fn(Point) -> f64,
    ) -> ProblemSpec {
        let d = Arc::new(domain);
        let law = DegeneracyLaw::constant(
            1.0,
            0.5,
            2.0,
            1.5,
            ScalarField::constant(d.clone(), Role::Coefficient, 1.0).unwrap(),
            ScalarField::constant(d.clone(), Role::Coefficient, 0.5).unwrap(),
        )
        .unwrap();
        ProblemSpec::new(
            op,
            law,
            ScalarField::constant(d.clone(), Role::Forcing, f).unwrap(),
            ScalarField::from_fn(d, Role::Boundary, g).unwrap(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn constants_hand_values() {
        let d = Domain::rect(
            [0.0, 1.0 / 2f64.sqrt()],
            [0.0, 1.0 / 2f64.sqrt()],
            1.0 / (16.0 * 2f64.sqrt()),
        )
        .unwrap();
        let spec = spec_on(d, EllipticOperator::neg_trace(), 1.0, |_| 0.0);
        let c = barrier_constants(&spec);
        assert_eq!(c.gamma1, 2.0);
        assert_abs_diff_eq!(c.diameter, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.gamma2, 64.0, epsilon = 1e-9);
        assert_eq!(c.gamma, 4.0);
        assert!(c.l * c.gamma / c.r_tilde.powf(c.gamma + 1.0) >= 1.0 - 1e-12);
        assert!(c.l * c.gamma / c.r_tilde.powf(c.gamma + 2.0) >= c.f_norm + c.g_norm - 1e-12);
    }

    #[test]
    fn exterior_balls_avoid_the_lattice() {
        let shapes = [
            Domain::rect([-1.0, 1.0], [-0.5, 0.5], 0.125).unwrap(),
            Domain::disk([0.3, -0.2], 1.0, 0.1).unwrap(),
            Domain::interval(-1.0, 1.0, 0.125).unwrap(),
        ];
        for d in shapes {
            let r = exterior_radius(&d);
            for y in d.boundary_nodes() {
                let c = exterior_center(&d, y, r).unwrap();
                for x in d.active_nodes() {
                    assert!(
                        dist(d.coords(x), c) >= r * (1.0 - 1e-12),
                        "{d}: node {x} inside ball of {y}"
                    );
                }
            }
            let interior = d.interior_nodes().next().unwrap();
            assert!(exterior_center(&d, interior, r).is_err());
        }
    }

    #[test]
    fn zero_data_barriers_are_nonnegative_and_pinned() {
        let d = Domain::rect([-1.0, 1.0], [-1.0, 1.0], 0.125).unwrap();
        let spec = spec_on(
            d,
            EllipticOperator::pucci_plus(0.5, 2.0).unwrap(),
            0.0,
            |_| 0.0,
        );
        let b = Barriers::new(&spec, &DEFAULT_TAU_GRID).unwrap();
        let dom = spec.domain();
        for k in dom.active_nodes() {
            assert!(b.upper.value(k) >= 0.0);
            assert!(b.upper.value(k) <= b.constants.gamma2 + 1e-12);
            assert!(b.lower.value(k) <= b.upper.value(k));
        }
        for k in dom.boundary_nodes() {
            assert!(b.upper.value(k) <= 1.0 / 32.0 + 1e-12);
        }
    }

    #[test]
    fn modulus_is_monotone() {
        let d = Arc::new(Domain::rect([0.0, 1.0], [0.0, 1.0], 0.125).unwrap());
        let g = ScalarField::from_fn(d, Role::Boundary, |p| (3.0 * p[0]).sin() + p[1]).unwrap();
        let m = BoundaryModulus::new(&g);
        assert_eq!(m.eval(0.0), 0.0);
        let mut last = 0.0;
        for i in 1..20 {
            let v = m.eval(i as f64 * 0.1);
            assert!(v >= last);
            last = v;
        }
        assert!(last <= 2.0 * g.sup_norm_boundary());
    }

    #[test]
    fn barriers_dominate_boundary_data() {
        let d = Domain::disk([0.0, 0.0], 1.0, 0.1).unwrap();
        let spec = spec_on(d, EllipticOperator::neg_trace(), -1.0, |p| {
            p[0] * p[1] + 0.3 * p[0]
        });
        let b = Barriers::new(&spec, &DEFAULT_TAU_GRID).unwrap();
        let g = spec.boundary();
        for k in spec.domain().boundary_nodes() {
            assert!(b.upper.value(k) >= g.value(k));
            assert!(b.lower.value(k) <= g.value(k));
        }
    }

    #[test]
    fn supersolution_residual_is_nonnegative_up_to_tolerance() {
        let d = Domain::rect([-1.0, 1.0], [-1.0, 1.0], 1.0 / 16.0).unwrap();
        let spec = spec_on(
            d,
            EllipticOperator::pucci_minus(1.0, 2.0).unwrap(),
            1.0,
            |p| 0.5 * p[0],
        );
        let b = Barriers::new(&spec, &DEFAULT_TAU_GRID).unwrap();
        for v in [1.0, -1.0, 0.0] {
            let sign = ScalarField::constant(spec.domain_arc().clone(), Role::Solution, v).unwrap();
            let raw = spec
                .clone()
                .with_switch_source(SwitchSource::External(sign.clone()))
                .unwrap();
            let upper = envelope_check(&b.upper, &raw, &sign).unwrap();
            assert!(upper.min_super >= -upper.tol, "{upper:?}");
            let lower = envelope_check(&b.lower, &raw, &sign).unwrap();
            assert!(lower.max_sub <= lower.tol, "{lower:?}");
        }
    }

    #[test]
    fn constants_ignore_law() {
        let d = Arc::new(Domain::interval(-1.0, 1.0, 0.125).unwrap());
        let spec = spec_on(
            Domain::interval(-1.0, 1.0, 0.125).unwrap(),
            EllipticOperator::neg_trace(),
            2.0,
            |p| p[0],
        );
        let other_law = DegeneracyLaw::constant(
            3.0,
            0.0,
            7.0,
            0.0,
            ScalarField::constant(d.clone(), Role::Coefficient, 9.0).unwrap(),
            ScalarField::zeros(d, Role::Coefficient),
        )
        .unwrap();
        let other = ProblemSpec::new(
            spec.operator().clone(),
            other_law,
            spec.forcing().clone(),
            spec.boundary().clone(),
            0.5,
        )
        .unwrap();
        assert_eq!(barrier_constants(&spec), barrier_constants(&other));
    }
}
