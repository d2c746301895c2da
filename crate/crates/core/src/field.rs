//! Uniform lattice domains, sampled scalar fields and the finite-difference
//! primitives every other module builds on.
//!
//! Nodes are addressed by a flat index `k = j * nx + i`. One-dimensional
//! domains use `ny = 1` and carry a zero second coordinate.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A point in the plane; one-dimensional domains leave the second entry at 0.
pub type Point = [f64; 2];

/// Lattice offsets used by the discrete second-order operators: the axes
/// followed by the diagonals `(1,1)` and `(1,-1)`.
pub const AXES_2D: [(i64, i64); 2] = [(1, 0), (0, 1)];
pub const DIAGONALS_2D: [(i64, i64); 2] = [(1, 1), (1, -1)];
pub const STENCIL_2D: [(i64, i64); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
pub const STENCIL_1D: [(i64, i64); 1] = [(1, 0)];

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Interval { lo: f64, hi: f64 },
    Rect { x: [f64; 2], y: [f64; 2] },
    Disk { center: Point, radius: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Shape::Interval { lo, hi } => hi - lo,
            Shape::Rect { x, y } => (x[1] - x[0]).hypot(y[1] - y[0]),
            Shape::Disk { radius, .. } => 2.0 * radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    shape: Shape,
    h: f64,
    nx: usize,
    ny: usize,
    origin: Point,
    kinds: Vec<NodeKind>,
}

/// Lattice size limits; they keep malformed inputs from exhausting memory.
pub const MAX_AXIS_NODES: usize = 1 << 16;
pub const MAX_NODES: usize = 1 << 24;

fn axis_count(lo: f64, hi: f64, h: f64, axis: &str) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::InvalidDomain(format!(
            "{axis}-axis bounds [{lo}, {hi}] must be finite and increasing"
        )));
    }
    let len = hi - lo;
    let steps = (len / h).round();
    if (steps * h - len).abs() > 1e-9 * len.max(1.0) {
        return Err(Error::InvalidDomain(format!(
            "{axis}-axis length {len} is not a multiple of h = {h}; non-uniform grids are not supported"
        )));
    }
    if steps < 4.0 {
        return Err(Error::InvalidDomain(format!(
            "{axis}-axis length {len} is shorter than 4h (need at least 5 nodes per axis)"
        )));
    }
    if steps >= MAX_AXIS_NODES as f64 {
        return Err(Error::InvalidDomain(format!(
            "{axis}-axis needs {steps} steps at h = {h}; at most {MAX_AXIS_NODES} nodes per axis are supported"
        )));
    }
    Ok(steps as usize + 1)
}

impl Domain {
    pub fn new(shape: Shape, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "spacing h = {h} must be positive"
            )));
        }
        if let Shape::Rect { x, y } = shape {
            let cells = ((x[1] - x[0]) / h + 1.0) * ((y[1] - y[0]) / h + 1.0);
            if cells > MAX_NODES as f64 {
                return Err(Error::InvalidDomain(format!(
                    "{cells} lattice nodes exceed the limit of {MAX_NODES}"
                )));
            }
        }
        match shape {
            Shape::Interval { lo, hi } => {
                let nx = axis_count(lo, hi, h, "x")?;
                let kinds = (0..nx)
                    .map(|i| {
                        if i == 0 || i == nx - 1 {
                            NodeKind::Boundary
                        } else {
                            NodeKind::Interior
                        }
                    })
                    .collect();
                Ok(Domain {
                    shape,
                    h,
                    nx,
                    ny: 1,
                    origin: [lo, 0.0],
                    kinds,
                })
            }
            Shape::Rect { x, y } => {
                let nx = axis_count(x[0], x[1], h, "x")?;
                let ny = axis_count(y[0], y[1], h, "y")?;
                let mut kinds = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        let edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
                        kinds.push(if edge {
                            NodeKind::Boundary
                        } else {
                            NodeKind::Interior
                        });
                    }
                }
                Ok(Domain {
                    shape,
                    h,
                    nx,
                    ny,
                    origin: [x[0], y[0]],
                    kinds,
                })
            }
            Shape::Disk { center, radius } => {
                if !(center[0].is_finite() && center[1].is_finite() && radius.is_finite()) {
                    return Err(Error::InvalidDomain(
                        "disk parameters must be finite".into(),
                    ));
                }
                if radius < 2.0 * h {
                    return Err(Error::InvalidDomain(format!(
                        "disk radius {radius} is shorter than 2h (need at least 5 nodes across)"
                    )));
                }
                let across = 2.0 * (radius / h).ceil() + 1.0;
                if across * across > MAX_NODES as f64 {
                    return Err(Error::InvalidDomain(format!(
                        "disk radius {radius} at h = {h} exceeds the limit of {MAX_NODES} lattice nodes"
                    )));
                }
                let m = (radius / h).ceil() as usize;
                let n = 2 * m + 1;
                let origin = [center[0] - m as f64 * h, center[1] - m as f64 * h];
                let dist = |i: i64, j: i64| {
                    let x = origin[0] + i as f64 * h - center[0];
                    let y = origin[1] + j as f64 * h - center[1];
                    x.hypot(y)
                };
                let inside = |i: i64, j: i64| {
                    i >= 0
                        && j >= 0
                        && (i as usize) < n
                        && (j as usize) < n
                        && dist(i, j) <= radius * (1.0 + 1e-12)
                };
                let mut kinds = Vec::with_capacity(n * n);
                for j in 0..n as i64 {
                    for i in 0..n as i64 {
                        let kind = if !inside(i, j) {
                            NodeKind::Exterior
                        } else {
                            let deep = dist(i, j) < radius - 0.5 * h;
                            let covered = (-1..=1)
                                .flat_map(|dj| (-1..=1).map(move |di| (di, dj)))
                                .all(|(di, dj)| inside(i + di, j + dj));
                            if deep && covered {
                                NodeKind::Interior
                            } else {
                                NodeKind::Boundary
                            }
                        };
                        kinds.push(kind);
                    }
                }
                Ok(Domain {
                    shape,
                    h,
                    nx: n,
                    ny: n,
                    origin,
                    kinds,
                })
            }
        }
    }

    pub fn interval(lo: f64, hi: f64, h: f64) -> Result<Self> {
        Domain::new(Shape::Interval { lo, hi }, h)
    }

    pub fn rect(x: [f64; 2], y: [f64; 2], h: f64) -> Result<Self> {
        Domain::new(Shape::Rect { x, y }, h)
    }

    pub fn disk(center: Point, radius: f64, h: f64) -> Result<Self> {
        Domain::new(Shape::Disk { center, radius }, h)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Total lattice node count, exterior nodes included.
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn lattice_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn diameter(&self) -> f64 {
        self.shape.diameter()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.kinds[node] == NodeKind::Interior
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.kinds[node] == NodeKind::Boundary
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.kinds[node] != NodeKind::Exterior
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_interior(k))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_boundary(k))
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_active(k))
    }

    pub fn grid_index(&self, node: usize) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    pub fn coords(&self, node: usize) -> Point {
        let (i, j) = self.grid_index(node);
        let y = if self.dim() == 1 {
            0.0
        } else {
            self.origin[1] + j as f64 * self.h
        };
        [self.origin[0] + i as f64 * self.h, y]
    }

    /// Active neighbor at lattice offset `(di, dj)`, if any.
    pub fn neighbor(&self, node: usize, offset: (i64, i64)) -> Option<usize> {
        let (i, j) = self.grid_index(node);
        let ni = i as i64 + offset.0;
        let nj = j as i64 + offset.1;
        if ni < 0 || nj < 0 || ni as usize >= self.nx || nj as usize >= self.ny {
            return None;
        }
        let k = nj as usize * self.nx + ni as usize;
        self.is_active(k).then_some(k)
    }

    /// Offsets of the second-order stencil: axes, plus diagonals in 2D.
    pub fn stencil(&self) -> &'static [(i64, i64)] {
        if self.dim() == 1 {
            &STENCIL_1D
        } else {
            &STENCIL_2D
        }
    }

    /// Active node closest to `p`, if `p` lies within half a cell of one.
    pub fn node_at(&self, p: Point) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h).round();
        let fj = if self.dim() == 1 {
            0.0
        } else {
            ((p[1] - self.origin[1]) / self.h).round()
        };
        if fi < 0.0 || fj < 0.0 || fi as usize >= self.nx || fj as usize >= self.ny {
            return None;
        }
        let k = fj as usize * self.nx + fi as usize;
        let c = self.coords(k);
        let close = (c[0] - p[0]).abs() <= 0.5 * self.h && (c[1] - p[1]).abs() <= 0.5 * self.h;
        (close && self.is_active(k)).then_some(k)
    }

    /// Distance from `p` to the continuum boundary of the shape.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        match self.shape {
            Shape::Interval { lo, hi } => (p[0] - lo).min(hi - p[0]),
            Shape::Rect { x, y } => (p[0] - x[0])
                .min(x[1] - p[0])
                .min(p[1] - y[0])
                .min(y[1] - p[1]),
            Shape::Disk { center, radius } => radius - dist(p, center),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            Shape::Interval { lo, hi } => write!(f, "interval [{lo}, {hi}], h = {}", self.h),
            Shape::Rect { x, y } => {
                write!(
                    f,
                    "rect [{}, {}]x[{}, {}], h = {}",
                    x[0], x[1], y[0], y[1], self.h
                )
            }
            Shape::Disk { center, radius } => write!(
                f,
                "disk center ({}, {}) radius {radius}, h = {}",
                center[0], center[1], self.h
            ),
        }
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Solution,
    Coefficient,
    Forcing,
    Boundary,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Solution => "solution",
            Role::Coefficient => "coefficient",
            Role::Forcing => "forcing",
            Role::Boundary => "boundary",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "solution" => Some(Role::Solution),
            "coefficient" => Some(Role::Coefficient),
            "forcing" => Some(Role::Forcing),
            "boundary" => Some(Role::Boundary),
            _ => None,
        }
    }
}

/// Values sampled on every lattice node of a domain. Exterior nodes of disk
/// domains hold 0 and are never read.
#[derive(Clone, Debug)]
pub struct ScalarField {
    domain: Arc<Domain>,
    values: Vec<f64>,
    role: Role,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.role == other.role && self.same_domain(other) && self.values == other.values
    }
}

impl ScalarField {
    pub fn new(domain: Arc<Domain>, mut values: Vec<f64>, role: Role) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidField(format!(
                "{} values for {} lattice nodes",
                values.len(),
                domain.len()
            )));
        }
        for k in 0..domain.len() {
            let checked = match role {
                Role::Boundary => domain.is_boundary(k),
                _ => domain.is_active(k),
            };
            if !domain.is_active(k) {
                values[k] = 0.0;
                continue;
            }
            if checked && !values[k].is_finite() {
                return Err(Error::InvalidField(format!(
                    "non-finite {} value at node {k} ({:?})",
                    role.as_str(),
                    domain.coords(k)
                )));
            }
            if role == Role::Coefficient && values[k] < 0.0 {
                return Err(Error::InvalidField(format!(
                    "negative coefficient {} at node {k} ({:?})",
                    values[k],
                    domain.coords(k)
                )));
            }
        }
        Ok(ScalarField {
            domain,
            values,
            role,
        })
    }

    pub fn from_fn(domain: Arc<Domain>, role: Role, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..domain.len())
            .map(|k| {
                if domain.is_active(k) {
                    f(domain.coords(k))
                } else {
                    0.0
                }
            })
            .collect();
        ScalarField::new(domain, values, role)
    }

    pub fn constant(domain: Arc<Domain>, role: Role, value: f64) -> Result<Self> {
        ScalarField::from_fn(domain, role, |_| value)
    }

    pub fn zeros(domain: Arc<Domain>, role: Role) -> Self {
        let values = vec![0.0; domain.len()];
        ScalarField {
            domain,
            values,
            role,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_role(mut self, role: Role) -> Result<Self> {
        if role == Role::Coefficient {
            return ScalarField::new(self.domain, self.values, role);
        }
        self.role = role;
        Ok(self)
    }

    pub fn same_domain(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    pub fn map(&self, role: Role, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        ScalarField::new(self.domain.clone(), values, role)
    }

    /// Pointwise `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<Self> {
        if !self.same_domain(other) {
            return Err(Error::DomainMismatch("combine on different domains".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        ScalarField::new(self.domain.clone(), values, self.role)
    }

    /// Max of |value| over the given nodes.
    pub fn sup_over(&self, nodes: impl Iterator<Item = usize>) -> f64 {
        nodes.map(|k| self.values[k].abs()).fold(0.0, f64::max)
    }

    /// Max of |value| over active nodes.
    pub fn sup_norm(&self) -> f64 {
        self.sup_over(self.domain.active_nodes())
    }

    pub fn sup_norm_interior(&self) -> f64 {
        self.sup_over(self.domain.interior_nodes())
    }

    pub fn sup_norm_boundary(&self) -> f64 {
        self.sup_over(self.domain.boundary_nodes())
    }

    /// Max minus min over the given nodes.
    pub fn oscillation_over(&self, nodes: impl Iterator<Item = usize>) -> f64 {
        let (lo, hi) = nodes.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            (lo.min(self.values[k]), hi.max(self.values[k]))
        });
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    fn neighbor_value(&self, node: usize, offset: (i64, i64)) -> Result<f64> {
        self.domain
            .neighbor(node, offset)
            .map(|k| self.values[k])
            .ok_or(Error::MissingNeighbor {
                node,
                direction: offset,
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMode {
    Centered,
    /// One-sided differences: a nonnegative bias component selects the
    /// forward neighbor on that axis, a negative one the backward neighbor.
    Upwind(Point),
}

fn require_interior(domain: &Domain, node: usize) -> Result<()> {
    if node >= domain.len() || !domain.is_interior(node) {
        return Err(Error::NotInterior { node });
    }
    Ok(())
}

pub fn gradient(u: &ScalarField, node: usize, mode: GradientMode) -> Result<Point> {
    let domain = u.domain();
    require_interior(domain, node)?;
    let h = domain.h();
    let center = u.value(node);
    let mut g = [0.0; 2];
    for (axis, &offset) in AXES_2D.iter().take(domain.dim()).enumerate() {
        let back = (-offset.0, -offset.1);
        g[axis] = match mode {
            GradientMode::Centered => {
                (u.neighbor_value(node, offset)? - u.neighbor_value(node, back)?) / (2.0 * h)
            }
            GradientMode::Upwind(bias) if bias[axis] >= 0.0 => {
                (u.neighbor_value(node, offset)? - center) / h
            }
            GradientMode::Upwind(_) => (center - u.neighbor_value(node, back)?) / h,
        };
    }
    Ok(g)
}

/// Forward and backward one-sided difference vectors at an interior node.
pub fn one_sided_gradients(u: &ScalarField, node: usize) -> Result<(Point, Point)> {
    let fwd = gradient(u, node, GradientMode::Upwind([1.0, 1.0]))?;
    let bwd = gradient(u, node, GradientMode::Upwind([-1.0, -1.0]))?;
    Ok((fwd, bwd))
}

/// Directional second differences `(u(x+hd) - 2u(x) + u(x-hd)) / (h^2 |d|^2)`
/// along the axes and, in 2D, the diagonals `(1,1)` and `(1,-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondDifferences {
    pub dim: usize,
    pub axis: [f64; 2],
    pub diag: [f64; 2],
}

impl SecondDifferences {
    /// Symmetric matrix entries `(m11, m12, m22)`; the mixed entry comes from
    /// the difference of the two diagonal values. 1D returns `(m11, 0, 0)`.
    pub fn matrix_entries(&self) -> (f64, f64, f64) {
        if self.dim == 1 {
            (self.axis[0], 0.0, 0.0)
        } else {
            (
                self.axis[0],
                0.5 * (self.diag[0] - self.diag[1]),
                self.axis[1],
            )
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SecondDifferences {
            dim: self.dim,
            axis: [self.axis[0] * factor, self.axis[1] * factor],
            diag: [self.diag[0] * factor, self.diag[1] * factor],
        }
    }
}

pub fn hessian(u: &ScalarField, node: usize) -> Result<SecondDifferences> {
    let domain = u.domain();
    require_interior(domain, node)?;
    let h2 = domain.h() * domain.h();
    let center = u.value(node);
    let second = |offset: (i64, i64), len2: f64| -> Result<f64> {
        let fwd = u.neighbor_value(node, offset)?;
        let bwd = u.neighbor_value(node, (-offset.0, -offset.1))?;
        Ok((fwd - 2.0 * center + bwd) / (h2 * len2))
    };
    let mut out = SecondDifferences {
        dim: domain.dim(),
        axis: [0.0; 2],
        diag: [0.0; 2],
    };
    for (axis, &offset) in AXES_2D.iter().take(domain.dim()).enumerate() {
        out.axis[axis] = second(offset, 1.0)?;
    }
    if domain.dim() == 2 {
        for (slot, &offset) in DIAGONALS_2D.iter().enumerate() {
            out.diag[slot] = second(offset, 2.0)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_interval(h: f64) -> Arc<Domain> {
        Arc::new(Domain::interval(0.0, 1.0, h).unwrap())
    }

    fn square(h: f64) -> Arc<Domain> {
        Arc::new(Domain::rect([-1.0, 1.0], [-1.0, 1.0], h).unwrap())
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(Domain::interval(0.0, 1.0, 0.3).is_err());
        assert!(Domain::interval(0.0, 1.0, 0.5).is_err());
        assert!(Domain::interval(0.0, 1.0, -0.1).is_err());
        assert!(Domain::interval(0.0, 1.0, 0.25).is_ok());
        assert!(Domain::disk([0.0, 0.0], 0.1, 0.1).is_err());
    }

    #[test]
    fn rect_classification() {
        let d = square(0.25);
        assert_eq!(d.lattice_dims(), (9, 9));
        assert_eq!(d.interior_nodes().count(), 49);
        assert_eq!(d.boundary_nodes().count(), 32);
    }

    #[test]
    fn disk_interior_nodes_have_full_stencil() {
        let d = Domain::disk([0.3, -0.2], 1.0, 0.1).unwrap();
        assert!(d.interior_nodes().count() > 200);
        for k in d.interior_nodes() {
            let p = d.coords(k);
            assert!(dist(p, [0.3, -0.2]) < 1.0 - 0.05);
            for di in -1..=1 {
                for dj in -1..=1 {
                    assert!(d.neighbor(k, (di, dj)).is_some());
                }
            }
        }
        for k in d.boundary_nodes() {
            assert!(dist(d.coords(k), [0.3, -0.2]) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn gradient_affine_and_quadratic() {
        let d = unit_interval(0.1);
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0]).unwrap();
        for k in d.interior_nodes() {
            assert_abs_diff_eq!(
                gradient(&u, k, GradientMode::Centered).unwrap()[0],
                1.0,
                epsilon = 1e-12
            );
        }
        let c = ScalarField::constant(d.clone(), Role::Solution, 3.0).unwrap();
        assert_eq!(gradient(&c, 4, GradientMode::Centered).unwrap(), [0.0, 0.0]);

        let q = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0] * p[0]).unwrap();
        let mid = d.node_at([0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(
            gradient(&q, mid, GradientMode::Centered).unwrap()[0],
            1.0,
            epsilon = 1e-12
        );
        // one-sided: (0.36 - 0.25)/0.1 and (0.25 - 0.16)/0.1
        assert_abs_diff_eq!(
            gradient(&q, mid, GradientMode::Upwind([1.0, 0.0])).unwrap()[0],
            1.1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            gradient(&q, mid, GradientMode::Upwind([-1.0, 0.0])).unwrap()[0],
            0.9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn boundary_node_is_rejected() {
        let d = unit_interval(0.1);
        let u = ScalarField::zeros(d, Role::Solution);
        assert_eq!(
            gradient(&u, 0, GradientMode::Centered),
            Err(Error::NotInterior { node: 0 })
        );
        assert!(hessian(&u, 10).is_err());
    }

    #[test]
    fn hessian_quadratics() {
        let d = square(0.125);
        let k = d.node_at([0.25, -0.5]).unwrap();

        let affine =
            ScalarField::from_fn(d.clone(), Role::Solution, |p| 2.0 * p[0] - p[1] + 1.0).unwrap();
        let s = hessian(&affine, k).unwrap();
        for v in s.axis.iter().chain(&s.diag) {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-10);
        }

        let xx = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0] * p[0]).unwrap();
        let s = hessian(&xx, k).unwrap();
        assert_abs_diff_eq!(s.axis[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.axis[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.diag[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.diag[1], 1.0, epsilon = 1e-10);

        let xy = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0] * p[1]).unwrap();
        let s = hessian(&xy, k).unwrap();
        assert_abs_diff_eq!(s.axis[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.axis[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.diag[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.diag[1], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.matrix_entries().1, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn coefficient_fields_must_be_nonnegative() {
        let d = unit_interval(0.25);
        assert!(ScalarField::constant(d.clone(), Role::Coefficient, -0.1).is_err());
        assert!(ScalarField::constant(d.clone(), Role::Forcing, f64::NAN).is_err());
        assert!(ScalarField::new(d, vec![0.0; 3], Role::Solution).is_err());
    }

    #[test]
    fn node_lookup_round_trips() {
        let d = Domain::disk([0.0, 0.0], 0.5, 0.0625).unwrap();
        for k in d.active_nodes() {
            assert_eq!(d.node_at(d.coords(k)), Some(k));
        }
    }
}
