//! Elliptic operators on symmetric matrices, the Pucci extremal operators,
//! the regularized length `ell_mu` and the switched degeneracy law.
//!
//! Sign convention: an operator `F` is `(lambda, Lambda)`-elliptic when
//! `lambda tr(B) <= F(A) - F(A + B) <= Lambda tr(B)` for every `B >= 0`, so
//! `F(M) = -tr(M)` is the model member.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Point, ScalarField, SecondDifferences};

/// Absolute tolerance used when checking symmetry and spectra.
const SYM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidOperator(format!(
                "matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYM_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidOperator(format!(
                "{} entries for a {n}x{n} matrix",
                entries.len()
            )));
        }
        SymMatrix::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(entries),
        ))
    }

    /// Matrix assembled from directional second differences.
    pub fn from_second_differences(d: &SecondDifferences) -> Self {
        let (m11, m12, m22) = d.matrix_entries();
        if d.dim == 1 {
            SymMatrix(DMatrix::from_element(1, 1, m11))
        } else {
            SymMatrix(DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]))
        }
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 1 {
            return vec![self.0[(0, 0)]];
        }
        SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Sums of the positive and of the negative eigenvalues.
    pub fn split_trace(&self) -> (f64, f64) {
        self.eigenvalues()
            .into_iter()
            .fold((0.0, 0.0), |(pos, neg), e| {
                if e > 0.0 {
                    (pos + e, neg)
                } else {
                    (pos, neg + e)
                }
            })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn neg(&self) -> Self {
        SymMatrix(-&self.0)
    }

    /// `x^T M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.0[(i, j)] * x[i] * x[j])
            .sum()
    }

    /// `M x` for `x` of length `dim`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)] * x[j]).sum())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PucciSign {
    Plus,
    Minus,
}

/// Exact Pucci extremal operator:
/// `M+ = -Lambda tr(A-) - lambda tr(A+)`, `M- = -Lambda tr(A+) - lambda tr(A-)`.
pub fn pucci(sign: PucciSign, a: &DMatrix<f64>, lambda: f64, cap_lambda: f64) -> Result<f64> {
    check_constants(lambda, cap_lambda)?;
    let m = SymMatrix::new(a.clone())?;
    Ok(pucci_sym(sign, &m, lambda, cap_lambda))
}

fn pucci_sym(sign: PucciSign, m: &SymMatrix, lambda: f64, cap_lambda: f64) -> f64 {
    let (pos, neg) = m.split_trace();
    match sign {
        PucciSign::Plus => -cap_lambda * neg - lambda * pos,
        PucciSign::Minus => -cap_lambda * pos - lambda * neg,
    }
}

fn check_constants(lambda: f64, cap_lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite() && cap_lambda.is_finite() && cap_lambda >= lambda) {
        return Err(Error::InvalidOperator(format!(
            "ellipticity constants must satisfy 0 < lambda <= Lambda, got ({lambda}, {cap_lambda})"
        )));
    }
    Ok(())
}

/// `sqrt(mu^2 + |z|^2)`.
pub fn ell_mu(mu: f64, z: Point) -> f64 {
    mu.hypot(z[0].hypot(z[1]))
}

/// `base^exponent` for `base >= 0` with `0^0 = 1`.
#[inline]
pub fn pow0(base: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        base.powf(exponent)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    NegTrace,
    PucciPlus,
    PucciMinus,
    /// `F(M) = -tr(A M)` with the spectrum of `A` inside `[lambda, Lambda]`.
    WeightedTrace(SymMatrix),
    /// `F_L(M) = L F(M / L)`.
    Scaled {
        factor: f64,
        inner: Box<EllipticOperator>,
    },
    /// `F~(M) = -F(-M)`.
    Mirrored(Box<EllipticOperator>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticOperator {
    kind: OperatorKind,
    lambda: f64,
    cap_lambda: f64,
}

impl EllipticOperator {
    pub fn neg_trace() -> Self {
        EllipticOperator {
            kind: OperatorKind::NegTrace,
            lambda: 1.0,
            cap_lambda: 1.0,
        }
    }

    pub fn pucci_plus(lambda: f64, cap_lambda: f64) -> Result<Self> {
        check_constants(lambda, cap_lambda)?;
        Ok(EllipticOperator {
            kind: OperatorKind::PucciPlus,
            lambda,
            cap_lambda,
        })
    }

    pub fn pucci_minus(lambda: f64, cap_lambda: f64) -> Result<Self> {
        check_constants(lambda, cap_lambda)?;
        Ok(EllipticOperator {
            kind: OperatorKind::PucciMinus,
            lambda,
            cap_lambda,
        })
    }

    pub fn weighted_trace(a: SymMatrix, lambda: f64, cap_lambda: f64) -> Result<Self> {
        check_constants(lambda, cap_lambda)?;
        if a.dim() > 2 {
            return Err(Error::InvalidOperator(
                "weighted trace supports n <= 2".into(),
            ));
        }
        for e in a.eigenvalues() {
            if e < lambda - SYM_TOL || e > cap_lambda + SYM_TOL {
                return Err(Error::InvalidOperator(format!(
                    "weight eigenvalue {e} outside [{lambda}, {cap_lambda}]"
                )));
            }
        }
        Ok(EllipticOperator {
            kind: OperatorKind::WeightedTrace(a),
            lambda,
            cap_lambda,
        })
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidOperator(format!(
                "scaling factor {factor} must be positive"
            )));
        }
        let (lambda, cap_lambda) = (self.lambda, self.cap_lambda);
        Ok(EllipticOperator {
            kind: OperatorKind::Scaled {
                factor,
                inner: Box::new(self),
            },
            lambda,
            cap_lambda,
        })
    }

    pub fn mirrored(self) -> Self {
        let (lambda, cap_lambda) = (self.lambda, self.cap_lambda);
        EllipticOperator {
            kind: OperatorKind::Mirrored(Box::new(self)),
            lambda,
            cap_lambda,
        }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cap_lambda(&self) -> f64 {
        self.cap_lambda
    }

    pub fn name(&self) -> String {
        match &self.kind {
            OperatorKind::NegTrace => "neg_trace".into(),
            OperatorKind::PucciPlus => "pucci_plus".into(),
            OperatorKind::PucciMinus => "pucci_minus".into(),
            OperatorKind::WeightedTrace(_) => "weighted_trace".into(),
            OperatorKind::Scaled { factor, inner } => format!("scaled({factor}, {})", inner.name()),
            OperatorKind::Mirrored(inner) => format!("mirrored({})", inner.name()),
        }
    }

    /// Exact evaluation on a symmetric matrix.
    pub fn evaluate(&self, m: &SymMatrix) -> f64 {
        match &self.kind {
            OperatorKind::NegTrace => -m.trace(),
            OperatorKind::PucciPlus => pucci_sym(PucciSign::Plus, m, self.lambda, self.cap_lambda),
            OperatorKind::PucciMinus => {
                pucci_sym(PucciSign::Minus, m, self.lambda, self.cap_lambda)
            }
            OperatorKind::WeightedTrace(a) => {
                let n = m.dim().min(a.dim());
                let mut tr = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        tr += a.get(i, j) * m.get(j, i);
                    }
                }
                -tr
            }
            OperatorKind::Scaled { factor, inner } => {
                factor * inner.evaluate(&m.scaled(1.0 / factor))
            }
            OperatorKind::Mirrored(inner) => -inner.evaluate(&m.neg()),
        }
    }

    /// Narrow-stencil monotone surrogate evaluated on directional second
    /// differences.
    ///
    /// Trace-type operators use the exact directional decomposition (exact on
    /// quadratics). Pucci operators take the extremum of the closed-form
    /// formula over the two stencil frames (axes, diagonals); this is exact
    /// for matrices diagonal in either frame and first order otherwise.
    pub fn evaluate_discrete(&self, d: &SecondDifferences) -> f64 {
        match &self.kind {
            OperatorKind::NegTrace => -(d.axis[0] + if d.dim == 2 { d.axis[1] } else { 0.0 }),
            OperatorKind::PucciPlus => {
                let frame =
                    |v: &[f64]| pucci_frame(PucciSign::Plus, v, self.lambda, self.cap_lambda);
                if d.dim == 1 {
                    frame(&d.axis[..1])
                } else {
                    frame(&d.axis).max(frame(&d.diag))
                }
            }
            OperatorKind::PucciMinus => {
                let frame =
                    |v: &[f64]| pucci_frame(PucciSign::Minus, v, self.lambda, self.cap_lambda);
                if d.dim == 1 {
                    frame(&d.axis[..1])
                } else {
                    frame(&d.axis).min(frame(&d.diag))
                }
            }
            OperatorKind::WeightedTrace(a) => {
                if d.dim == 1 {
                    return -a.get(0, 0) * d.axis[0];
                }
                let (a11, a12, a22) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
                let c = a12.abs();
                let mixed = if a12 >= 0.0 { d.diag[0] } else { d.diag[1] };
                -((a11 - c) * d.axis[0] + (a22 - c) * d.axis[1] + 2.0 * c * mixed)
            }
            OperatorKind::Scaled { factor, inner } => {
                factor * inner.evaluate_discrete(&d.scaled(1.0 / factor))
            }
            OperatorKind::Mirrored(inner) => -inner.evaluate_discrete(&d.scaled(-1.0)),
        }
    }

    /// Whether the discrete surrogate is nonincreasing in every neighbor value
    /// (weighted traces need a diagonally dominant weight).
    pub fn discrete_is_monotone(&self) -> bool {
        match &self.kind {
            OperatorKind::WeightedTrace(a) if a.dim() == 2 => {
                let c = a.get(0, 1).abs();
                a.get(0, 0) >= c && a.get(1, 1) >= c
            }
            OperatorKind::Scaled { inner, .. } | OperatorKind::Mirrored(inner) => {
                inner.discrete_is_monotone()
            }
            _ => true,
        }
    }
}

fn pucci_frame(sign: PucciSign, values: &[f64], lambda: f64, cap_lambda: f64) -> f64 {
    let (pos, neg) = values.iter().fold(
        (0.0, 0.0),
        |(p, n), &v| {
            if v > 0.0 {
                (p + v, n)
            } else {
                (p, n + v)
            }
        },
    );
    match sign {
        PucciSign::Plus => -cap_lambda * neg - lambda * pos,
        PucciSign::Minus => -cap_lambda * pos - lambda * neg,
    }
}

/// Worst margins observed when testing the ellipticity inequality and the
/// Pucci sandwich on random matrices. Negative margins are violations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticityCheck {
    pub trials: usize,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub sandwich_margin: f64,
}

impl EllipticityCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.lower_margin >= -tol && self.upper_margin >= -tol && self.sandwich_margin >= -tol
    }
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-scale..=scale);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymMatrix(m)
}

/// Random positive semidefinite matrix `C C^T`; rank-deficient about a
/// quarter of the time.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let rank = if rng.random_bool(0.25) {
        rng.random_range(0..n)
    } else {
        n
    };
    let mut c = DMatrix::zeros(n, n.max(1));
    for i in 0..n {
        for j in 0..rank {
            c[(i, j)] = rng.random_range(-scale..=scale);
        }
    }
    let b = &c * c.transpose();
    SymMatrix((&b + b.transpose()) * 0.5)
}

/// Relative margins of `lambda tr B <= F(A) - F(A+B) <= Lambda tr B` and of
/// `M-(A) <= F(A) <= M+(A)` over `trials` random pairs.
pub fn check_ellipticity(
    op: &EllipticOperator,
    n: usize,
    trials: usize,
    seed: u64,
) -> EllipticityCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lambda, cap) = (op.lambda(), op.cap_lambda());
    let mut out = EllipticityCheck {
        trials,
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        sandwich_margin: f64::INFINITY,
    };
    for _ in 0..trials {
        let a = random_symmetric(&mut rng, n, 5.0);
        let b = random_psd(&mut rng, n, 2.0);
        let scale = 1.0 + a.as_matrix().amax() + b.as_matrix().amax();
        let diff = op.evaluate(&a) - op.evaluate(&a.add(&b));
        let tr = b.trace();
        out.lower_margin = out.lower_margin.min((diff - lambda * tr) / scale);
        out.upper_margin = out.upper_margin.min((cap * tr - diff) / scale);
        let f = op.evaluate(&a);
        let lo = pucci_sym(PucciSign::Minus, &a, lambda, cap);
        let hi = pucci_sym(PucciSign::Plus, &a, lambda, cap);
        out.sandwich_margin = out.sandwich_margin.min((f - lo).min(hi - f) / scale);
    }
    out
}

/// Which side of the free boundary a node sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Positive,
    Negative,
    /// On (or within the band around) the zero set.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Exponents {
    Constant {
        p_plus: f64,
        p_minus: f64,
        q: f64,
        s: f64,
    },
    /// Multi-phase mode with continuous exponent fields and no switching.
    Variable {
        p: ScalarField,
        q: ScalarField,
        s: ScalarField,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegeneracyLaw {
    exponents: Exponents,
    a: ScalarField,
    b: ScalarField,
}

fn check_coefficient(name: &str, f: &ScalarField) -> Result<()> {
    let domain = f.domain();
    if let Some(k) = domain
        .active_nodes()
        .find(|&k| !(f.value(k) >= 0.0 && f.value(k).is_finite()))
    {
        return Err(Error::InvalidLaw(format!(
            "{name} must be finite and nonnegative, got {} at node {k}",
            f.value(k)
        )));
    }
    Ok(())
}

impl DegeneracyLaw {
    pub fn constant(
        p_plus: f64,
        p_minus: f64,
        q: f64,
        s: f64,
        a: ScalarField,
        b: ScalarField,
    ) -> Result<Self> {
        for (name, v) in [("p_plus", p_plus), ("p_minus", p_minus), ("q", q), ("s", s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidLaw(format!(
                    "{name} = {v} must be finite and nonnegative"
                )));
            }
        }
        if p_plus > q {
            return Err(Error::InvalidLaw(format!(
                "p_plus = {p_plus} exceeds q = {q}"
            )));
        }
        if p_minus > s {
            return Err(Error::InvalidLaw(format!(
                "p_minus = {p_minus} exceeds s = {s}"
            )));
        }
        check_coefficient("a", &a)?;
        check_coefficient("b", &b)?;
        if !a.same_domain(&b) {
            return Err(Error::DomainMismatch("coefficients a and b".into()));
        }
        Ok(DegeneracyLaw {
            exponents: Exponents::Constant {
                p_plus,
                p_minus,
                q,
                s,
            },
            a,
            b,
        })
    }

    pub fn variable(
        p: ScalarField,
        q: ScalarField,
        s: ScalarField,
        a: ScalarField,
        b: ScalarField,
    ) -> Result<Self> {
        for (name, f) in [("p", &p), ("q", &q), ("s", &s), ("a", &a), ("b", &b)] {
            check_coefficient(name, f)?;
            if !f.same_domain(&a) {
                return Err(Error::DomainMismatch(format!("law field {name}")));
            }
        }
        Ok(DegeneracyLaw {
            exponents: Exponents::Variable { p, q, s },
            a,
            b,
        })
    }

    pub fn exponents(&self) -> &Exponents {
        &self.exponents
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn b(&self) -> &ScalarField {
        &self.b
    }

    pub fn is_variable(&self) -> bool {
        matches!(self.exponents, Exponents::Variable { .. })
    }

    /// Largest of the lower exponents (`max(p+, p-)`, or `max p(x)`).
    pub fn max_lower_exponent(&self) -> f64 {
        match &self.exponents {
            Exponents::Constant {
                p_plus, p_minus, ..
            } => p_plus.max(*p_minus),
            Exponents::Variable { p, .. } => p.sup_norm(),
        }
    }

    /// The law seen by `-u`: `(p+, q, a)` and `(p-, s, b)` trade places.
    pub fn mirrored(&self) -> Self {
        match &self.exponents {
            Exponents::Constant {
                p_plus,
                p_minus,
                q,
                s,
            } => DegeneracyLaw {
                exponents: Exponents::Constant {
                    p_plus: *p_minus,
                    p_minus: *p_plus,
                    q: *s,
                    s: *q,
                },
                a: self.b.clone(),
                b: self.a.clone(),
            },
            Exponents::Variable { .. } => self.clone(),
        }
    }
}

/// Value of the degeneracy `H` at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HValue {
    Single(f64),
    /// On the zero set: the branches `{1, H_q, H_s}` entering the min/max
    /// envelopes.
    Branches {
        one: f64,
        hq: f64,
        hs: f64,
    },
}

impl HValue {
    pub fn min(&self) -> f64 {
        match *self {
            HValue::Single(v) => v,
            HValue::Branches { one, hq, hs } => one.min(hq).min(hs),
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            HValue::Single(v) => v,
            HValue::Branches { one, hq, hs } => one.max(hq).max(hs),
        }
    }

    pub fn branches(&self) -> Vec<f64> {
        match *self {
            HValue::Single(v) => vec![v],
            HValue::Branches { one, hq, hs } => vec![one, hq, hs],
        }
    }
}

/// `H_q = |xi+z|^{p+} + a|xi+z|^q` on the positive phase,
/// `H_s = |xi+z|^{p-} + b|xi+z|^s` on the negative phase, and the branch
/// triple on the zero set.
pub fn degeneracy_h(law: &DegeneracyLaw, node: usize, phase: Phase, z: Point, xi: Point) -> HValue {
    let w = (xi[0] + z[0]).hypot(xi[1] + z[1]);
    let a = law.a.value(node);
    let b = law.b.value(node);
    match &law.exponents {
        Exponents::Constant {
            p_plus,
            p_minus,
            q,
            s,
        } => {
            let hq = pow0(w, *p_plus) + a * pow0(w, *q);
            let hs = pow0(w, *p_minus) + b * pow0(w, *s);
            match phase {
                Phase::Positive => HValue::Single(hq),
                Phase::Negative => HValue::Single(hs),
                Phase::Zero => HValue::Branches { one: 1.0, hq, hs },
            }
        }
        Exponents::Variable { p, q, s } => HValue::Single(
            pow0(w, p.value(node)) + a * pow0(w, q.value(node)) + b * pow0(w, s.value(node)),
        ),
    }
}
