//! Problem specification, mollified sign switches and the per-node
//! residuals of the regularized and of the raw switched equation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    gradient, hessian, one_sided_gradients, Domain, GradientMode, Point, Role, ScalarField,
};
use crate::operators::{
    degeneracy_h, ell_mu, pow0, DegeneracyLaw, EllipticOperator, Exponents, Phase,
};

/// Where the sign sets that drive the degeneracy switch come from.
#[derive(Clone, Debug, PartialEq)]
pub enum SwitchSource {
    /// The unknown itself (free transmission).
    Own,
    External(ScalarField),
}

/// How the gradient entering `H` is sampled by the raw envelope residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientRule {
    Centered,
    /// Every slope between the backward and forward differences is admissible;
    /// the sub side takes the most favourable (smallest) value, the super side
    /// the largest. Resolves kinks and critical points where the centered
    /// difference collapses to zero.
    #[default]
    OneSidedHull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Sub,
    Super,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Sub => "sub",
            Side::Super => "super",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    domain: Arc<Domain>,
    operator: EllipticOperator,
    law: DegeneracyLaw,
    forcing: ScalarField,
    boundary: ScalarField,
    epsilon: f64,
    switch_source: SwitchSource,
    band: f64,
    gradient_rule: GradientRule,
}

impl ProblemSpec {
    pub fn new(
        operator: EllipticOperator,
        law: DegeneracyLaw,
        forcing: ScalarField,
        boundary: ScalarField,
        epsilon: f64,
    ) -> Result<Self> {
        let domain = forcing.domain_arc().clone();
        if !forcing.same_domain(&boundary) || !law.a().same_domain(&forcing) {
            return Err(Error::DomainMismatch(
                "forcing, boundary datum and law must share a domain".into(),
            ));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidProblem(format!(
                "epsilon = {epsilon} outside [0, 1]"
            )));
        }
        if let crate::operators::OperatorKind::WeightedTrace(a) = operator.kind() {
            if a.dim() != domain.dim() {
                return Err(Error::InvalidProblem(format!(
                    "weight matrix is {}x{} on a {}D domain",
                    a.dim(),
                    a.dim(),
                    domain.dim()
                )));
            }
        }
        let spec = ProblemSpec {
            domain,
            operator,
            law,
            forcing,
            boundary,
            epsilon,
            switch_source: SwitchSource::Own,
            band: 1.0,
            gradient_rule: GradientRule::default(),
        };
        spec.check_epsilon()?;
        Ok(spec)
    }

    fn check_epsilon(&self) -> Result<()> {
        if self.epsilon == 0.0 && matches!(self.switch_source, SwitchSource::Own) {
            return Err(Error::InvalidProblem(
                "epsilon = 0 (raw equation) requires an external switch field".into(),
            ));
        }
        Ok(())
    }

    pub fn with_switch_source(mut self, source: SwitchSource) -> Result<Self> {
        if let SwitchSource::External(v) = &source {
            if !v.same_domain(&self.forcing) {
                return Err(Error::DomainMismatch("switch field".into()));
            }
        }
        self.switch_source = source;
        self.check_epsilon()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidProblem(format!(
                "epsilon = {epsilon} outside [0, 1]"
            )));
        }
        self.epsilon = epsilon;
        self.check_epsilon()?;
        Ok(self)
    }

    pub fn with_band(mut self, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "band width {kappa} must be nonnegative"
            )));
        }
        self.band = kappa;
        Ok(self)
    }

    pub fn with_gradient_rule(mut self, rule: GradientRule) -> Self {
        self.gradient_rule = rule;
        self
    }

    pub fn with_forcing(mut self, forcing: ScalarField) -> Result<Self> {
        if !forcing.same_domain(&self.forcing) {
            return Err(Error::DomainMismatch("forcing".into()));
        }
        self.forcing = forcing;
        Ok(self)
    }

    pub fn with_boundary(mut self, boundary: ScalarField) -> Result<Self> {
        if !boundary.same_domain(&self.forcing) {
            return Err(Error::DomainMismatch("boundary datum".into()));
        }
        self.boundary = boundary;
        Ok(self)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.operator
    }

    pub fn law(&self) -> &DegeneracyLaw {
        &self.law
    }

    pub fn forcing(&self) -> &ScalarField {
        &self.forcing
    }

    pub fn boundary(&self) -> &ScalarField {
        &self.boundary
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn switch_source(&self) -> &SwitchSource {
        &self.switch_source
    }

    /// Band multiplier `kappa`; the free-boundary band is `|v| <= kappa h`.
    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn band_width(&self) -> f64 {
        self.band * self.domain.h()
    }

    pub fn gradient_rule(&self) -> GradientRule {
        self.gradient_rule
    }

    /// The sign field selecting the phases for a candidate `u`.
    pub fn switch_field<'a>(&'a self, u: &'a ScalarField) -> &'a ScalarField {
        match &self.switch_source {
            SwitchSource::Own => u,
            SwitchSource::External(v) => v,
        }
    }

    pub fn phase_of(&self, v: f64) -> Phase {
        phase_with_band(v, self.band_width())
    }

    /// The equation satisfied by `-u`: `F~(M) = -F(-M)`, the two phases
    /// trade exponents and coefficients, and `f`, `g` (and an external
    /// switch) change sign.
    pub fn mirrored(&self) -> Self {
        let neg = |f: &ScalarField| {
            f.map(f.role(), |x| -x)
                .expect("negation keeps values finite")
        };
        ProblemSpec {
            domain: self.domain.clone(),
            operator: self.operator.clone().mirrored(),
            law: self.law.mirrored(),
            forcing: neg(&self.forcing),
            boundary: neg(&self.boundary),
            epsilon: self.epsilon,
            switch_source: match &self.switch_source {
                SwitchSource::Own => SwitchSource::Own,
                SwitchSource::External(v) => SwitchSource::External(neg(v)),
            },
            band: self.band,
            gradient_rule: self.gradient_rule,
        }
    }
}

pub fn phase_with_band(v: f64, width: f64) -> Phase {
    if v > width {
        Phase::Positive
    } else if v < -width {
        Phase::Negative
    } else {
        Phase::Zero
    }
}

/// Mollified indicators of the sign sets together with the regularized
/// exponent and coefficient fields
/// `p = eps + p+ chi+ + p- chi-`, `a = eps + a chi+`, `b = eps + b chi-`.
///
/// For variable-exponent laws the switch is inert: `p`, `a`, `b` are the
/// law's own fields.
#[derive(Clone, Debug, PartialEq)]
pub struct MollifiedSwitch {
    epsilon: f64,
    chi_plus: ScalarField,
    chi_minus: ScalarField,
    p: ScalarField,
    a: ScalarField,
    b: ScalarField,
    q: ScalarField,
    s: ScalarField,
}

impl MollifiedSwitch {
    pub fn from_indicators(
        chi_plus: ScalarField,
        chi_minus: ScalarField,
        law: &DegeneracyLaw,
        epsilon: f64,
    ) -> Result<Self> {
        let domain = chi_plus.domain_arc().clone();
        for k in domain.active_nodes() {
            let (cp, cm) = (chi_plus.value(k), chi_minus.value(k));
            if !(0.0..=1.0).contains(&cp) || !(0.0..=1.0).contains(&cm) || cp + cm > 1.0 + 1e-12 {
                return Err(Error::InvalidField(format!(
                    "switch indicators ({cp}, {cm}) at node {k} leave the simplex"
                )));
            }
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidProblem(format!(
                "epsilon = {epsilon} outside [0, 1]"
            )));
        }
        let coeff = |f: &dyn Fn(usize) -> f64| {
            let values = (0..domain.len()).map(f).collect();
            ScalarField::new(domain.clone(), values, Role::Coefficient)
        };
        let (p, a, b, q, s) = match law.exponents() {
            Exponents::Constant {
                p_plus,
                p_minus,
                q,
                s,
            } => (
                coeff(&|k| epsilon + p_plus * chi_plus.value(k) + p_minus * chi_minus.value(k))?,
                coeff(&|k| epsilon + law.a().value(k) * chi_plus.value(k))?,
                coeff(&|k| epsilon + law.b().value(k) * chi_minus.value(k))?,
                ScalarField::constant(domain.clone(), Role::Coefficient, *q)?,
                ScalarField::constant(domain.clone(), Role::Coefficient, *s)?,
            ),
            Exponents::Variable { p, q, s } => {
                let tag = |f: &ScalarField| f.clone().with_role(Role::Coefficient);
                (tag(p)?, tag(law.a())?, tag(law.b())?, tag(q)?, tag(s)?)
            }
        };
        Ok(MollifiedSwitch {
            epsilon,
            chi_plus,
            chi_minus,
            p,
            a,
            b,
            q,
            s,
        })
    }

    /// Sharp indicators of `{v > 0}` and `{v < 0}`.
    pub fn sharp(v: &ScalarField, law: &DegeneracyLaw, epsilon: f64) -> Result<Self> {
        let (cp, cm) = sharp_indicators(v);
        MollifiedSwitch::from_indicators(cp, cm, law, epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn chi_plus(&self) -> &ScalarField {
        &self.chi_plus
    }

    pub fn chi_minus(&self) -> &ScalarField {
        &self.chi_minus
    }

    pub fn p(&self) -> &ScalarField {
        &self.p
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn b(&self) -> &ScalarField {
        &self.b
    }

    /// `G(x, z) = ell^{p(x)} + a(x) ell^{q(x)} + b(x) ell^{s(x)}` with
    /// `ell = ell_eps(z)`.
    pub fn g_factor(&self, node: usize, z: Point) -> f64 {
        let l = ell_mu(self.epsilon, z);
        pow0(l, self.p.value(node))
            + self.a.value(node) * pow0(l, self.q.value(node))
            + self.b.value(node) * pow0(l, self.s.value(node))
    }

    /// The switch of the mirrored problem (indicators swap roles).
    pub fn mirrored(&self, mirrored_law: &DegeneracyLaw) -> Result<Self> {
        MollifiedSwitch::from_indicators(
            self.chi_minus.clone(),
            self.chi_plus.clone(),
            mirrored_law,
            self.epsilon,
        )
    }
}

fn sharp_indicators(v: &ScalarField) -> (ScalarField, ScalarField) {
    let domain = v.domain_arc().clone();
    let ind = |pred: fn(f64) -> bool| {
        let values = (0..domain.len())
            .map(|k| if pred(v.value(k)) { 1.0 } else { 0.0 })
            .collect();
        ScalarField::new(domain.clone(), values, Role::Coefficient)
            .expect("indicator values are 0 or 1")
    };
    (ind(|x| x > 0.0), ind(|x| x < 0.0))
}

/// Convolve the indicators of `{v > 0}`, `{v < 0}` with the radial bump
/// `exp(-1 / (1 - (r/radius)^2))`, renormalized over in-domain nodes, and
/// derive the regularized law with offset `epsilon`.
///
/// A radius below `h/2` resolves no neighbor; the indicators stay sharp.
pub fn mollify_indicator(
    v: &ScalarField,
    radius: f64,
    law: &DegeneracyLaw,
    epsilon: f64,
) -> Result<MollifiedSwitch> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "mollifier radius {radius} must be nonnegative"
        )));
    }
    let domain = v.domain_arc().clone();
    let h = domain.h();
    if radius < 0.5 * h {
        log::warn!(
            "mollifier radius {radius} is below h/2 = {}; using sharp indicators",
            0.5 * h
        );
        return MollifiedSwitch::sharp(v, law, epsilon);
    }
    let (sharp_plus, sharp_minus) = sharp_indicators(v);
    let reach = (radius / h).ceil() as i64;
    let dim = domain.dim();
    let offsets: Vec<((i64, i64), f64)> = (-reach..=reach)
        .flat_map(|i| {
            let js = if dim == 2 { -reach..=reach } else { 0..=0 };
            js.map(move |j| (i, j))
        })
        .filter_map(|(i, j)| {
            let r = h * ((i * i + j * j) as f64).sqrt() / radius;
            (r < 1.0).then(|| ((i, j), (-1.0 / (1.0 - r * r)).exp()))
        })
        .collect();
    let smoothed: Vec<(f64, f64)> = (0..domain.len())
        .into_par_iter()
        .map(|k| {
            if !domain.is_active(k) {
                return (0.0, 0.0);
            }
            let (mut mass, mut plus, mut minus) = (0.0, 0.0, 0.0);
            for &(off, w) in &offsets {
                if let Some(m) = domain.neighbor(k, off).filter(|&m| domain.is_active(m)) {
                    mass += w;
                    plus += w * sharp_plus.value(m);
                    minus += w * sharp_minus.value(m);
                }
            }
            (
                (plus / mass).clamp(0.0, 1.0),
                (minus / mass).clamp(0.0, 1.0),
            )
        })
        .collect();
    let (cp, cm): (Vec<f64>, Vec<f64>) = smoothed.into_iter().unzip();
    MollifiedSwitch::from_indicators(
        ScalarField::new(domain.clone(), cp, Role::Coefficient)?,
        ScalarField::new(domain, cm, Role::Coefficient)?,
        law,
        epsilon,
    )
}

/// `G_eps(x, Du) (eps u + F_h(D^2 u)) - f` at an interior node, with the
/// centered gradient.
pub fn residual(
    u: &ScalarField,
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    node: usize,
) -> Result<f64> {
    let du = gradient(u, node, GradientMode::Centered)?;
    let d2 = hessian(u, node)?;
    let g = switch.g_factor(node, du);
    Ok(
        g * (spec.epsilon() * u.value(node) + spec.operator().evaluate_discrete(&d2))
            - spec.forcing().value(node),
    )
}

/// Regularized residual at every node (0 off the interior).
pub fn residual_field(u: &ScalarField, spec: &ProblemSpec, switch: &MollifiedSwitch) -> Vec<f64> {
    let domain = u.domain();
    (0..domain.len())
        .into_par_iter()
        .map(|k| {
            if domain.is_interior(k) {
                residual(u, spec, switch, k).unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Max of |r| over interior nodes, reduced in node order.
pub fn residual_norm(values: &[f64], domain: &Domain) -> f64 {
    domain
        .interior_nodes()
        .map(|k| values[k].abs())
        .fold(0.0, f64::max)
}

/// Value of the raw switched equation at one node, with the largest
/// degeneracy factor met while evaluating it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeValue {
    pub value: f64,
    pub phase: Phase,
    pub h_max: f64,
}

/// Range of `|Du|` admitted by the gradient rule.
pub(crate) fn gradient_magnitudes(
    u: &ScalarField,
    node: usize,
    rule: GradientRule,
) -> Result<(f64, f64)> {
    match rule {
        GradientRule::Centered => {
            let g = gradient(u, node, GradientMode::Centered)?;
            let r = g[0].hypot(g[1]);
            Ok((r, r))
        }
        GradientRule::OneSidedHull => {
            let (fwd, bwd) = one_sided_gradients(u, node)?;
            let mut lo = [0.0; 2];
            let mut hi = [0.0; 2];
            for i in 0..u.domain().dim() {
                let (a, b) = (fwd[i].min(bwd[i]), fwd[i].max(bwd[i]));
                lo[i] = if a <= 0.0 && b >= 0.0 {
                    0.0
                } else {
                    a.abs().min(b.abs())
                };
                hi[i] = a.abs().max(b.abs());
            }
            Ok((lo[0].hypot(lo[1]), hi[0].hypot(hi[1])))
        }
    }
}

/// Extreme value of `H(|z|) * F - f` over the admissible gradient
/// magnitudes and (on the band) over the branches `{1, H_q, H_s}`.
pub(crate) fn envelope_value(
    law: &DegeneracyLaw,
    node: usize,
    phase: Phase,
    magnitudes: (f64, f64),
    xi: Point,
    f_value: f64,
    rhs: f64,
    side: Side,
) -> EnvelopeValue {
    let mut best = match side {
        Side::Sub => f64::INFINITY,
        Side::Super => f64::NEG_INFINITY,
    };
    let mut h_max: f64 = 0.0;
    for r in [magnitudes.0, magnitudes.1] {
        let hv = degeneracy_h(law, node, phase, [r, 0.0], xi);
        h_max = h_max.max(hv.max());
        for branch in hv.branches() {
            let v = branch * f_value;
            best = match side {
                Side::Sub => best.min(v),
                Side::Super => best.max(v),
            };
        }
    }
    EnvelopeValue {
        value: best - rhs,
        phase,
        h_max,
    }
}

/// Residual of the raw switched equation with sign sets taken from `v`:
/// `H_q F - f` on `{v > band}`, `H_s F - f` on `{v < -band}` and the
/// min (sub side) / max (super side) of `{F, H_q F, H_s F} - f` on the band.
pub fn envelope_residual(
    u: &ScalarField,
    spec: &ProblemSpec,
    v: &ScalarField,
    node: usize,
    side: Side,
) -> Result<f64> {
    envelope_eval(u, spec, v, node, side).map(|e| e.value)
}

pub fn envelope_eval(
    u: &ScalarField,
    spec: &ProblemSpec,
    v: &ScalarField,
    node: usize,
    side: Side,
) -> Result<EnvelopeValue> {
    let magnitudes = gradient_magnitudes(u, node, spec.gradient_rule())?;
    let f_value = spec.operator().evaluate_discrete(&hessian(u, node)?);
    let phase = spec.phase_of(v.value(node));
    Ok(envelope_value(
        spec.law(),
        node,
        phase,
        magnitudes,
        [0.0, 0.0],
        f_value,
        spec.forcing().value(node),
        side,
    ))
}

/// First-order tolerance `10 (1 + ||f|| + H_max) h`.
pub fn tolerance(h: f64, f_norm: f64, h_max: f64) -> f64 {
    10.0 * (1.0 + f_norm + h_max) * h
}

/// Worst envelope residuals of a field: the largest sub-side value and the
/// smallest super-side value over interior nodes, plus the tolerance they
/// are judged against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeCheck {
    pub max_sub: f64,
    pub max_sub_node: usize,
    pub min_super: f64,
    pub min_super_node: usize,
    pub tol: f64,
}

impl EnvelopeCheck {
    pub fn passes(&self) -> bool {
        self.max_sub <= self.tol && self.min_super >= -self.tol
    }
}

pub fn envelope_check(
    u: &ScalarField,
    spec: &ProblemSpec,
    v: &ScalarField,
) -> Result<EnvelopeCheck> {
    let domain = u.domain();
    let mut out = EnvelopeCheck {
        max_sub: f64::NEG_INFINITY,
        max_sub_node: 0,
        min_super: f64::INFINITY,
        min_super_node: 0,
        tol: 0.0,
    };
    let mut h_max: f64 = 0.0;
    for k in domain.interior_nodes() {
        let sub = envelope_eval(u, spec, v, k, Side::Sub)?;
        let sup = envelope_eval(u, spec, v, k, Side::Super)?;
        h_max = h_max.max(sub.h_max);
        if sub.value > out.max_sub {
            out.max_sub = sub.value;
            out.max_sub_node = k;
        }
        if sup.value < out.min_super {
            out.min_super = sup.value;
            out.min_super_node = k;
        }
    }
    out.tol = tolerance(domain.h(), spec.forcing().sup_norm(), h_max);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Role;
    use approx::assert_abs_diff_eq;

    fn interval(h: f64) -> Arc<Domain> {
        Arc::new(Domain::interval(-1.0, 1.0, h).unwrap())
    }

    fn law(
        d: &Arc<Domain>,
        p_plus: f64,
        p_minus: f64,
        q: f64,
        s: f64,
        a: f64,
        b: f64,
    ) -> DegeneracyLaw {
        DegeneracyLaw::constant(
            p_plus,
            p_minus,
            q,
            s,
            ScalarField::constant(d.clone(), Role::Coefficient, a).unwrap(),
            ScalarField::constant(d.clone(), Role::Coefficient, b).unwrap(),
        )
        .unwrap()
    }

    fn spec_1d(d: &Arc<Domain>, l: DegeneracyLaw, f: f64, eps: f64) -> ProblemSpec {
        let one = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
        ProblemSpec::new(
            EllipticOperator::neg_trace(),
            l,
            ScalarField::constant(d.clone(), Role::Forcing, f).unwrap(),
            ScalarField::zeros(d.clone(), Role::Boundary),
            1.0,
        )
        .unwrap()
        .with_switch_source(SwitchSource::External(one))
        .unwrap()
        .with_epsilon(eps)
        .unwrap()
    }

    #[test]
    fn raw_mode_needs_external_switch() {
        let d = interval(0.25);
        let l = law(&d, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let f = ScalarField::zeros(d.clone(), Role::Forcing);
        let g = ScalarField::zeros(d.clone(), Role::Boundary);
        assert!(ProblemSpec::new(EllipticOperator::neg_trace(), l, f, g, 0.0).is_err());
    }

    #[test]
    fn mollifier_constant_sign_and_symmetry() {
        let d = interval(1.0 / 64.0);
        let l = law(&d, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        let pos = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
        let sw = mollify_indicator(&pos, 0.2, &l, 0.1).unwrap();
        for k in d.active_nodes() {
            assert_abs_diff_eq!(sw.chi_plus().value(k), 1.0, epsilon = 1e-14);
            assert_eq!(sw.chi_minus().value(k), 0.0);
            assert_abs_diff_eq!(sw.p().value(k), 1.1, epsilon = 1e-14);
        }
        let neg = ScalarField::constant(d.clone(), Role::Solution, -1.0).unwrap();
        let sw = mollify_indicator(&neg, 0.2, &l, 0.1).unwrap();
        assert!(d
            .active_nodes()
            .all(|k| sw.chi_plus().value(k) == 0.0 && sw.chi_minus().value(k) == 1.0));

        let x = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0]).unwrap();
        let sw = mollify_indicator(&x, 0.25, &l, 0.0).unwrap();
        let origin = d.node_at([0.0, 0.0]).unwrap();
        // the origin itself is in neither set: plus and minus share the rest
        assert_abs_diff_eq!(
            sw.chi_plus().value(origin),
            sw.chi_minus().value(origin),
            epsilon = 1e-14
        );
        assert!(
            (sw.chi_plus().value(origin) - 0.5).abs() <= 2.0 * d.h(),
            "{}",
            sw.chi_plus().value(origin)
        );
    }

    #[test]
    fn tiny_radius_is_sharp() {
        let d = interval(0.125);
        let l = law(&d, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        let x = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0]).unwrap();
        let sw = mollify_indicator(&x, 0.0, &l, 0.0).unwrap();
        assert_eq!(sw, MollifiedSwitch::sharp(&x, &l, 0.0).unwrap());
        let k = d.node_at([0.5, 0.0]).unwrap();
        assert_eq!(sw.chi_plus().value(k), 1.0);
    }

    #[test]
    fn affine_has_zero_residual() {
        let d = interval(0.125);
        let spec = spec_1d(&d, law(&d, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0), 0.0, 0.0);
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| 0.3 * p[0] - 2.0).unwrap();
        let sw = MollifiedSwitch::sharp(&u, spec.law(), 0.0).unwrap();
        for k in d.interior_nodes() {
            assert_abs_diff_eq!(residual(&u, &spec, &sw, k).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(
                envelope_residual(&u, &spec, &u, k, Side::Sub).unwrap(),
                0.0,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                envelope_residual(&u, &spec, &u, k, Side::Super).unwrap(),
                0.0,
                epsilon = 1e-12
            );
        }
        assert!(residual(&u, &spec, &sw, 0).is_err());
    }

    #[test]
    fn exact_profile_residual_vanishes_under_refinement() {
        // u = |x|^{3/2}: |u'| (-u'') = -(3/2)^2 / 2
        let mut previous = f64::INFINITY;
        for h in [1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0] {
            let d = interval(h);
            let spec = spec_1d(&d, law(&d, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0), -1.125, 0.0);
            let u =
                ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0].abs().powf(1.5)).unwrap();
            let one = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
            let sw = MollifiedSwitch::sharp(&one, spec.law(), 0.0).unwrap();
            let worst = d
                .interior_nodes()
                .filter(|&k| d.coords(k)[0].abs() >= 0.25)
                .map(|k| residual(&u, &spec, &sw, k).unwrap().abs())
                .fold(0.0, f64::max);
            assert!(worst < previous);
            previous = worst;
        }
        assert!(previous < 1e-3);
    }

    #[test]
    fn band_envelope_hand_values() {
        // H_q = 12, H_s = 4 when |Du| = 2 with p+=2, q=3, a=1, p-=1, s=2, b=1/2;
        // F = -1 via u'' = 1 with F = -tr.
        let d = interval(0.125);
        let l = law(&d, 2.0, 1.0, 3.0, 2.0, 1.0, 0.5);
        let spec = spec_1d(&d, l, 0.0, 0.0).with_gradient_rule(GradientRule::Centered);
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| {
            2.0 * (p[0] - 0.5) + 0.5 * (p[0] - 0.5).powi(2)
        })
        .unwrap();
        let node = d.node_at([0.5, 0.0]).unwrap();
        let zero = ScalarField::zeros(d.clone(), Role::Solution);
        assert_abs_diff_eq!(
            envelope_residual(&u, &spec, &zero, node, Side::Sub).unwrap(),
            -12.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            envelope_residual(&u, &spec, &zero, node, Side::Super).unwrap(),
            -1.0,
            epsilon = 1e-9
        );
        let plus = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
        assert_abs_diff_eq!(
            envelope_residual(&u, &spec, &plus, node, Side::Sub).unwrap(),
            -12.0,
            epsilon = 1e-9
        );
        let minus = ScalarField::constant(d.clone(), Role::Solution, -1.0).unwrap();
        assert_abs_diff_eq!(
            envelope_residual(&u, &spec, &minus, node, Side::Super).unwrap(),
            -4.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn band_envelope_nonnegative_f_scales_by_min_branch() {
        let d = interval(0.125);
        let l = law(&d, 2.0, 1.0, 3.0, 2.0, 1.0, 0.5);
        let spec = spec_1d(&d, l, 0.0, 0.0).with_gradient_rule(GradientRule::Centered);
        // u'' = -1 so F = 1 >= 0
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| {
            2.0 * (p[0] - 0.5) - 0.5 * (p[0] - 0.5).powi(2)
        })
        .unwrap();
        let node = d.node_at([0.5, 0.0]).unwrap();
        let zero = ScalarField::zeros(d.clone(), Role::Solution);
        let sub = envelope_residual(&u, &spec, &zero, node, Side::Sub).unwrap();
        assert_abs_diff_eq!(sub, 1.0f64.min(12.0).min(4.0), epsilon = 1e-9);
    }

    #[test]
    fn hull_admits_critical_points() {
        let d = interval(1.0 / 32.0);
        let spec = spec_1d(&d, law(&d, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0), -1.125, 0.0);
        let u = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0].abs().powf(1.5)).unwrap();
        let one = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
        let origin = d.node_at([0.0, 0.0]).unwrap();
        let sub = envelope_residual(&u, &spec, &one, origin, Side::Sub).unwrap();
        let sup = envelope_residual(&u, &spec, &one, origin, Side::Super).unwrap();
        assert!(sub <= 0.0 && sup >= 0.0, "sub {sub} super {sup}");
        let centered = spec.clone().with_gradient_rule(GradientRule::Centered);
        // the centered gradient vanishes at the kink, so H F = 0 > f
        assert!(envelope_residual(&u, &centered, &one, origin, Side::Sub).unwrap() > 0.5);
    }

    #[test]
    fn g_factor_stays_positive() {
        let d = interval(0.125);
        let l = law(&d, 2.0, 3.0, 4.0, 5.0, 0.0, 0.0);
        let x = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0]).unwrap();
        let eps = 1e-3;
        let sw = mollify_indicator(&x, 0.3, &l, eps).unwrap();
        for k in d.active_nodes() {
            let g = sw.g_factor(k, [0.0, 0.0]);
            assert!(g >= eps.powf(3.0 + eps) && g > 0.0);
        }
    }

    #[test]
    fn mirrored_spec_swaps_phases() {
        let d = interval(0.125);
        let spec = spec_1d(&d, law(&d, 1.0, 2.0, 3.0, 4.0, 0.5, 0.25), -1.0, 0.1);
        let m = spec.mirrored();
        assert_eq!(m.forcing().value(3), 1.0);
        match m.law().exponents() {
            Exponents::Constant {
                p_plus,
                p_minus,
                q,
                s,
            } => assert_eq!((*p_plus, *p_minus, *q, *s), (2.0, 1.0, 4.0, 3.0)),
            _ => unreachable!(),
        }
        assert_eq!(m.law().a().value(2), 0.25);
        assert_eq!(m.mirrored().forcing(), spec.forcing());
        assert_eq!(m.mirrored().law(), spec.law());
    }
}
