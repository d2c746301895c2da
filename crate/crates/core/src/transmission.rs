//! Outer free-transmission iteration: freeze the sign sets of the previous
//! iterate, mollify them, solve the regularized equation, repeat while the
//! regularization is sent down a geometric schedule.

use crate::barriers::Barriers;
use crate::error::{Error, Result};
use crate::field::{Role, ScalarField};
use crate::operators::Phase;
use crate::scheme::{mollify_indicator, phase_with_band, ProblemSpec, SwitchSource};
use crate::solver::{solve_frozen_with, Init, SolveReport, SolverOptions};

/// `eps_k = 0.1 * 2^-k`, floored at `1e-4`.
pub fn default_epsilon(k: usize) -> f64 {
    (0.1 * 0.5f64.powi(k as i32)).max(1e-4)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionOptions {
    pub k_max: usize,
    /// Regularization per outer step; the last entry repeats when the list
    /// is shorter than `k_max`. Empty means [`default_epsilon`].
    pub schedule: Vec<f64>,
    /// Stop once `||u_k - u_{k-1}|| <= tol` and no node changed sign.
    pub tol: f64,
    /// `u_k = theta * solution + (1 - theta) * u_{k-1}`; 1 is the pure
    /// fixed point.
    pub damping: f64,
    pub solver: SolverOptions,
}

impl Default for TransmissionOptions {
    fn default() -> Self {
        TransmissionOptions {
            k_max: 20,
            schedule: Vec::new(),
            tol: 1e-6,
            damping: 1.0,
            solver: SolverOptions::default(),
        }
    }
}

impl TransmissionOptions {
    pub fn epsilon(&self, k: usize) -> f64 {
        match self.schedule.as_slice() {
            [] => default_epsilon(k),
            s => s[(k - 1).min(s.len() - 1)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionStep {
    pub k: usize,
    pub epsilon: f64,
    pub report: SolveReport,
    /// Nodes whose (band-excluded) sign differs from the previous iterate.
    pub sign_delta: usize,
    pub change_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransmissionFlag {
    /// `k_max` reached without the stopping predicate holding.
    NoFixedPoint,
    /// Some inner solve hit its iteration cap.
    InnerNonConverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionResult {
    pub history: Vec<TransmissionStep>,
    pub solution: ScalarField,
    /// First outer step at which the stopping predicate held.
    pub stabilized_at: Option<usize>,
    pub flags: Vec<TransmissionFlag>,
    pub barriers: Barriers,
}

/// Band-excluded sign changes between two iterates.
pub fn sign_delta(a: &ScalarField, b: &ScalarField, band: f64) -> usize {
    a.domain()
        .active_nodes()
        .filter(|&k| {
            let (pa, pb) = (
                phase_with_band(a.value(k), band),
                phase_with_band(b.value(k), band),
            );
            pa != Phase::Zero && pb != Phase::Zero && pa != pb
        })
        .count()
}

pub fn transmission_solve(
    spec: &ProblemSpec,
    u0: &ScalarField,
    options: &TransmissionOptions,
) -> Result<TransmissionResult> {
    if !matches!(spec.switch_source(), SwitchSource::Own) {
        return Err(Error::InvalidProblem(
            "transmission iteration needs the self switch".into(),
        ));
    }
    if !u0.same_domain(spec.forcing()) {
        return Err(Error::DomainMismatch("initial iterate".into()));
    }
    if options.k_max == 0 || !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidProblem(format!(
            "k_max = {} and damping = {} must be positive (damping <= 1)",
            options.k_max, options.damping
        )));
    }
    let mut prev_eps = f64::INFINITY;
    for k in 1..=options.k_max {
        let e = options.epsilon(k);
        if !(e > 0.0 && e <= 1.0 && e <= prev_eps) {
            return Err(Error::InvalidProblem(format!(
                "epsilon schedule must be positive and nonincreasing, got {e} at step {k}"
            )));
        }
        prev_eps = e;
    }
    let barriers = Barriers::new(spec, &options.solver.taus)?;
    let band = spec.band_width();
    let mut u = u0.clone().with_role(Role::Solution)?;
    let mut history = Vec::new();
    let mut stabilized_at = None;
    let mut inner_failed = false;
    for k in 1..=options.k_max {
        let eps = options.epsilon(k);
        let spec_k = spec.clone().with_epsilon(eps)?;
        let switch = mollify_indicator(&u, eps, spec.law(), eps)?;
        let solver = SolverOptions {
            init: Init::Field(u.clone()),
            ..options.solver.clone()
        };
        let report = solve_frozen_with(&spec_k, &switch, &barriers, &solver)?;
        inner_failed |= !report.converged;
        let next = if options.damping == 1.0 {
            report.solution.clone()
        } else {
            report
                .solution
                .combine(options.damping, &u, 1.0 - options.damping)?
        };
        let delta = sign_delta(&next, &u, band);
        let change = next.combine(1.0, &u, -1.0)?.sup_norm();
        log::info!("outer step {k}: eps {eps:e}, sign delta {delta}, change {change:e}, inner residual {:e}", report.final_residual_norm);
        history.push(TransmissionStep {
            k,
            epsilon: eps,
            report,
            sign_delta: delta,
            change_norm: change,
        });
        u = next;
        if delta == 0 && change <= options.tol {
            stabilized_at = Some(k);
            break;
        }
    }
    let mut flags = Vec::new();
    if stabilized_at.is_none() {
        flags.push(TransmissionFlag::NoFixedPoint);
    }
    if inner_failed {
        flags.push(TransmissionFlag::InnerNonConverged);
    }
    Ok(TransmissionResult {
        history,
        solution: u,
        stabilized_at,
        flags,
        barriers,
    })
}

/// Disjoint node partition into `{u > band}`, `{u < -band}` and the band.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseRegions {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub band: Vec<usize>,
}

pub fn phase_regions(u: &ScalarField, band: f64) -> PhaseRegions {
    let mut out = PhaseRegions::default();
    for k in u.domain().active_nodes() {
        match phase_with_band(u.value(k), band) {
            Phase::Positive => out.positive.push(k),
            Phase::Negative => out.negative.push(k),
            Phase::Zero => out.band.push(k),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Domain;
    use crate::operators::{DegeneracyLaw, EllipticOperator};
    use crate::scheme::envelope_check;
    use std::sync::Arc;

    fn spec_1d(h: f64, f: impl Fn(f64) -> f64, p: f64) -> ProblemSpec {
        let d = Arc::new(Domain::interval(-1.0, 1.0, h).unwrap());
        let law = DegeneracyLaw::constant(
            p,
            p,
            p + 1.0,
            p + 1.0,
            ScalarField::constant(d.clone(), Role::Coefficient, 0.5).unwrap(),
            ScalarField::constant(d.clone(), Role::Coefficient, 1.0).unwrap(),
        )
        .unwrap();
        ProblemSpec::new(
            EllipticOperator::neg_trace(),
            law,
            ScalarField::from_fn(d.clone(), Role::Forcing, |x| f(x[0])).unwrap(),
            ScalarField::zeros(d, Role::Boundary),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn schedule_defaults() {
        assert_eq!(default_epsilon(1), 0.05);
        assert_eq!(default_epsilon(30), 1e-4);
        let o = TransmissionOptions {
            schedule: vec![0.1, 0.01],
            ..Default::default()
        };
        assert_eq!(o.epsilon(1), 0.1);
        assert_eq!(o.epsilon(5), 0.01);
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let spec = spec_1d(1.0 / 16.0, |_| 0.0, 1.0);
        let u0 = ScalarField::zeros(spec.domain_arc().clone(), Role::Solution);
        let r = transmission_solve(&spec, &u0, &TransmissionOptions::default()).unwrap();
        assert_eq!(r.stabilized_at, Some(1));
        assert!(r.solution.values().iter().all(|&v| v == 0.0));
        assert!(r.flags.is_empty());
    }

    #[test]
    fn positive_forcing_gives_a_positive_phase() {
        let spec = spec_1d(1.0 / 32.0, |_| 1.0, 0.0);
        let u0 = ScalarField::zeros(spec.domain_arc().clone(), Role::Solution);
        let r = transmission_solve(&spec, &u0, &TransmissionOptions::default()).unwrap();
        let regions = phase_regions(&r.solution, spec.band_width());
        assert!(regions.negative.is_empty());
        assert_eq!(
            regions.positive.len(),
            spec.domain().interior_nodes().count() - 2
        );
        let first_stable = r.history.iter().position(|s| s.sign_delta == 0).unwrap();
        assert!(first_stable <= 1);
        assert!(
            r.stabilized_at.is_some(),
            "{:?}",
            r.history.iter().map(|s| s.change_norm).collect::<Vec<_>>()
        );
    }

    #[test]
    fn sign_changing_forcing_stabilizes() {
        let spec = spec_1d(1.0 / 32.0, |x| -x.signum() * 1.125, 0.0);
        let u0 = ScalarField::zeros(spec.domain_arc().clone(), Role::Solution);
        let r = transmission_solve(&spec, &u0, &TransmissionOptions::default()).unwrap();
        assert!(r.stabilized_at.is_some());
        let v = &r.solution;
        let d = spec.domain();
        assert!(v.value(d.node_at([-0.5, 0.0]).unwrap()) > 0.0);
        assert!(v.value(d.node_at([0.5, 0.0]).unwrap()) < 0.0);
        let raw = spec
            .clone()
            .with_switch_source(SwitchSource::External(v.clone()))
            .unwrap()
            .with_epsilon(0.0)
            .unwrap();
        let check = envelope_check(v, &raw, v).unwrap();
        assert!(check.passes(), "{check:?}");
    }

    #[test]
    fn phase_regions_partition() {
        let d = Arc::new(Domain::interval(-1.0, 1.0, 1.0 / 64.0).unwrap());
        let x = ScalarField::from_fn(d.clone(), Role::Solution, |p| p[0]).unwrap();
        let r = phase_regions(&x, d.h());
        assert_eq!(r.band.len(), 3);
        assert_eq!(r.positive.len() + r.negative.len() + r.band.len(), d.len());
        let one = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
        assert_eq!(phase_regions(&one, d.h()).positive.len(), d.len());
        let zero = ScalarField::zeros(d.clone(), Role::Solution);
        assert_eq!(phase_regions(&zero, d.h()).band.len(), d.len());
    }
}
