//! Fixed-point solves of the discrete regularized equation at a frozen
//! switch, bracketed by the explicit barriers, and the discrete comparison
//! check.
//!
//! Gauss–Seidel mode relaxes each interior node to the exact root of its own
//! equation with the gradient factor `G` frozen (the centered gradient does
//! not involve the center value, and the remaining map is monotone and
//! piecewise linear in it). Jacobi mode marches in pseudo-time in parallel.
//! Either way the reported iterate is the best one seen: sweeps may raise the
//! residual max-norm for a while, and a run of sweeps that fails to improve
//! on the best restarts from it with half the step.

use rayon::prelude::*;

use crate::barriers::{Barriers, DEFAULT_TAU_GRID};
use crate::error::{Error, Result};
use crate::field::{gradient, hessian, Domain, GradientMode, Role, ScalarField, SecondDifferences};
use crate::scheme::{residual_field, residual_norm, tolerance, MollifiedSwitch, ProblemSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Sweep {
    #[default]
    GaussSeidel,
    Jacobi,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Init {
    /// `(lower + upper) / 2`.
    #[default]
    Midpoint,
    Upper,
    Lower,
    Field(ScalarField),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub sweep: Sweep,
    pub init: Init,
    pub taus: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 500_000,
            sweep: Sweep::default(),
            init: Init::default(),
            taus: DEFAULT_TAU_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub solution: ScalarField,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual_norm: f64,
    /// Nodes outside `[lower - tol, upper + tol]`.
    pub bracket_violations: usize,
    /// Largest distance outside the barrier bracket (0 when inside).
    pub bracket_excess: f64,
    pub bracket_tol: f64,
    /// Relaxation factor (Gauss–Seidel) or pseudo-time step (Jacobi) in use
    /// at exit.
    pub pseudo_time_step: f64,
    /// Residual max-norm after every accepted sweep, starting with the
    /// initial guess.
    pub residual_history: Vec<f64>,
    pub rejected_sweeps: usize,
}

/// Slack used when counting bracket violations: `10 (1 + ||f||) h`.
pub fn bracket_tolerance(spec: &ProblemSpec) -> f64 {
    tolerance(spec.domain().h(), spec.forcing().sup_norm(), 0.0)
}

/// Count nodes of `u` outside `[lower - tol, upper + tol]` and the largest
/// excursion.
pub fn bracket_check(u: &ScalarField, barriers: &Barriers, tol: f64) -> (usize, f64) {
    let mut count = 0;
    let mut excess: f64 = 0.0;
    for k in u.domain().active_nodes() {
        let v = u.value(k);
        let out = (barriers.lower.value(k) - v)
            .max(v - barriers.upper.value(k))
            .max(0.0);
        excess = excess.max(out);
        if out > tol {
            count += 1;
        }
    }
    (count, excess)
}

fn check_inputs(
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    options: &SolverOptions,
) -> Result<()> {
    if spec.epsilon() <= 0.0 || switch.epsilon() <= 0.0 {
        return Err(Error::InvalidProblem(
            "frozen solves need epsilon > 0".into(),
        ));
    }
    if !switch.p().same_domain(spec.forcing()) {
        return Err(Error::DomainMismatch("switch and problem".into()));
    }
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::InvalidProblem(format!(
            "tolerance {} and iteration cap {} must be positive",
            options.tol, options.max_iter
        )));
    }
    Ok(())
}

/// Solve `G_eps(x, Du)(eps u + F_h(D^2 u)) = f` with `u = g` on the boundary.
pub fn solve_frozen(
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    options: &SolverOptions,
) -> Result<SolveReport> {
    check_inputs(spec, switch, options)?;
    let barriers = Barriers::new(spec, &options.taus)?;
    solve_frozen_with(spec, switch, &barriers, options)
}

/// As [`solve_frozen`], reusing precomputed barriers.
pub fn solve_frozen_with(
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    barriers: &Barriers,
    options: &SolverOptions,
) -> Result<SolveReport> {
    check_inputs(spec, switch, options)?;
    let domain = spec.domain_arc().clone();
    let init = match &options.init {
        Init::Midpoint => barriers.midpoint(),
        Init::Upper => barriers.upper.clone(),
        Init::Lower => barriers.lower.clone(),
        Init::Field(u) => {
            if !u.same_domain(spec.forcing()) {
                return Err(Error::DomainMismatch("initial guess".into()));
            }
            u.clone()
        }
    };
    let mut values = init.into_values();
    for k in domain.boundary_nodes() {
        values[k] = spec.boundary().value(k);
    }
    let mut u = ScalarField::new(domain.clone(), values, Role::Solution)?;

    let mut norm = residual_norm(&residual_field(&u, spec, switch), &domain);
    let mut history = vec![norm];
    let mut step = match options.sweep {
        Sweep::GaussSeidel => 1.0,
        Sweep::Jacobi => jacobi_step(spec, switch, &u),
    };
    // Watchdog acceptance: trial sweeps may raise the residual for a while
    // (the centered gradient inside G is not monotone), but the reported
    // iterate is always the best one seen. With no improvement inside the
    // window, restart from the best iterate with half the step. The step
    // never grows back: regrowing the relaxation re-enters the same cycle.
    let window = watchdog_window(&domain);
    let mut current = u.clone();
    let mut since_best = 0;
    let mut iterations = 0;
    let mut rejected = 0;
    while norm > options.tol && iterations < options.max_iter {
        iterations += 1;
        let trial = match options.sweep {
            Sweep::GaussSeidel => gauss_seidel_sweep(&current, spec, switch, step),
            Sweep::Jacobi => jacobi_sweep(&current, spec, switch, step),
        };
        let trial_norm = residual_norm(&residual_field(&trial, spec, switch), &domain);
        if trial_norm <= norm || !norm.is_finite() {
            u = trial.clone();
            norm = trial_norm;
            history.push(norm);
            since_best = 0;
            current = trial;
        } else if trial_norm.is_finite() && since_best < window {
            since_best += 1;
            current = trial;
        } else {
            rejected += 1;
            since_best = 0;
            current = u.clone();
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::Stall { iterations, step });
            }
        }
    }
    let bracket_tol = bracket_tolerance(spec);
    let (bracket_violations, bracket_excess) = bracket_check(&u, barriers, bracket_tol);
    if bracket_violations > 0 {
        log::warn!(
            "{bracket_violations} nodes left the barrier bracket (max excess {bracket_excess:e})"
        );
    }
    Ok(SolveReport {
        solution: u,
        iterations,
        converged: norm <= options.tol,
        final_residual_norm: norm,
        bracket_violations,
        bracket_excess,
        bracket_tol,
        pseudo_time_step: step,
        residual_history: history,
        rejected_sweeps: rejected,
    })
}

/// Sweeps allowed without improving the best residual: enough for
/// Gauss–Seidel information to cross the grid a few times.
fn watchdog_window(domain: &Domain) -> usize {
    let across = (domain.diameter() / domain.h()).ceil() as usize;
    8 * across.max(4)
}

/// The local problem at one node: `phi(t) = eps t + F_h(D(t)) - target`,
/// where `D(t)` is the stencil data with center value `t`.
struct LocalProblem<'a> {
    spec: &'a ProblemSpec,
    base: SecondDifferences,
    center: f64,
    h2: f64,
    target: f64,
}

impl LocalProblem<'_> {
    fn data(&self, t: f64) -> SecondDifferences {
        let shift = t - self.center;
        let mut d = self.base;
        for v in d.axis.iter_mut().take(d.dim) {
            *v -= 2.0 * shift / self.h2;
        }
        if d.dim == 2 {
            for v in d.diag.iter_mut() {
                *v -= shift / self.h2;
            }
        }
        d
    }

    fn phi(&self, t: f64) -> f64 {
        self.spec.epsilon() * t + self.spec.operator().evaluate_discrete(&self.data(t))
            - self.target
    }

    /// Root of the increasing map `phi`, by an overshooting bracket step
    /// followed by Illinois false position.
    fn solve(&self) -> f64 {
        let eps = self.spec.epsilon();
        let slope = eps + 2.0 * self.spec.operator().lambda() / self.h2;
        let (mut a, mut fa) = (self.center, self.phi(self.center));
        if fa == 0.0 {
            return a;
        }
        let mut b = a - fa / slope;
        let mut fb = self.phi(b);
        let mut grow = 1.0;
        while fb.signum() == fa.signum() && fb != 0.0 {
            grow *= 2.0;
            a = b;
            fa = fb;
            b = a - grow * fa / slope;
            fb = self.phi(b);
            if grow > 1e12 {
                return b;
            }
        }
        let scale = self.target.abs() + slope * (a.abs() + b.abs()) + 1.0;
        let mut side = 0;
        for _ in 0..100 {
            if fb == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * (a.abs() + b.abs()) {
                break;
            }
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = self.phi(c);
            if fc.abs() <= 1e-15 * scale {
                return c;
            }
            if fc.signum() == fb.signum() {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = b;
                fa = fb;
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        if fa.abs() < fb.abs() {
            a
        } else {
            b
        }
    }
}

fn local_problem<'a>(
    u: &ScalarField,
    spec: &'a ProblemSpec,
    switch: &MollifiedSwitch,
    node: usize,
) -> LocalProblem<'a> {
    let du = gradient(u, node, GradientMode::Centered).expect("interior node");
    let g = switch.g_factor(node, du);
    let h = spec.domain().h();
    LocalProblem {
        spec,
        base: hessian(u, node).expect("interior node"),
        center: u.value(node),
        h2: h * h,
        target: spec.forcing().value(node) / g,
    }
}

/// Exact local root at one interior node given the current neighbor values.
pub fn local_solve(
    u: &ScalarField,
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    node: usize,
) -> Result<f64> {
    if !u.domain().is_interior(node) {
        return Err(Error::NotInterior { node });
    }
    Ok(local_problem(u, spec, switch, node).solve())
}

fn gauss_seidel_sweep(
    u: &ScalarField,
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    omega: f64,
) -> ScalarField {
    let mut next = u.clone();
    let interior: Vec<usize> = u.domain().interior_nodes().collect();
    for k in interior {
        let root = local_problem(&next, spec, switch, k).solve();
        let old = next.value(k);
        next.values_mut()[k] = old + omega * (root - old);
    }
    next
}

fn jacobi_step(spec: &ProblemSpec, switch: &MollifiedSwitch, u: &ScalarField) -> f64 {
    let domain = spec.domain();
    let h = domain.h();
    let n = domain.dim() as f64;
    let g_ratio = domain
        .interior_nodes()
        .map(|k| {
            let g = switch.g_factor(
                k,
                gradient(u, k, GradientMode::Centered).expect("interior node"),
            );
            g / (1.0 + g)
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    1.0 / ((2.0 * n * spec.operator().cap_lambda() / (h * h) + spec.epsilon()) * g_ratio)
}

fn jacobi_sweep(
    u: &ScalarField,
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    dt: f64,
) -> ScalarField {
    let domain = u.domain();
    let values: Vec<f64> = (0..domain.len())
        .into_par_iter()
        .map(|k| {
            if !domain.is_interior(k) {
                return u.value(k);
            }
            let du = gradient(u, k, GradientMode::Centered).expect("interior node");
            let g = switch.g_factor(k, du);
            let r = g
                * (spec.epsilon() * u.value(k)
                    + spec
                        .operator()
                        .evaluate_discrete(&hessian(u, k).expect("interior node")))
                - spec.forcing().value(k);
            u.value(k) - dt * r / (1.0 + g)
        })
        .collect();
    ScalarField::new(u.domain_arc().clone(), values, Role::Solution).expect("finite update")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonOptions {
    /// Slack allowed in the residual sign preconditions.
    pub residual_tol: f64,
    /// Slack allowed in the ordering itself.
    pub order_tol: f64,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        ComparisonOptions {
            residual_tol: 1e-6,
            order_tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonOutcome {
    pub ordered: bool,
    /// Node maximizing `u_sub - u_super`.
    pub worst_node: usize,
    pub worst_gap: f64,
}

/// Check `u_sub <= u_super` after verifying that `u_sub` is a discrete
/// subsolution (residual <= tol), `u_super` a supersolution
/// (residual >= -tol) and that their boundary values are ordered.
pub fn comparison_check(
    spec: &ProblemSpec,
    switch: &MollifiedSwitch,
    u_sub: &ScalarField,
    u_super: &ScalarField,
    options: ComparisonOptions,
) -> Result<ComparisonOutcome> {
    if !u_sub.same_domain(spec.forcing()) || !u_super.same_domain(spec.forcing()) {
        return Err(Error::DomainMismatch("comparison pair".into()));
    }
    let domain = spec.domain();
    let r_sub = residual_field(u_sub, spec, switch);
    let r_super = residual_field(u_super, spec, switch);
    for k in domain.interior_nodes() {
        if r_sub[k] > options.residual_tol {
            return Err(Error::NotSubSuperPair {
                side: "sub",
                node: k,
                residual: r_sub[k],
            });
        }
        if r_super[k] < -options.residual_tol {
            return Err(Error::NotSubSuperPair {
                side: "super",
                node: k,
                residual: r_super[k],
            });
        }
    }
    for k in domain.boundary_nodes() {
        let gap = u_sub.value(k) - u_super.value(k);
        if gap > options.order_tol {
            return Err(Error::NotSubSuperPair {
                side: "boundary",
                node: k,
                residual: gap,
            });
        }
    }
    let (worst_node, worst_gap) = domain
        .active_nodes()
        .map(|k| (k, u_sub.value(k) - u_super.value(k)))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    Ok(ComparisonOutcome {
        ordered: worst_gap <= options.order_tol,
        worst_node,
        worst_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Domain, Point};
    use crate::operators::{DegeneracyLaw, EllipticOperator};
    use crate::scheme::{residual, SwitchSource};
    use std::sync::Arc;

    fn spec(
        d: &Arc<Domain>,
        op: EllipticOperator,
        exps: (f64, f64, f64, f64),
        ab: (f64, f64),
        f: impl Fn(Point) -> f64,
        g: impl Fn(Point) -> f64,
        eps: f64,
    ) -> ProblemSpec {
        let law = DegeneracyLaw::constant(
            exps.0,
            exps.1,
            exps.2,
            exps.3,
            ScalarField::constant(d.clone(), Role::Coefficient, ab.0).unwrap(),
            ScalarField::constant(d.clone(), Role::Coefficient, ab.1).unwrap(),
        )
        .unwrap();
        ProblemSpec::new(
            op,
            law,
            ScalarField::from_fn(d.clone(), Role::Forcing, f).unwrap(),
            ScalarField::from_fn(d.clone(), Role::Boundary, g).unwrap(),
            eps,
        )
        .unwrap()
    }

    fn positive_switch(s: &ProblemSpec) -> MollifiedSwitch {
        let one = ScalarField::constant(s.domain_arc().clone(), Role::Solution, 1.0).unwrap();
        MollifiedSwitch::sharp(&one, s.law(), s.epsilon()).unwrap()
    }

    #[test]
    fn affine_data_give_affine_solution() {
        let d = Arc::new(Domain::rect([0.0, 1.0], [0.0, 1.0], 1.0 / 16.0).unwrap());
        let affine = |p: Point| 0.5 + p[0] - 0.25 * p[1];
        let s = spec(
            &d,
            EllipticOperator::neg_trace(),
            (0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0),
            |_| 0.0,
            affine,
            1e-6,
        );
        let report = solve_frozen(
            &s,
            &positive_switch(&s),
            &SolverOptions {
                tol: 1e-10,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.converged);
        let err = d
            .active_nodes()
            .map(|k| (report.solution.value(k) - affine(d.coords(k))).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-5, "err {err}");
        assert_eq!(report.bracket_violations, 0);
        assert!(report.residual_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gauss_seidel_is_deterministic_and_jacobi_agrees() {
        let d = Arc::new(Domain::rect([-1.0, 1.0], [-1.0, 1.0], 0.125).unwrap());
        let s = spec(
            &d,
            EllipticOperator::pucci_plus(0.5, 1.5).unwrap(),
            (1.0, 0.5, 2.0, 1.0),
            (1.0, 0.5),
            |p| p[0] - 0.5,
            |p| p[1],
            0.1,
        );
        let sw = positive_switch(&s);
        let opts = SolverOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let a = solve_frozen(&s, &sw, &opts).unwrap();
        let b = solve_frozen(&s, &sw, &opts).unwrap();
        assert!(a.converged);
        assert_eq!(a.solution.values(), b.solution.values());
        let j = solve_frozen(
            &s,
            &sw,
            &SolverOptions {
                sweep: Sweep::Jacobi,
                tol: 1e-8,
                ..opts.clone()
            },
        )
        .unwrap();
        assert!(j.converged, "jacobi residual {}", j.final_residual_norm);
        let diff = d
            .active_nodes()
            .map(|k| (a.solution.value(k) - j.solution.value(k)).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "diff {diff}");
        for k in d.interior_nodes() {
            assert!(residual(&a.solution, &s, &sw, k).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let d = Arc::new(Domain::interval(-1.0, 1.0, 1.0 / 32.0).unwrap());
        let s = spec(
            &d,
            EllipticOperator::neg_trace(),
            (1.0, 1.0, 1.0, 1.0),
            (0.0, 0.0),
            |_| -1.0,
            |_| 0.0,
            0.01,
        );
        let r = solve_frozen(
            &s,
            &positive_switch(&s),
            &SolverOptions {
                max_iter: 3,
                tol: 1e-14,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn raw_spec_is_rejected() {
        let d = Arc::new(Domain::interval(-1.0, 1.0, 0.125).unwrap());
        let s = spec(
            &d,
            EllipticOperator::neg_trace(),
            (1.0, 1.0, 1.0, 1.0),
            (0.0, 0.0),
            |_| -1.0,
            |_| 0.0,
            0.5,
        );
        let one = ScalarField::constant(d.clone(), Role::Solution, 1.0).unwrap();
        let raw = s
            .with_switch_source(SwitchSource::External(one))
            .unwrap()
            .with_epsilon(0.0)
            .unwrap();
        let sw = positive_switch(&raw);
        assert!(solve_frozen(&raw, &sw, &SolverOptions::default()).is_err());
    }

    #[test]
    fn comparison_detects_shift_and_perturbation() {
        let d = Arc::new(Domain::rect([-1.0, 1.0], [-1.0, 1.0], 0.125).unwrap());
        let s = spec(
            &d,
            EllipticOperator::neg_trace(),
            (1.0, 1.0, 2.0, 2.0),
            (0.5, 0.5),
            |_| 1.0,
            |p| p[0],
            0.1,
        );
        let sw = positive_switch(&s);
        let u = solve_frozen(
            &s,
            &sw,
            &SolverOptions {
                tol: 1e-11,
                ..Default::default()
            },
        )
        .unwrap()
        .solution;
        let opts = ComparisonOptions {
            residual_tol: 1e-3,
            order_tol: 1e-12,
        };
        let c = 1e-8;
        let sub = u.map(Role::Solution, |v| v - c).unwrap();
        let out = comparison_check(&s, &sw, &sub, &u, opts).unwrap();
        assert!(out.ordered);
        let node = d.node_at([0.25, -0.5]).unwrap();
        let mut bent = u.clone().into_values();
        bent[node] -= 2.0 * c;
        let bent = ScalarField::new(d.clone(), bent, Role::Solution).unwrap();
        let out = comparison_check(&s, &sw, &sub, &bent, opts).unwrap();
        assert!(!out.ordered);
        assert_eq!(out.worst_node, node);
        // a gross perturbation breaks the supersolution precondition
        let mut wild = u.into_values();
        wild[node] -= 1.0;
        let wild = ScalarField::new(d, wild, Role::Solution).unwrap();
        assert!(matches!(
            comparison_check(&s, &sw, &sub, &wild, opts),
            Err(Error::NotSubSuperPair { side: "super", .. })
        ));
    }
}
