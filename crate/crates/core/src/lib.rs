//! Monotone finite-difference solvers and verification probes for fully
//! nonlinear, degenerate elliptic double-phase free transmission problems
//!
//! ```text
//! H(x, u, Du) F(D^2 u) = f   in Omega,      u = g   on the boundary,
//! ```
//!
//! where the degeneracy `H` switches between `|Du|^{p+} + a(x)|Du|^q` on
//! `{u > 0}` and `|Du|^{p-} + b(x)|Du|^s` on `{u < 0}`.
//!
//! The pipeline mirrors the constructive existence argument: regularize the
//! switch ([`scheme`]), bracket with explicit barriers ([`barriers`]), solve
//! at frozen sign sets ([`solver`]) and iterate the sign sets
//! ([`transmission`]). [`regularity`] and [`viscosity`] probe the output.

pub mod barriers;
pub mod error;
pub mod field;
pub mod io;
pub mod operators;
pub mod regularity;
pub mod scheme;
pub mod solver;
pub mod transmission;
pub mod viscosity;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use field::{Domain, Point, Role, ScalarField, Shape};
pub use operators::{DegeneracyLaw, EllipticOperator, Phase};
pub use scheme::{MollifiedSwitch, ProblemSpec, SwitchSource};
pub use solver::{SolveReport, SolverOptions};
pub use transmission::{transmission_solve, TransmissionOptions, TransmissionResult};
pub use viscosity::{touching_scan, ScanOptions, ScanReport, TouchMode};
