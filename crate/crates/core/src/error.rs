use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("node {node} needs interior node")]
    NotInterior { node: usize },

    #[error("node {node} is missing stencil neighbor in direction {direction:?}")]
    MissingNeighbor { node: usize, direction: (i64, i64) },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid degeneracy law: {0}")]
    InvalidLaw(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("exterior sphere not constructible: {0}")]
    ExteriorSphere(String),

    #[error("pseudo-time step underflow after {iterations} iterations (step {step:e})")]
    Stall { iterations: usize, step: f64 },

    #[error("not a sub/supersolution pair: {side} residual {residual:e} at node {node}")]
    NotSubSuperPair {
        side: &'static str,
        node: usize,
        residual: f64,
    },

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("smallness regime violated: {0}")]
    Smallness(String),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
