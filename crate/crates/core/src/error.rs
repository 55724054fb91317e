use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the model, integrator and diagnostics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid swarm state: {0}")]
    InvalidState(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("formation has {got} offsets of dimension {got_dim}, swarm needs {expected} of dimension {expected_dim}")]
    FormationMismatch {
        got: usize,
        got_dim: usize,
        expected: usize,
        expected_dim: usize,
    },

    /// The interaction kernel was asked for a weight at a distance outside its domain.
    #[error("kernel evaluated outside its domain at r = {r:e}")]
    SingularEvaluation { r: f64 },

    /// Two agents sit at (or inside the singular radius of) each other.
    #[error("agents {i} and {j} overlap (r = {r:e})")]
    Overlap { i: usize, j: usize, r: f64 },

    #[error("initial distance {distance:e} between agents {i} and {j} does not exceed the collision threshold {eps:e}")]
    InitialOverlap {
        i: usize,
        j: usize,
        distance: f64,
        eps: f64,
    },

    #[error("state became non-finite at t = {t} (accepted step {step})")]
    NonFinite { t: f64, step: usize },

    #[error("no solution: {0}")]
    NoSolution(String),
}
