//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by jet algebra, classification, group and solver operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A coefficient slot violates a structural invariant: constant term,
    /// degree-1 entry in the nonlinear table, a pure-x monomial in a
    /// transversal component, or (in strict mode) a slot outside truncation.
    #[error("slot violation: {0}")]
    SlotViolation(String),

    /// Linear part is not invertible.
    #[error("singular linear part")]
    SingularLinear,

    /// Linear part maps the stable subspace outside itself.
    #[error("linear part maps stable coordinates outside the stable subspace")]
    StableLeak,

    /// Operands disagree on block structure or truncation order.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Rescaling factor must be positive.
    #[error("rescale factor must be positive")]
    NonPositiveScale,

    /// Residual-order grid unusable (too few points, non-positive or
    /// non-decreasing scales, zero direction).
    #[error("degenerate residual grid: {0}")]
    DegenerateGrid(String),

    /// Block or component index outside the declared structure.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Slot degrees violate a classification precondition.
    #[error("degree violation: {0}")]
    DegreeViolation(String),

    /// A projection was asked of a map that still carries a linear part.
    #[error("operand has a nonzero linear part")]
    LinearPartPresent,

    /// The band half-width makes the tail estimate fail.
    #[error("epsilon too large: {0}")]
    EpsilonTooLarge(String),

    /// Group composition or inversion left the sub-resonance span.
    #[error("closure violation: {0}")]
    ClosureViolation(String),

    /// A cocycle linear part is not block-diagonal or leaves its band.
    #[error("spectral violation: {0}")]
    SpectralViolation(String),

    /// Sweep schedule exhausted without meeting the tolerance.
    #[error("no convergence: delta {last_delta:e} >= tol {tol:e} at horizon {horizon}")]
    NoConvergence {
        last_delta: f64,
        tol: f64,
        horizon: usize,
    },

    /// A gauge factor is not a pure sub-resonance automorphism.
    #[error("gauge factor not in the unit-linear sub-resonance group: {0}")]
    NotInGPlus(String),

    /// Scenario parameters invalid for the requested kind.
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),

    /// Held-out residual of a jet fit exceeds the higher-order scale.
    #[error("jet fit failure: {0}")]
    FitFailure(String),

    /// Band estimation needs more sample matrices.
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    /// Invalid domain data (spectral ordering, block structure, config).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// File parse or serialization problem.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
