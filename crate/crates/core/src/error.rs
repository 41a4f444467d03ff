use thiserror::Error;

pub type Result<T> = std::result::Result<T, BoundsError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    /// An input violates a domain invariant (range, normalisation, shape).
    #[error("{0}")]
    Domain(String),

    /// The two marginals imply different values of P(Z=1), so no joint
    /// distribution reproduces both.
    #[error(
        "incompatible marginals{}: compatibility identity fails, target implies P(Z=1) = {target}, external implies P(Z=1) = {external}",
        stratum.map(|c| format!(" in stratum {c}")).unwrap_or_default()
    )]
    Incompatible {
        target: f64,
        external: f64,
        stratum: Option<usize>,
    },

    #[error("expected an external support of {expected} values, found {found}")]
    Arity { expected: usize, found: usize },

    #[error("assignment lies outside the coherence box: {0}")]
    OutOfBox(String),

    #[error("free-parameter box is empty: {0}")]
    EmptyBox(String),

    #[error("grid of {points:e} points exceeds the enumeration budget of {budget:e}")]
    Budget { points: f64, budget: f64 },

    #[error("no feasible grid point: {0}")]
    Infeasible(String),

    /// Closed-form bounds crossed; only reachable for inputs that slipped
    /// past the compatibility tolerance.
    #[error("lower bound {lower} exceeds upper bound {upper}")]
    Inverted { lower: f64, upper: f64 },
}

impl BoundsError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        BoundsError::Domain(msg.into())
    }
}
