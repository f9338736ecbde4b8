use thiserror::Error;

/// Diagnostics of a selection run that stopped before its barriers separated.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRun {
    pub iterations: usize,
    pub gamma: f64,
    pub mid: f64,
    pub lower: f64,
    pub upper: f64,
    pub sum_gamma_over_phi: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("symmetric eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    Convergence { sweeps: usize, off_norm: f64 },

    #[error("matrix is numerically singular: lambda_min = {lambda_min:e} is below the floor {floor:e}")]
    SingularMatrix { lambda_min: f64, floor: f64 },

    #[error("degenerate rank-one update: 1 + s * u'M^-1u = {denominator:e}")]
    DegenerateUpdate { denominator: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("value does not fit in 64 bits (natural log of the value is {log_value:.3})")]
    Overflow { log_value: f64 },

    #[error(
        "barrier violation at iteration {iteration}: spectrum [{lambda_min}, {lambda_max}] left ({lower}, {upper})"
    )]
    BarrierViolation {
        iteration: usize,
        lambda_min: f64,
        lambda_max: f64,
        lower: f64,
        upper: f64,
    },

    #[error("iteration cap of {cap} reached before the barrier gap closed (after {} draws)", .partial.iterations)]
    IterationCap { cap: usize, partial: PartialRun },

    #[error("model was fitted against basis {expected} but basis {found} was supplied")]
    BasisMismatch { expected: String, found: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn domain_err(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
