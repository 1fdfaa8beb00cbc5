use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("{what} is not symmetric positive definite: {detail}")]
    NotSpd { what: String, detail: String },

    #[error("singular linear map (smallest singular value {smallest_singular_value:e})")]
    Singular { smallest_singular_value: f64 },

    #[error("total covariance is rank deficient: eigenvalue #{index} = {eigenvalue:e} (threshold {threshold:e})")]
    RankDeficient {
        index: usize,
        eigenvalue: f64,
        threshold: f64,
    },

    #[error("degenerate cell: every covariance eigenvalue is below the floor {floor:e}")]
    DegenerateCell { floor: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("means span {rank} dimensions, need {needed}")]
    MeanSpanDeficient { rank: usize, needed: usize },

    #[error("mixture is not isotropic: {0}")]
    NotIsotropic(String),

    #[error("basis is not orthonormal: ||B^T B - I|| = {deviation:e}")]
    NotOrthonormal { deviation: f64 },

    #[error("separation hypothesis violated: |p^T(mu1 - mu2)| = {gap:e} <= {required:e}")]
    SeparationViolated { gap: f64, required: f64 },

    #[error("zero denominator in Fisher ratio")]
    ZeroDenominator,

    #[error("no separating direction: reweighted mean and second moment are both zero")]
    NoDirection,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by bad input files or arguments rather than
    /// by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::InvalidArgument(_)
                | Error::InvalidMixture(_)
                | Error::DimensionMismatch { .. }
        )
    }
}
