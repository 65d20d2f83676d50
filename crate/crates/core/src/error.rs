use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("poisson component evaluated at non-integer value {0}")]
    NonIntegerCount(f64),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot fit {k} components to {n} observations")]
    TooFewObservations { k: usize, n: usize },

    #[error("every EM restart degenerated for K = {k}")]
    DegenerateFit { k: usize },

    #[error("estimator needs at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("model assigns zero probability to observed value {0}")]
    ZeroModelMass(f64),

    #[error("model log-density is not finite at a sample")]
    NonFiniteModelDensity,

    #[error("estimator failed on component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("estimator {estimator} does not support family {family}")]
    UnsupportedEstimator { estimator: String, family: String },

    #[error("missing labels in dataset {0}")]
    MissingLabels(String),

    #[error("no candidate model could be fitted")]
    NoCandidates,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Broad class of the failure, used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::UnsupportedEstimator { .. } => ErrorKind::Config,
            Error::DimensionMismatch { .. }
            | Error::NonIntegerCount(_)
            | Error::InvalidData(_)
            | Error::EmptyDataset
            | Error::MissingLabels(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Io(_) => ErrorKind::Data,
            Error::NotPositiveDefinite
            | Error::TooFewObservations { .. }
            | Error::DegenerateFit { .. }
            | Error::InsufficientSamples { .. }
            | Error::ZeroModelMass(_)
            | Error::NonFiniteModelDensity
            | Error::NoCandidates => ErrorKind::Numerical,
            Error::Component { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
