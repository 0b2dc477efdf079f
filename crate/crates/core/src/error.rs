use thiserror::Error;

/// Errors raised by the tracking library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("error-state overflow: small-rotation vector norm {0} exceeds 1")]
    ErrorStateOverflow(f64),
    #[error("degenerate correspondence set: {0} points, at least 3 required")]
    DegenerateCorrespondences(usize),
    #[error("point sets differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("alignment ambiguous: largest eigenvalue of the alignment matrix is not simple")]
    AlignmentAmbiguous,
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("non-physical inertia: {0}")]
    NonPhysicalInertia(String),
    #[error("singular inertia ratio: p_x = {0}")]
    SingularInertiaRatio(f64),
    #[error("singular gravity evaluation: target within 1 m of the Earth centre")]
    SingularGravity,
    #[error("invalid time step: {0}")]
    InvalidTimeStep(String),
    #[error("measurement rejected (ill-conditioned innovation covariance, condition {0:e})")]
    IllConditioned(f64),
    #[error("filter divergence: {0}")]
    FilterDivergence(String),
    #[error("invalid fault schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ply: {0}")]
    Ply(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
