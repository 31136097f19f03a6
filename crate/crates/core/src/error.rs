use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("droplet not compact at given R_max (R_max = {r_max})")]
    DropletNotCompact { r_max: f64 },
    #[error("level set not found for mu = {mu}")]
    LevelSetNotFound { mu: f64 },
    #[error("insufficient quadrature: {0}")]
    InsufficientQuadrature(String),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("quadrature/truncation failure: {0}")]
    QuadratureFailure(String),
    #[error("level curve not closed (check that the level set is a single regular curve); integrated to t = {t}")]
    CurveNotClosed { t: f64 },
    #[error("critical point on level curve near ({x}, {y})")]
    CriticalPoint { x: f64, y: f64 },
    #[error("delta window contains no eigenvalues")]
    EmptyWindow,
    #[error("support condition violated: {0}")]
    Support(String),
    #[error("non-positive spectrum: {0}")]
    NonPositive(String),
    #[error("rejection budget exhausted at point {point} (acceptance rate {rate:.3e})")]
    RejectionBudget { point: usize, rate: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
