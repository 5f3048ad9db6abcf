use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid delivery partition: {0}")]
    Partition(String),
    #[error("breakpoint {value} is not representable on a grid of {grid} cells")]
    GridMismatch { value: f64, grid: usize },
    #[error("partitions are not nested: coarse breakpoint {0} missing from fine partition")]
    NotNested(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not enough observations: need {needed}, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lag-0 moment matrix is numerically singular (condition number {cond:.3e}); supply a ridge")]
    SingularGram { cond: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("zero variance on diagonal entry {0}")]
    ZeroDiagonal(usize),
    #[error("regressor `{0}` is collinear with preceding columns")]
    Collinear(String),
    #[error("degenerate regressor: {0}")]
    Degenerate(String),
    #[error("long-run covariance is singular; reduce the dimension")]
    SingularLongRun,
    #[error("total variation is zero")]
    ZeroVariation,
    #[error("non-stationary mode {0}: zero decay rate with positive volatility")]
    NonStationaryMode(usize),
    #[error("malformed data table: {0}")]
    Table(String),
}
