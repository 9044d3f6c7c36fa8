use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate set: {0}")]
    DegenerateSet(&'static str),
    #[error("grid geometry mismatch")]
    GeometryMismatch,
    #[error("cell size mismatch: kernel a = {kernel}, grid a = {grid}")]
    CellSizeMismatch { kernel: f64, grid: f64 },
    #[error("self-interaction undefined")]
    SelfInteraction,
    #[error("L_s requires disjoint sets")]
    Overlap,
    #[error("cell ({0}, {1}) is not a boundary cell")]
    NotBoundary(usize, usize),
    #[error("degenerate band")]
    DegenerateBand,
    #[error("band overflow: h too large for gamma")]
    BandOverflow,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("assertion failed: {0}")]
    Assert(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
