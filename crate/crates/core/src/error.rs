use thiserror::Error;

/// Errors raised by the registration library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("selection contains no points")]
    EmptySelection,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("scale factor must be positive, got {0}")]
    NonPositiveFactor(f64),
    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),
    #[error("point cloud has no part labels")]
    MissingPartLabels,
    #[error("parts {0} and {1} are not adjacent")]
    NotAdjacent(u32, u32),
    #[error("unknown part {0}")]
    UnknownPart(u32),
    #[error("junction set has no anchors")]
    NoAnchors,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("subsampling retained no points")]
    EmptyResult,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("too few correspondences: have {have}, need {need}")]
    TooFewCorrespondences { have: usize, need: usize },
    #[error("no consensus: best support {best}, need {need}")]
    NoConsensus { best: usize, need: usize },
    #[error("no source point has a target neighbour within {0}")]
    NoPairsWithinDistance(f64),
    #[error("part {0} is not movable")]
    NotMovable(u32),
    #[error("no cluster found")]
    NoClusterFound,
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("ground truth is missing")]
    MissingGroundTruth,
    #[error("no pending checkpoint")]
    NoPendingCheckpoint,
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
