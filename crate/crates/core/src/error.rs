use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("calibration format error: {0}")]
    CalibFormat(String),

    #[error("invalid calibration: {0}")]
    InvalidCalib(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("undefined smoothness: point at sensor origin")]
    UndefinedSmoothness,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("ill-conditioned kernel matrix: {0}")]
    IllConditioned(String),

    #[error("no overlap: zero gated correspondences at iteration {iteration}")]
    NoOverlap { iteration: usize },

    #[error("registration diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("map format error: {0}")]
    MapFormat(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("remote review failed: {0}")]
    RemoteReview(String),

    #[error("missing verdict for frames {0:?}")]
    MissingVerdict(Vec<u32>),

    #[error("unmatched frame ids {0:?}")]
    UnmatchedFrames(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
