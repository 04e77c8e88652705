use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage that produced an error, used to tag CLI diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Io,
    Superpixel,
    Features,
    Mjcr,
    Graphcut,
    Shapefilter,
    Tensorvote,
    Centerline,
    Eval,
    Synth,
    Config,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Io => "io",
            Stage::Superpixel => "superpixel",
            Stage::Features => "features",
            Stage::Mjcr => "mjcr",
            Stage::Graphcut => "graphcut",
            Stage::Shapefilter => "shapefilter",
            Stage::Tensorvote => "tensorvote",
            Stage::Centerline => "centerline",
            Stage::Eval => "eval",
            Stage::Synth => "synth",
            Stage::Config => "config",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: unsupported image format: {message}")]
    Unsupported { path: PathBuf, message: String },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("point ({row}, {col}) outside {width}x{height} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not enough qualifying {class} objects: need {needed}, found {found}")]
    InsufficientSamples {
        class: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("[{stage}] {source}")]
    Staged {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Wraps the error with a stage tag. Already-tagged errors keep their
    /// innermost tag.
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Staged { .. } => e,
            e => Error::Staged {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Staged { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
