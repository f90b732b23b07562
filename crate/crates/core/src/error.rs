use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("rdfs:subClassOf cycle through class `{0}`")]
    Cycle(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("no embedding for `{0}`")]
    MissingVector(String),

    #[error("lookup failed for sub-phrase `{phrase}`: {message}")]
    Lookup { phrase: String, message: String },

    #[error("training data has a single class; need both positives and negatives")]
    SingleClass,

    #[error("feature width {got} does not match model input width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("non-finite score for {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("target `{0}` has no ground truth annotation")]
    UnknownGroundTruth(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed{}: {source}", target.as_ref().map(|t| format!(" on target {t}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        target: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str, target: Option<String>) -> Self {
        Error::Stage {
            stage,
            target,
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Cycle(_) => "cycle",
            Error::UnknownEntity(_) => "unknown_entity",
            Error::MissingVector(_) => "missing_vector",
            Error::Lookup { .. } => "lookup",
            Error::SingleClass => "single_class",
            Error::WidthMismatch { .. } => "width_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Empty(_) => "empty",
            Error::UnknownGroundTruth(_) => "unknown_ground_truth",
            Error::Config(_) => "config",
            Error::Stage { .. } => "stage",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
