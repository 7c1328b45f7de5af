use std::path::PathBuf;

/// Errors produced by labelsmith.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box [{x}, {y}, {w}, {h}]: {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("score out of range: {0}")]
    ScoreOutOfRange(f64),

    #[error("box transform {0} requires a positive image width")]
    MissingImageWidth(&'static str),

    #[error("{}: record {record}, field `{field}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        record: usize,
        field: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("unknown image `{0}`")]
    UnknownImage(String),

    #[error("insufficient images: {0}")]
    InsufficientImages(String),

    #[error("consistency is undefined without augmented prediction sets")]
    NoAugmentedVariants,

    #[error("no matched detections")]
    NoMatchedDetections,

    #[error("degenerate labels: ROC needs both positive and negative examples")]
    DegenerateLabels,

    #[error("{0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        record: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            record,
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad invocation.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
