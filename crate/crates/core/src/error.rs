use thiserror::Error;

#[derive(Debug, Error)]
pub enum LfError {
    #[error("index out of range: {what} = {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite sample at {0}")]
    NonFinite(String),
    #[error("alias at DC cannot be suppressed by spatial prefiltering (amplitude {amplitude}, gamma {gamma})")]
    Unfilterable { amplitude: f64, gamma: f64 },
    #[error("spectrum is flat; slope undefined")]
    UndefinedSlope,
    #[error("slice ({axis} {a}, {b}): {source}")]
    Slice {
        axis: &'static str,
        a: usize,
        b: usize,
        #[source]
        source: Box<LfError>,
    },
    #[error("container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl LfError {
    /// Whether the failure is numerical rather than a validation problem.
    pub fn is_numerical(&self) -> bool {
        match self {
            LfError::NonFinite(_) | LfError::Unfilterable { .. } | LfError::UndefinedSlope => true,
            LfError::Slice { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = LfError> = std::result::Result<T, E>;
