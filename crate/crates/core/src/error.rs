use thiserror::Error;

/// Crate-wide error type.
///
/// Every variant maps to a stable machine-readable category string (see
/// [`Error::category`]) so command-line tools can emit single-line
/// `category: message` diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a construction contract (non-finite coordinate,
    /// non-positive depth, out-of-range intensity, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operand shapes disagree (image vs. depth dims, parameter vector
    /// length, dims not divisible by the network's downsampling factor, ...).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Geometry too degenerate to triangulate (fewer than three distinct
    /// sites, all sites collinear).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A quantity is undefined on the given input (empty valid set for a
    /// loss or metric).
    #[error("undefined: {0}")]
    Undefined(String),

    /// A file does not conform to its documented format.
    #[error("format error: {0}")]
    Format(String),

    /// An API contract between calls was broken (e.g. backward invoked with
    /// activations from a different forward pass).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Wraps a failure with the pipeline stage it occurred in.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable category token for machine-parseable CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Shape(_) => "shape",
            Error::Degenerate(_) => "degenerate",
            Error::Undefined(_) => "undefined",
            Error::Format(_) => "format",
            Error::Contract(_) => "contract",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Stage { source, .. } => source.category(),
        }
    }

    /// Attaches a pipeline stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
