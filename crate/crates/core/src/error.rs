use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("capture contains no frames")]
    EmptyCapture,

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid stride {stride} ms for window of {duration} ms")]
    InvalidStride { stride: u64, duration: u64 },

    #[error("invalid sensor setup: {0}")]
    InvalidSetup(String),

    #[error("invalid detection: {0}")]
    InvalidDetection(String),

    #[error("non-positive input: {0}")]
    NonPositiveInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("agent unavailable: {0}")]
    AgentUnavailable(String),

    #[error("malformed agent reply: {0}")]
    MalformedAgentReply(String),

    #[error("node {node} is already at the maximum depth {max_depth}")]
    DepthExceeded { node: usize, max_depth: usize },

    #[error("extent mismatch: {0}")]
    MismatchedExtent(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("no samples to evaluate")]
    EmptySamples,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MalformedRecord { .. } => "malformed-record",
            Self::EmptyCapture => "empty-capture",
            Self::InvalidWindow(_) => "invalid-window",
            Self::InvalidStride { .. } => "invalid-stride",
            Self::InvalidSetup(_) => "invalid-setup",
            Self::InvalidDetection(_) => "invalid-detection",
            Self::NonPositiveInput(_) => "non-positive-input",
            Self::InvalidParameter(_) => "invalid-parameter",
            Self::AgentUnavailable(_) => "agent-unavailable",
            Self::MalformedAgentReply(_) => "malformed-agent-reply",
            Self::DepthExceeded { .. } => "depth-exceeded",
            Self::MismatchedExtent(_) => "mismatched-extent",
            Self::InvalidSpec(_) => "invalid-spec",
            Self::EmptySamples => "empty-samples",
            Self::Invariant(_) => "invariant-violation",
            Self::Image(_) => "image",
            Self::Json(_) => "json",
            Self::Io(_) => "io",
        }
    }
}
