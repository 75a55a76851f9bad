use std::fmt;

/// Errors produced by tensor ops, filters, the network, and checkpoint IO.
#[derive(Debug)]
pub enum CoreError {
    /// Tensor/image dimensions do not satisfy an operation's contract.
    ShapeMismatch(String),
    /// A numeric argument is outside its valid domain (e.g. epsilon <= 0).
    InvalidParameter(String),
    /// An input contains NaN or infinity where finite values are required.
    NonFinite(String),
    /// `backward` was invoked on a non-scalar node.
    NonScalarLoss { numel: usize },
    /// An optimizer step is missing the gradient for a trainable parameter.
    MissingGradient { name: String },
    /// A named parameter was not found in the parameter store.
    UnknownParameter { name: String },
    /// Checkpoint payload is truncated or structurally invalid.
    CorruptCheckpoint(String),
    /// Checkpoint format version is not understood.
    CheckpointVersion { found: u32, expected: u32 },
    /// Checkpoint metadata disagrees with the requested configuration.
    ConfigMismatch(String),
    /// Wrapped I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            CoreError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            CoreError::NonFinite(msg) => write!(f, "non-finite input: {msg}"),
            CoreError::NonScalarLoss { numel } => {
                write!(f, "backward requires a scalar loss, got {numel} elements")
            }
            CoreError::MissingGradient { name } => {
                write!(f, "missing gradient for trainable parameter `{name}`")
            }
            CoreError::UnknownParameter { name } => {
                write!(f, "unknown parameter `{name}`")
            }
            CoreError::CorruptCheckpoint(msg) => write!(f, "corrupt checkpoint: {msg}"),
            CoreError::CheckpointVersion { found, expected } => {
                write!(f, "unsupported checkpoint version {found} (expected {expected})")
            }
            CoreError::ConfigMismatch(msg) => write!(f, "config mismatch: {msg}"),
            CoreError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoreError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
