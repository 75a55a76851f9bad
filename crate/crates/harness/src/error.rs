use std::fmt;
use std::path::PathBuf;

use dagf_core::loss::LossBreakdown;

#[derive(Debug)]
pub enum HarnessError {
    Core(dagf_core::CoreError),
    Io(std::io::Error),
    Image(String),
    /// Manifest lines that reference files which do not exist; collected
    /// exhaustively before aborting.
    MissingFiles(Vec<PathBuf>),
    Manifest(String),
    InvalidParameter(String),
    /// Training diverged; carries the failing epoch/iteration and the last
    /// loss term breakdown for diagnosis.
    NonFiniteLoss { epoch: usize, iteration: usize, breakdown: LossBreakdown },
    EmptyDataset,
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Core(e) => write!(f, "{e}"),
            HarnessError::Io(e) => write!(f, "io error: {e}"),
            HarnessError::Image(msg) => write!(f, "image error: {msg}"),
            HarnessError::MissingFiles(files) => {
                writeln!(f, "{} file(s) listed in the manifest are missing:", files.len())?;
                for file in files {
                    writeln!(f, "  {}", file.display())?;
                }
                Ok(())
            }
            HarnessError::Manifest(msg) => write!(f, "manifest error: {msg}"),
            HarnessError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            HarnessError::NonFiniteLoss { epoch, iteration, breakdown } => write!(
                f,
                "non-finite loss at epoch {epoch}, iteration {iteration}: l1={} ba={} ms={} total={}",
                breakdown.l1, breakdown.boundary, breakdown.multi_stage, breakdown.total
            ),
            HarnessError::EmptyDataset => write!(f, "dataset is empty"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<dagf_core::CoreError> for HarnessError {
    fn from(e: dagf_core::CoreError) -> Self {
        HarnessError::Core(e)
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<image::ImageError> for HarnessError {
    fn from(e: image::ImageError) -> Self {
        HarnessError::Image(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
