use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit codes. Stable contract.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const SHAPE: u8 = 3;
    pub const STALLED: u8 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        source: ckascope::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] ckascope::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input {
                source: ckascope::Error::ShapeMismatch(_),
                ..
            } => exit::SHAPE,
            Self::Input { .. } | Self::Usage(_) => exit::PARSE,
            Self::Core(ckascope::Error::Parse(_)) => exit::PARSE,
            Self::Core(ckascope::Error::ShapeMismatch(_)) => exit::SHAPE,
            Self::Core(ckascope::Error::Stalled { .. }) => exit::STALLED,
            _ => exit::OTHER,
        }
    }
}
