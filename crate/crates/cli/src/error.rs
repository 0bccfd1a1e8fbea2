use std::path::PathBuf;

use thiserror::Error;

use flmm::FlmmError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(clap::Error),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{}:{line}: {msg}", path.display())]
    Input { path: PathBuf, line: u64, msg: String },

    #[error("{}: {msg}", path.display())]
    Data { path: PathBuf, msg: String },

    #[error(transparent)]
    Compute(#[from] FlmmError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 compute or I/O failure, 2 usage or validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Clap(e) => {
                if e.use_stderr() {
                    2
                } else {
                    0
                }
            }
            Self::Usage(_) | Self::Input { .. } | Self::Data { .. } => 2,
            Self::Compute(_) | Self::Io { .. } => 1,
        }
    }
}
