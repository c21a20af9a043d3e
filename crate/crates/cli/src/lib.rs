//! Configuration-driven experiment runner for the `slowfast` library.

use std::path::PathBuf;

pub mod config;
pub mod pipeline;
pub mod plot;

pub use config::{Command, ExperimentConfig, GridConfig};
pub use pipeline::{run, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("output directory {0} already exists; pass --force to overwrite")]
    Exists(PathBuf),

    #[error(transparent)]
    Numerical(#[from] slowfast::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("plot: {0}")]
    Plot(String),
}

impl RunError {
    /// 1 for invalid input, 2 for failures while computing or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } | Self::Exists(_) => 1,
            Self::Numerical(e) => match e {
                slowfast::Error::Domain { .. } | slowfast::Error::UnknownModel(_) | slowfast::Error::Dimension(_) => 1,
                _ => 2,
            },
            Self::Io { .. } | Self::Plot(_) => 2,
        }
    }
}
