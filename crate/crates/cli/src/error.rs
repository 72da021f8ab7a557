use std::path::PathBuf;

use chordal_pgo::io::GraphIoError;
use chordal_pgo::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Graph(#[from] GraphIoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid manifest {}: {source}", path.display())]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad invocations, 2 for unreadable or malformed inputs and
    /// failed writes.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::Graph(GraphIoError::InvalidSpec(_))
            | CliError::Solver(SolverError::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}
