//! Pose-graph files, synthetic datasets, measurement noise and initial guesses.

mod g2o;
mod init;
mod noise;
mod synthetic;

use thiserror::Error;

use crate::graph::{GraphError, NodeId};

pub use g2o::{format_g2o, load_g2o, parse_g2o, save_g2o, QUATERNION_RENORMALIZE_LIMIT};
pub use init::{initial_guess_odometry, initial_guess_spanning_tree, InitStrategy};
pub use noise::{inject_noise, NoiseSpec, INFORMATION_CAP};
pub use synthetic::{generate_synthetic, Shape, SyntheticSpec};

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph: {0}")]
    Structure(#[from] GraphError),
    #[error("no odometry edge between consecutive nodes {from} and {to}")]
    MissingOdometry { from: NodeId, to: NodeId },
    #[error("graph is disconnected; unreachable components: {components:?}")]
    Disconnected { components: Vec<Vec<NodeId>> },
    #[error("graph has no nodes")]
    Empty,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
}
