//! 3D pose-graph optimization with a choice of two error functions:
//! a minimal 6-D Euler-angle ("geodesic") residual and a 12-D residual on
//! flattened isometries ("chordal") with closed-form Jacobians.
//!
//! ```
//! use chordal_pgo::io::{generate_synthetic, inject_noise, NoiseSpec, Shape, SyntheticSpec};
//! use chordal_pgo::{optimize, ErrorModel, Algorithm, SolverConfig};
//!
//! let truth = generate_synthetic(&SyntheticSpec::new(Shape::Torus, 30, 0.5), 1).unwrap();
//! let noisy = inject_noise(&truth, &NoiseSpec::new([0.01; 3], [0.001; 3], 7));
//! let init = chordal_pgo::io::initial_guess_odometry(&noisy).unwrap();
//! let config = SolverConfig::new(ErrorModel::Chordal, Algorithm::LevenbergMarquardt);
//! let report = optimize(&init, &config).unwrap();
//! assert!(report.final_chi2() <= report.trace[0].chi2_native);
//! ```

pub mod covariance;
pub mod error;
pub mod error_model;
pub mod graph;
pub mod io;
pub mod se3;
pub mod solver;

pub use error::Error;
pub use error_model::{ErrorModel, RobustKernel};
pub use graph::{Edge, GraphError, NodeId, PoseGraph};
pub use se3::Isometry3;
pub use solver::{
    optimize, Algorithm, IterationStatus, IterationTrace, OptimizationReport, SolverConfig,
    SolverError, Termination,
};
