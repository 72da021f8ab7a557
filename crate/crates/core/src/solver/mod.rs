//! Gauss-Newton and Levenberg-Marquardt drivers over the block-sparse
//! quadratic approximation of the pose-graph objective.

pub mod sparse;
mod system;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::ConversionConfig;
use crate::error::Error;
use crate::error_model::{ErrorModel, RobustKernel};
use crate::graph::{GraphError, PoseGraph};

pub use system::{
    apply_update, build_quadratic, build_quadratic_unshared, chi2, geodesic_chi2, solve_linear,
    NodeIndex, Objective, QuadraticSystem,
};

/// Damping above which LM gives up on finding a descent step.
pub const LM_MAX_LAMBDA: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    GaussNewton,
    LevenbergMarquardt,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::GaussNewton => "gauss-newton",
            Algorithm::LevenbergMarquardt => "levenberg-marquardt",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gauss-newton" | "gn" => Ok(Algorithm::GaussNewton),
            "levenberg-marquardt" | "lm" => Ok(Algorithm::LevenbergMarquardt),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub error_model: ErrorModel,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers chi2 by no more than this.
    pub termination_epsilon: f64,
    pub kernel: RobustKernel,
    /// Geodesic model only.
    pub remap_omega: bool,
    /// Chordal model only.
    pub conversion: ConversionConfig,
    pub lm_initial_lambda: f64,
    pub lm_up_factor: f64,
    pub lm_down_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::GaussNewton,
            error_model: ErrorModel::Geodesic,
            max_iterations: 100,
            termination_epsilon: 1e-9,
            kernel: RobustKernel::None,
            remap_omega: false,
            conversion: ConversionConfig::default(),
            lm_initial_lambda: 1e-5,
            lm_up_factor: 10.0,
            lm_down_factor: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn new(error_model: ErrorModel, algorithm: Algorithm) -> Self {
        Self {
            error_model,
            algorithm,
            ..Self::default()
        }
    }

    // negated comparisons so that NaN is rejected as well
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.termination_epsilon >= 0.0) {
            return bad("termination_epsilon must be non-negative");
        }
        if !(self.lm_up_factor > 1.0 && self.lm_down_factor > 1.0) {
            return bad("LM factors must be greater than 1");
        }
        if !(self.lm_initial_lambda > 0.0) {
            return bad("LM initial lambda must be positive");
        }
        if let RobustKernel::Cauchy { width } = self.kernel {
            if !(width > 0.0) {
                return bad("kernel width must be positive");
            }
        }
        if !(self.conversion.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationStatus {
    Ok,
    NotPsd,
    GimbalLock,
    SolveFailed,
}

impl fmt::Display for IterationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IterationStatus::Ok => "ok",
            IterationStatus::NotPsd => "not_psd",
            IterationStatus::GimbalLock => "gimbal_lock",
            IterationStatus::SolveFailed => "solve_failed",
        })
    }
}

/// One row of the optimization trace. Iteration 0 is the initial guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Objective of the active model at the current estimate.
    pub chi2_native: f64,
    /// Geodesic objective with the original 6-D information; `None` when an
    /// edge of the estimate sits on the Euler singularity.
    pub chi2_geodesic: Option<f64>,
    /// Damping used for this iteration (LM only).
    pub lambda: Option<f64>,
    pub status: IterationStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Chi2 decrease fell below the termination threshold.
    Converged,
    MaxIterations,
    /// LM damping exceeded [`LM_MAX_LAMBDA`] without finding a descent step.
    Stalled,
    /// A numerical failure ended the run.
    Failed(IterationStatus),
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::Failed(_))
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("converged"),
            Termination::MaxIterations => f.write_str("max_iterations"),
            Termination::Stalled => f.write_str("stalled"),
            Termination::Failed(status) => write!(f, "failed:{status}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    /// Last successfully evaluated estimate.
    pub graph: PoseGraph,
    pub trace: Vec<IterationTrace>,
    pub termination: Termination,
}

impl OptimizationReport {
    /// Number of solver iterations (the initial evaluation is not counted).
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    /// Native chi2 of the returned estimate.
    pub fn final_chi2(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.chi2_native)
    }

    /// Geodesic chi2 of the returned estimate.
    pub fn final_geodesic_chi2(&self) -> Option<f64> {
        self.trace.last().and_then(|t| t.chi2_geodesic)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("information conversion failed: {0}")]
    Conversion(#[from] Error),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

fn status_of(err: &Error) -> IterationStatus {
    match err {
        Error::GimbalLock { .. } => IterationStatus::GimbalLock,
        _ => IterationStatus::SolveFailed,
    }
}

struct Run<'a> {
    config: &'a SolverConfig,
    objective: Objective,
    trace: Vec<IterationTrace>,
}

impl Run<'_> {
    fn record(&mut self, chi2_native: f64, graph: &PoseGraph, lambda: Option<f64>, status: IterationStatus) {
        let chi2_geodesic = if self.objective.model == ErrorModel::Geodesic
            && !self.objective.remap_omega
            && status == IterationStatus::Ok
        {
            Some(chi2_native)
        } else {
            geodesic_chi2(graph, self.config.kernel).ok()
        };
        self.trace.push(IterationTrace {
            iteration: self.trace.len(),
            chi2_native,
            chi2_geodesic,
            lambda,
            status,
        });
    }

    fn finish(self, graph: PoseGraph, termination: Termination) -> OptimizationReport {
        OptimizationReport {
            graph,
            trace: self.trace,
            termination,
        }
    }
}

/// Runs the configured algorithm from the node estimates stored in `graph`.
///
/// Numerical failures (non-positive-definite systems, gimbal lock under the
/// geodesic model) end the run early and are reported in the trace and
/// [`Termination`]; they are not errors. `Err` is reserved for invalid input.
pub fn optimize(graph: &PoseGraph, config: &SolverConfig) -> Result<OptimizationReport, SolverError> {
    config.validate()?;
    graph.validate_for_solving()?;
    let objective = Objective::new(
        graph,
        config.error_model,
        config.kernel,
        config.remap_omega,
        &config.conversion,
    )?;
    let mut run = Run {
        config,
        objective,
        trace: Vec::with_capacity(config.max_iterations + 1),
    };
    let state = graph.clone();
    let current = match chi2(&state, &run.objective) {
        Ok(c) => c,
        Err(e) => {
            let status = status_of(&e);
            run.record(f64::NAN, &state, None, status);
            return Ok(run.finish(state, Termination::Failed(status)));
        }
    };
    match config.algorithm {
        Algorithm::GaussNewton => {
            run.record(current, &state, None, IterationStatus::Ok);
            Ok(gauss_newton(run, state, current))
        }
        Algorithm::LevenbergMarquardt => {
            run.record(current, &state, Some(config.lm_initial_lambda), IterationStatus::Ok);
            Ok(levenberg_marquardt(run, state, current))
        }
    }
}

fn gauss_newton(mut run: Run<'_>, mut state: PoseGraph, mut current: f64) -> OptimizationReport {
    for _ in 0..run.config.max_iterations {
        let system = match build_quadratic(&state, &run.objective) {
            Ok(s) => s,
            Err(e) => {
                let status = status_of(&e);
                run.record(current, &state, None, status);
                return run.finish(state, Termination::Failed(status));
            }
        };
        let dx = match solve_linear(&system, 0.0) {
            Ok(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            Ok(_) => {
                run.record(current, &state, None, IterationStatus::SolveFailed);
                return run.finish(state, Termination::Failed(IterationStatus::SolveFailed));
            }
            Err(_) => {
                run.record(current, &state, None, IterationStatus::NotPsd);
                return run.finish(state, Termination::Failed(IterationStatus::NotPsd));
            }
        };
        let candidate = apply_update(&state, &dx);
        let next = match chi2(&candidate, &run.objective) {
            Ok(c) if c.is_finite() => c,
            Ok(_) => {
                run.record(current, &state, None, IterationStatus::SolveFailed);
                return run.finish(state, Termination::Failed(IterationStatus::SolveFailed));
            }
            Err(e) => {
                let status = status_of(&e);
                run.record(current, &state, None, status);
                return run.finish(state, Termination::Failed(status));
            }
        };
        state = candidate;
        run.record(next, &state, None, IterationStatus::Ok);
        let decrease = current - next;
        current = next;
        if decrease <= run.config.termination_epsilon {
            return run.finish(state, Termination::Converged);
        }
    }
    run.finish(state, Termination::MaxIterations)
}

fn levenberg_marquardt(mut run: Run<'_>, mut state: PoseGraph, mut current: f64) -> OptimizationReport {
    let config = *run.config;
    let mut lambda = config.lm_initial_lambda;
    let mut system: Option<QuadraticSystem> = None;
    for _ in 0..config.max_iterations {
        if lambda > LM_MAX_LAMBDA {
            return run.finish(state, Termination::Stalled);
        }
        if system.is_none() {
            match build_quadratic(&state, &run.objective) {
                Ok(s) => system = Some(s),
                Err(e) => {
                    let status = status_of(&e);
                    run.record(current, &state, Some(lambda), status);
                    return run.finish(state, Termination::Failed(status));
                }
            }
        }
        let sys = system.as_ref().expect("system built above");
        let dx = match solve_linear(sys, lambda) {
            Ok(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            outcome => {
                // recoverable: more damping makes the system better conditioned
                let status = if outcome.is_ok() {
                    IterationStatus::SolveFailed
                } else {
                    IterationStatus::NotPsd
                };
                run.record(current, &state, Some(lambda), status);
                lambda *= config.lm_up_factor;
                continue;
            }
        };
        let candidate = apply_update(&state, &dx);
        let next = match chi2(&candidate, &run.objective) {
            Ok(c) if c.is_finite() => Some(c),
            Ok(_) => None,
            Err(Error::GimbalLock { .. }) => {
                run.record(current, &state, Some(lambda), IterationStatus::GimbalLock);
                return run.finish(state, Termination::Failed(IterationStatus::GimbalLock));
            }
            Err(_) => None,
        };
        match next {
            Some(next) if next < current => {
                let used = lambda;
                state = candidate;
                system = None;
                lambda /= config.lm_down_factor;
                run.record(next, &state, Some(used), IterationStatus::Ok);
                let decrease = current - next;
                current = next;
                if decrease <= config.termination_epsilon {
                    return run.finish(state, Termination::Converged);
                }
            }
            Some(next) if (next - current).abs() <= config.termination_epsilon => {
                run.record(current, &state, Some(lambda), IterationStatus::Ok);
                return run.finish(state, Termination::Converged);
            }
            _ => {
                run.record(current, &state, Some(lambda), IterationStatus::Ok);
                lambda *= config.lm_up_factor;
            }
        }
    }
    run.finish(state, Termination::MaxIterations)
}
