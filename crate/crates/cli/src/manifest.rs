//! Everything needed to reproduce a run, serialized next to its outputs.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chordal_pgo::io::{generate_synthetic, inject_noise, load_g2o, InitStrategy, NoiseSpec, SyntheticSpec};
use chordal_pgo::{ErrorModel, PoseGraph, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Optimize,
    EpsilonSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GraphSource {
    File { path: PathBuf },
    Synthetic { spec: SyntheticSpec, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    #[default]
    Odometry,
    SpanningTree,
    /// Keep the vertex estimates stored in the input.
    File,
}

impl fmt::Display for InitChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitChoice::Odometry => InitStrategy::Odometry.fmt(f),
            InitChoice::SpanningTree => InitStrategy::SpanningTree.fmt(f),
            InitChoice::File => f.write_str("file"),
        }
    }
}

impl FromStr for InitChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(InitChoice::File),
            other => match other.parse::<InitStrategy>()? {
                InitStrategy::Odometry => Ok(InitChoice::Odometry),
                InitStrategy::SpanningTree => Ok(InitChoice::SpanningTree),
            },
        }
    }
}

/// Where an arm takes its starting estimate from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    InitialGuess,
    /// The final estimate of an earlier arm.
    Arm(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub start: Start,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: Task,
    pub source: GraphSource,
    /// Edge perturbation applied after loading; `None` keeps the measurements.
    pub noise: Option<NoiseSpec>,
    pub init: InitChoice,
    pub arms: Vec<Arm>,
    pub output_dir: PathBuf,
}

pub const GEODESIC_ARM: &str = "geodesic";
pub const CHORDAL_ARM: &str = "chordal";
pub const CHAINED_ARM: &str = "geodesic-from-chordal";
pub const REFERENCE_ARM: &str = "geodesic-reference";

pub fn sweep_arm_name(epsilon: f64) -> String {
    format!("chordal-eps={epsilon:e}")
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        if self.arms.is_empty() {
            return usage("at least one solver arm must be enabled".into());
        }
        let mut seen = BTreeSet::new();
        for arm in &self.arms {
            if arm.name.is_empty() || arm.name.contains([',', '"', '\n']) {
                return usage(format!("invalid arm name '{}'", arm.name));
            }
            if let Start::Arm(from) = &arm.start {
                if !seen.contains(from.as_str()) {
                    return usage(format!("arm '{}' starts from unknown arm '{from}'", arm.name));
                }
            }
            if !seen.insert(arm.name.as_str()) {
                return usage(format!("duplicate arm '{}'", arm.name));
            }
            arm.config.validate()?;
        }
        if self.task == Task::EpsilonSweep {
            let reference = self.arms.iter().filter(|a| a.name == REFERENCE_ARM).count();
            let chordal = self.arms.iter().any(|a| a.config.error_model == ErrorModel::Chordal);
            if reference != 1 || !chordal {
                return usage("an epsilon sweep needs one geodesic reference and at least one chordal arm".into());
            }
        }
        if let Some(noise) = &self.noise {
            if !noise.is_valid() {
                return usage("noise sigmas must be finite and non-negative".into());
            }
        }
        if let GraphSource::Synthetic { spec, .. } = &self.source {
            spec.validate()?;
        }
        Ok(())
    }

    /// Loads or generates the graph, perturbs it and computes the initial guess.
    pub fn initial_graph(&self) -> Result<PoseGraph, CliError> {
        let graph = match &self.source {
            GraphSource::File { path } => load_g2o(path)?,
            GraphSource::Synthetic { spec, seed } => generate_synthetic(spec, *seed)?,
        };
        let graph = match &self.noise {
            Some(noise) => inject_noise(&graph, noise),
            None => graph,
        };
        Ok(match self.init {
            InitChoice::Odometry => InitStrategy::Odometry.apply(&graph)?,
            InitChoice::SpanningTree => InitStrategy::SpanningTree.apply(&graph)?,
            InitChoice::File => graph,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Manifest {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest is always serializable");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(path, e))
    }
}
