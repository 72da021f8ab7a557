//! Benchmark harness: generate graphs, run geodesic and chordal optimizations
//! side by side and write per-iteration CSV traces.

mod error;
mod manifest;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use chordal_pgo::covariance::{EpsilonMode, EpsilonScope};
use chordal_pgo::io::{generate_synthetic, inject_noise, save_g2o, NoiseSpec, Shape, SyntheticSpec};
use chordal_pgo::{Algorithm, ErrorModel, RobustKernel, SolverConfig};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{
    sweep_arm_name, Arm, GraphSource, InitChoice, RunManifest, Start, Task, CHAINED_ARM, CHORDAL_ARM,
    GEODESIC_ARM, MANIFEST_FILE, REFERENCE_ARM,
};

#[derive(Debug, Parser)]
#[command(name = "chordal-pgo", version, about = "Compare geodesic and chordal 3D pose-graph optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write `ground_truth.g2o` and `noisy.g2o` for a synthetic graph.
    Generate(GenerateArgs),
    /// Run the enabled arms and write `trace.csv`, `summary.csv` and `manifest.json`.
    Optimize(OptimizeArgs),
    /// One chordal run per ε plus a geodesic reference; writes `sweep.csv`.
    EpsilonSweep(SweepArgs),
    /// Re-run a `manifest.json` written by an earlier run.
    Replay(ReplayArgs),
}

/// A value given once for all three axes or as `x,y,z`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sigma3([f64; 3]);

impl FromStr for Sigma3 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("invalid sigma '{v}': {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(format!("sigmas must be finite and non-negative: '{s}'"));
        }
        match values[..] {
            [v] => Ok(Sigma3([v; 3])),
            [x, y, z] => Ok(Sigma3([x, y, z])),
            _ => Err(format!("expected one or three comma-separated sigmas, got '{s}'")),
        }
    }
}

#[derive(Debug, Args)]
struct ShapeArgs {
    /// Number of poses.
    #[arg(long, default_value_t = 100)]
    nodes: usize,
    /// Fraction of loop-closure candidates kept, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Overall size; defaults to the shape's natural scale.
    #[arg(long)]
    scale: Option<f64>,
}

impl ShapeArgs {
    fn spec(&self, shape: Shape) -> SyntheticSpec {
        let mut spec = SyntheticSpec::new(shape, self.nodes, self.density);
        if let Some(scale) = self.scale {
            spec.scale = scale;
        }
        spec
    }
}

#[derive(Debug, Args)]
struct NoiseArgs {
    /// Translation noise standard deviation (one value or `x,y,z`).
    #[arg(long)]
    sigma_t: Option<Sigma3>,
    /// Rotation noise standard deviation in radians (one value or `roll,pitch,yaw`).
    #[arg(long)]
    sigma_r: Option<Sigma3>,
    /// Seed for graph generation and noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl NoiseArgs {
    /// Noise is applied only when a sigma is given; the other defaults to zero.
    fn spec(&self) -> Option<NoiseSpec> {
        if self.sigma_t.is_none() && self.sigma_r.is_none() {
            return None;
        }
        let get = |s: Option<Sigma3>| s.map_or([0.0; 3], |s| s.0);
        Some(NoiseSpec::new(get(self.sigma_t), get(self.sigma_r), self.seed))
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    shape: Shape,
    #[command(flatten)]
    shape_args: ShapeArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "shape"])))]
struct GraphArgs {
    /// g2o file to optimize.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate a synthetic graph instead of reading one.
    #[arg(long)]
    shape: Option<Shape>,
    #[command(flatten)]
    shape_args: ShapeArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Initial guess: `odometry`, `spanning-tree` or `file` (stored vertices).
    #[arg(long, default_value = "odometry")]
    init: InitChoice,
}

impl GraphArgs {
    fn source(&self) -> GraphSource {
        match (&self.input, self.shape) {
            (Some(path), _) => GraphSource::File { path: path.clone() },
            (None, Some(shape)) => GraphSource::Synthetic {
                spec: self.shape_args.spec(shape),
                seed: self.noise.seed,
            },
            (None, None) => unreachable!("clap requires a graph source"),
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value = "levenberg-marquardt")]
    algorithm: Algorithm,
    /// `none`, `cauchy` or `cauchy:<width>`.
    #[arg(long, default_value = "none")]
    kernel: RobustKernel,
    /// Maximum number of iterations per arm.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Stop once an accepted step lowers chi2 by no more than this.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// ε added to the 12-D covariance before inversion (chordal arms).
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value = "add")]
    eps_mode: EpsilonMode,
    /// `null` regularizes the six unreachable directions, `below` every
    /// singular value under ε.
    #[arg(long, default_value = "null")]
    eps_scope: EpsilonScope,
    /// Map the geodesic information through the measurement Jacobian.
    #[arg(long)]
    remap_omega: bool,
}

impl SolverArgs {
    fn config(&self, model: ErrorModel) -> SolverConfig {
        let mut config = SolverConfig::new(model, self.algorithm);
        config.kernel = self.kernel;
        config.max_iterations = self.iters;
        config.termination_epsilon = self.tol;
        config.remap_omega = self.remap_omega;
        config.conversion.epsilon = self.epsilon;
        config.conversion.mode = self.eps_mode;
        config.conversion.scope = self.eps_scope;
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelChoice {
    Geodesic,
    Chordal,
    Both,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Which error function(s) to run.
    #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
    model: ModelChoice,
    /// Add a geodesic arm that starts from the chordal optimum.
    #[arg(long)]
    chain_geodesic_after_chordal: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated ε values, one chordal run each.
    #[arg(long, value_delimiter = ',', required = true)]
    eps_list: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write outputs here instead of the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenerateManifest {
    spec: SyntheticSpec,
    seed: u64,
    noise: Option<NoiseSpec>,
    output_dir: PathBuf,
}

fn arm(name: &str, start: Start, config: SolverConfig) -> Arm {
    Arm {
        name: name.to_string(),
        start,
        config,
    }
}

fn optimize_manifest(args: &OptimizeArgs) -> Result<RunManifest, CliError> {
    let mut arms = Vec::new();
    if matches!(args.model, ModelChoice::Geodesic | ModelChoice::Both) {
        arms.push(arm(GEODESIC_ARM, Start::InitialGuess, args.solver.config(ErrorModel::Geodesic)));
    }
    if matches!(args.model, ModelChoice::Chordal | ModelChoice::Both) {
        arms.push(arm(CHORDAL_ARM, Start::InitialGuess, args.solver.config(ErrorModel::Chordal)));
    }
    if args.chain_geodesic_after_chordal {
        if args.model == ModelChoice::Geodesic {
            return Err(CliError::Usage(
                "--chain-geodesic-after-chordal needs the chordal arm".into(),
            ));
        }
        let start = Start::Arm(CHORDAL_ARM.into());
        arms.push(arm(CHAINED_ARM, start, args.solver.config(ErrorModel::Geodesic)));
    }
    Ok(RunManifest {
        task: Task::Optimize,
        source: args.graph.source(),
        noise: args.graph.noise.spec(),
        init: args.graph.init,
        arms,
        output_dir: args.out.clone(),
    })
}

fn sweep_manifest(args: &SweepArgs) -> RunManifest {
    let mut arms = vec![arm(REFERENCE_ARM, Start::InitialGuess, args.solver.config(ErrorModel::Geodesic))];
    for &epsilon in &args.eps_list {
        let mut config = args.solver.config(ErrorModel::Chordal);
        config.conversion.epsilon = epsilon;
        arms.push(arm(&sweep_arm_name(epsilon), Start::InitialGuess, config));
    }
    RunManifest {
        task: Task::EpsilonSweep,
        source: args.graph.source(),
        noise: args.graph.noise.spec(),
        init: args.graph.init,
        arms,
        output_dir: args.out.clone(),
    }
}

fn generate(args: &GenerateArgs) -> Result<String, CliError> {
    let spec = args.shape_args.spec(args.shape);
    let noise = args.noise.spec();
    if noise.is_some_and(|n| !n.is_valid()) {
        return Err(CliError::Usage("noise sigmas must be finite and non-negative".into()));
    }
    let truth = generate_synthetic(&spec, args.noise.seed)?;
    let noisy = noise.map_or_else(|| truth.clone(), |n| inject_noise(&truth, &n));
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    save_g2o(&truth, args.out.join("ground_truth.g2o"))?;
    save_g2o(&noisy, args.out.join("noisy.g2o"))?;
    let manifest = GenerateManifest {
        spec,
        seed: args.noise.seed,
        noise,
        output_dir: args.out.clone(),
    };
    let path = args.out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest is always serializable");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(path, e))?;
    Ok(format!(
        "{} nodes, {} edges written to {}\n",
        truth.node_count(),
        truth.edge_count(),
        args.out.display()
    ))
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Generate(args) => generate(&args),
        Command::Optimize(args) => run::execute(&optimize_manifest(&args)?),
        Command::EpsilonSweep(args) => run::execute(&sweep_manifest(&args)),
        Command::Replay(args) => {
            let mut manifest = RunManifest::read(&args.manifest)?;
            if let Some(out) = args.out {
                manifest.output_dir = out;
            }
            run::execute(&manifest)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
