//! Runs the arms of a manifest and renders their CSV outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::thread;

use chordal_pgo::{optimize, ErrorModel, OptimizationReport, PoseGraph, SolverError};

use crate::error::CliError;
use crate::manifest::{Arm, RunManifest, Start, Task, REFERENCE_ARM};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub const TRACE_HEADER: &str = "arm,iteration,chi2_native,chi2_geodesic,lambda,status";
pub const SUMMARY_HEADER: &str = "arm,model,iterations,final_chi2_native,final_chi2_geodesic,termination";
pub const SWEEP_HEADER: &str = "epsilon,iterations,termination,chi2_geodesic,reference_chi2_geodesic,gap";

pub struct ArmResult<'a> {
    pub arm: &'a Arm,
    pub report: OptimizationReport,
}

/// Shortest round-trip scientific notation, so output is stable across runs.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Arms starting from the initial guess run concurrently; chained arms run
/// afterwards in manifest order.
pub fn run_arms<'a>(manifest: &'a RunManifest, initial: &PoseGraph) -> Result<Vec<ArmResult<'a>>, CliError> {
    let independent: Vec<&Arm> = manifest
        .arms
        .iter()
        .filter(|a| a.start == Start::InitialGuess)
        .collect();
    let reports: Vec<Result<OptimizationReport, SolverError>> = thread::scope(|s| {
        let handles: Vec<_> = independent
            .iter()
            .map(|arm| s.spawn(|| optimize(initial, &arm.config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let mut done: Vec<ArmResult> = Vec::with_capacity(manifest.arms.len());
    for (arm, report) in independent.into_iter().zip(reports) {
        done.push(ArmResult { arm, report: report? });
    }
    for arm in &manifest.arms {
        if let Start::Arm(from) = &arm.start {
            let start = done
                .iter()
                .find(|r| &r.arm.name == from)
                .map(|r| r.report.graph.clone())
                .ok_or_else(|| CliError::Usage(format!("unknown start arm '{from}'")))?;
            let report = optimize(&start, &arm.config)?;
            done.push(ArmResult { arm, report });
        }
    }
    // report in manifest order regardless of scheduling
    done.sort_by_key(|r| manifest.arms.iter().position(|a| a.name == r.arm.name));
    Ok(done)
}

pub fn trace_csv(results: &[ArmResult]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in results {
        for t in &r.report.trace {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.arm.name,
                t.iteration,
                num(t.chi2_native),
                opt_num(t.chi2_geodesic),
                opt_num(t.lambda),
                t.status
            )
            .unwrap();
        }
    }
    out
}

pub fn summary_csv(results: &[ArmResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.arm.name,
            r.arm.config.error_model,
            r.report.iterations(),
            num(r.report.final_chi2()),
            opt_num(r.report.final_geodesic_chi2()),
            r.report.termination
        )
        .unwrap();
    }
    out
}

/// One row per chordal arm; the gap is measured against the geodesic
/// reference arm's final geodesic chi2.
pub fn sweep_csv(results: &[ArmResult]) -> String {
    let reference = results
        .iter()
        .find(|r| r.arm.name == REFERENCE_ARM)
        .and_then(|r| r.report.final_geodesic_chi2());
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in results.iter().filter(|r| r.arm.config.error_model == ErrorModel::Chordal) {
        let chi2 = r.report.final_geodesic_chi2();
        let gap = chi2.zip(reference).map(|(c, g)| c - g);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.arm.config.conversion.epsilon),
            r.report.iterations(),
            r.report.termination,
            opt_num(chi2),
            opt_num(reference),
            opt_num(gap)
        )
        .unwrap();
    }
    out
}

/// Human-readable table for the terminal.
pub fn summary_table(results: &[ArmResult]) -> String {
    let width = results.iter().map(|r| r.arm.name.len()).max().unwrap_or(0).max(3);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>22}  {:>22}  {}\n",
        "arm", "iterations", "final chi2 (native)", "final chi2 (geodesic)", "termination"
    );
    for r in results {
        let geo = r
            .report
            .final_geodesic_chi2()
            .map_or_else(|| "-".to_string(), |c| format!("{c:.6e}"));
        writeln!(
            out,
            "{:<width$}  {:>10}  {:>22}  {:>22}  {}",
            r.arm.name,
            r.report.iterations(),
            format!("{:.6e}", r.report.final_chi2()),
            geo,
            r.report.termination
        )
        .unwrap();
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

/// Validates, runs and writes every output of `manifest`. Numerically failed
/// arms are results, not errors.
pub fn execute(manifest: &RunManifest) -> Result<String, CliError> {
    manifest.validate()?;
    let initial = manifest.initial_graph()?;
    let results = run_arms(manifest, &initial)?;
    let dir = &manifest.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    manifest.write(dir)?;
    write(dir, TRACE_FILE, &trace_csv(&results))?;
    write(dir, SUMMARY_FILE, &summary_csv(&results))?;
    if manifest.task == Task::EpsilonSweep {
        write(dir, SWEEP_FILE, &sweep_csv(&results))?;
    }
    Ok(summary_table(&results))
}
