use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chordal_pgo::io::{generate_synthetic, load_g2o, Shape, SyntheticSpec};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chordal-pgo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

/// `(arm, final_chi2_geodesic, termination)` per summary row.
fn summary(dir: &Path) -> Vec<(String, Option<f64>, String)> {
    read(&dir.join("summary.csv"))
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<_> = line.split(',').collect();
            (f[0].to_string(), f[4].parse().ok(), f[5].to_string())
        })
        .collect()
}

#[test]
fn generate_writes_both_graphs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "generate", "--shape", "chain", "--nodes", "10", "--seed", "1", "--sigma-t", "0.1", "--sigma-r",
            "0.01", "--out", p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let truth = read(&a.join("ground_truth.g2o"));
    let noisy = read(&a.join("noisy.g2o"));
    assert_ne!(truth, noisy);
    assert_eq!(truth, read(&b.join("ground_truth.g2o")));
    assert_eq!(noisy, read(&b.join("noisy.g2o")));
    assert!(a.join("manifest.json").exists());
}

#[test]
fn generated_torus_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--shape", "torus", "--nodes", "100", "--seed", "5", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    let expected = generate_synthetic(&SyntheticSpec::new(Shape::Torus, 100, 1.0), 5).unwrap();
    let loaded = load_g2o(dir.path().join("ground_truth.g2o")).unwrap();
    assert_eq!(loaded.edge_count(), expected.edge_count());
    assert_eq!(loaded.node_count(), 100);
}

#[test]
fn noise_free_graph_converges_in_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["optimize", "--shape", "sphere", "--nodes", "36", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary(dir.path());
    assert_eq!(rows.len(), 2);
    for (arm, chi2, _) in rows {
        assert!(chi2.unwrap() < 1e-9, "{arm}: {chi2:?}");
    }
    let trace = read(&dir.path().join("trace.csv"));
    assert_eq!(trace.lines().next().unwrap(), "arm,iteration,chi2_native,chi2_geodesic,lambda,status");
}

#[test]
fn reruns_and_replays_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = run(&[
            "optimize", "--shape", "torus", "--nodes", "30", "--seed", "2", "--sigma-t", "0.05", "--sigma-r",
            "0.02", "--init", "spanning-tree", "--kernel", "cauchy:1", "--iters", "20",
            "--chain-geodesic-after-chordal", "--out", p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["replay", p(&a.join("manifest.json")), "--out", p(&c)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read(&a.join("trace.csv"));
    assert_eq!(trace, read(&b.join("trace.csv")));
    assert_eq!(trace, read(&c.join("trace.csv")));
    assert_eq!(read(&a.join("summary.csv")), read(&c.join("summary.csv")));
    assert!(trace.lines().any(|l| l.starts_with("geodesic-from-chordal,0,")));
}

#[test]
fn failed_arm_is_a_result() {
    // the second vertex sits exactly on the Euler singularity
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("lock.g2o");
    let h = std::f64::consts::FRAC_1_SQRT_2;
    fs::write(
        &graph,
        format!(
            "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nVERTEX_SE3:QUAT 1 1 0 0 0 {h} 0 {h}\n\
             EDGE_SE3:QUAT 0 1 0 0 0 0 0 0 1 1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["optimize", "--input", p(&graph), "--init", "file", "--algorithm", "gn", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary(&out);
    assert_eq!(rows[0].2, "failed:gimbal_lock");
    assert!(rows[1].1.unwrap() < 1e-9);
    assert_eq!(rows[1].2, "converged");
}

#[test]
fn epsilon_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g");
    assert_eq!(
        code(&run(&[
            "generate", "--shape", "sphere", "--nodes", "25", "--seed", "3", "--sigma-t", "0.01", "--sigma-r",
            "0.05", "--out", p(&graph),
        ])),
        0
    );
    let noisy = graph.join("noisy.g2o");
    let single = dir.path().join("single");
    let o = run(&["epsilon-sweep", "--input", p(&noisy), "--eps-list", "0.1", "--out", p(&single)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&single.join("sweep.csv")).lines().count(), 2);

    let many = dir.path().join("many");
    let o = run(&[
        "epsilon-sweep", "--input", p(&noisy), "--eps-list", "0.1,0.01,0.001", "--eps-scope", "below",
        "--out", p(&many),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = read(&many.join("sweep.csv"));
    let rows: Vec<Vec<&str>> = sweep.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let eps: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(eps, [0.1, 0.01, 0.001]);
    for r in &rows {
        let (chi2, reference, gap): (f64, f64, f64) =
            (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        assert_eq!(gap, chi2 - reference);
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    assert_eq!(code(&run(&["optimize", "--bogus"])), 1);
    assert_eq!(code(&run(&["optimize", "--shape", "torus", "--kernel", "huber", "--out", out])), 1);
    assert_eq!(code(&run(&["optimize", "--shape", "torus", "--iters", "0", "--out", out])), 1);
    assert_eq!(code(&run(&["optimize", "--shape", "torus", "--nodes", "1", "--out", out])), 1);
    assert_eq!(
        code(&run(&[
            "optimize", "--shape", "torus", "--model", "geodesic", "--chain-geodesic-after-chordal", "--out", out
        ])),
        1
    );
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.g2o");
    assert_eq!(code(&run(&["optimize", "--input", p(&missing), "--out", p(&out)])), 2);
    let bad = dir.path().join("bad.g2o");
    fs::write(&bad, "VERTEX_SE3:QUAT 0 0 0\n").unwrap();
    let o = run(&["optimize", "--input", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert_eq!(code(&run(&["replay", p(&bad)])), 2);
}
