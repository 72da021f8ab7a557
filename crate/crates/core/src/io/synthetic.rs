//! Ground-truth pose graphs on simple shapes.
//!
//! Nodes are numbered along the traversal, odometry edges join consecutive
//! ids and loop closures join spatially near, non-consecutive nodes. Every
//! measurement is computed as `Xi⁻¹ Xj` from the ground truth, so both error
//! models evaluate to zero at the returned poses.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GraphIoError;
use crate::graph::{Edge, NodeId, PoseGraph};
use crate::se3::{rot_z, v2t, Isometry3, PoseVector6};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Rings around the tube of a torus; closures to the neighbouring ring.
    Torus,
    /// Latitude rings on a sphere; closures to the previous ring and around
    /// each ring.
    Sphere,
    /// Boustrophedon sweep of a cubic lattice; closures between lattice
    /// neighbours.
    Grid,
    /// Open trajectory with small random turns and no closures.
    Chain,
    /// Planar random walk on a square lattice; closures on revisits.
    Manhattan,
}

impl Shape {
    /// Radius (torus major, sphere) or step length (others) in metres.
    pub fn default_scale(self) -> f64 {
        match self {
            Self::Torus | Self::Sphere => 10.0,
            Self::Grid | Self::Chain | Self::Manhattan => 1.0,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Torus => "torus",
            Self::Sphere => "sphere",
            Self::Grid => "grid",
            Self::Chain => "chain",
            Self::Manhattan => "manhattan",
        })
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "torus" => Ok(Self::Torus),
            "sphere" => Ok(Self::Sphere),
            "grid" => Ok(Self::Grid),
            "chain" => Ok(Self::Chain),
            "manhattan" => Ok(Self::Manhattan),
            other => Err(format!("unknown shape '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub shape: Shape,
    pub node_count: usize,
    /// Fraction of candidate loop closures kept, in `[0, 1]`.
    pub density: f64,
    /// Radius or step length; see [`Shape::default_scale`].
    pub scale: f64,
}

impl SyntheticSpec {
    pub fn new(shape: Shape, node_count: usize, density: f64) -> Self {
        Self {
            shape,
            node_count,
            density,
            scale: shape.default_scale(),
        }
    }

    pub fn validate(&self) -> Result<(), GraphIoError> {
        if self.node_count < 2 {
            return Err(GraphIoError::InvalidSpec("node_count must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(GraphIoError::InvalidSpec("density must lie in [0, 1]"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(GraphIoError::InvalidSpec("scale must be positive"));
        }
        Ok(())
    }
}

/// Rotation whose columns are `x`, `z × x`, `z`.
fn frame(x: Vector3<f64>, z: Vector3<f64>) -> Matrix3<f64> {
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

/// Ring layout shared by torus and sphere: `(rings, nodes per ring)`.
/// Prefers a divisor of `n` near `√n` so every ring is complete.
fn ring_layout(n: usize) -> (usize, usize) {
    let root = (n as f64).sqrt();
    let rings = (1..=n)
        .filter(|r| n.is_multiple_of(*r) && (*r as f64) >= root / 1.5 && (*r as f64) <= root * 1.5)
        .min_by(|a, b| ((*a as f64) - root).abs().total_cmp(&((*b as f64) - root).abs()))
        .unwrap_or_else(|| (root.round() as usize).max(1));
    (rings, n.div_ceil(rings))
}

fn torus(n: usize, major: f64) -> (Vec<Isometry3>, Vec<(NodeId, NodeId)>) {
    let minor = 0.4 * major;
    let (rings, per_ring) = ring_layout(n);
    let poses = (0..n)
        .map(|k| {
            let u = TAU * (k / per_ring) as f64 / rings as f64;
            let v = TAU * (k % per_ring) as f64 / per_ring as f64;
            let (su, cu, sv, cv) = (u.sin(), u.cos(), v.sin(), v.cos());
            let t = Vector3::new((major + minor * cv) * cu, (major + minor * cv) * su, minor * sv);
            let x = Vector3::new(-sv * cu, -sv * su, cv);
            let z = Vector3::new(cv * cu, cv * su, sv);
            Isometry3::new(frame(x, z), t)
        })
        .collect();
    let mut candidates = Vec::new();
    for k in per_ring..n {
        candidates.push((k - per_ring, k));
    }
    // close the major circle: last ring back to the first
    let last = (rings - 1) * per_ring;
    if rings > 2 {
        for k in last..n {
            candidates.push((k - last, k));
        }
    }
    (poses, candidates)
}

fn sphere(n: usize, radius: f64) -> (Vec<Isometry3>, Vec<(NodeId, NodeId)>) {
    let (rings, per_ring) = ring_layout(n);
    let poses = (0..n)
        .map(|k| {
            let lat = -FRAC_PI_2 + PI * ((k / per_ring) as f64 + 0.5) / rings as f64;
            let lon = TAU * (k % per_ring) as f64 / per_ring as f64;
            let z = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
            let x = Vector3::new(-lon.sin(), lon.cos(), 0.0);
            Isometry3::new(frame(x, z), radius * z)
        })
        .collect();
    let mut candidates = Vec::new();
    for k in per_ring..n {
        candidates.push((k - per_ring, k));
    }
    for start in (0..n).step_by(per_ring) {
        let end = (start + per_ring - 1).min(n - 1);
        if end > start + 1 {
            candidates.push((start, end));
        }
    }
    (poses, candidates)
}

/// Non-consecutive pairs whose positions are within `radius`.
fn near_pairs(poses: &[Isometry3], radius: f64) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for i in 0..poses.len() {
        for j in i + 2..poses.len() {
            if (poses[i].translation - poses[j].translation).norm() <= radius {
                out.push((i, j));
            }
        }
    }
    out
}

/// Headings follow the direction of travel; vertical moves keep the
/// previous heading.
fn with_headings(points: &[Vector3<f64>]) -> Vec<Isometry3> {
    let mut yaw = 0.0;
    let mut poses = Vec::with_capacity(points.len());
    for k in 0..points.len() {
        if let Some(next) = points.get(k + 1) {
            let d = next - points[k];
            if d.x.abs() > 1e-12 || d.y.abs() > 1e-12 {
                yaw = d.y.atan2(d.x);
            }
        }
        poses.push(Isometry3::new(rot_z(yaw), points[k]));
    }
    poses
}

fn grid(n: usize, step: f64) -> (Vec<Isometry3>, Vec<(NodeId, NodeId)>) {
    let side = (1..).find(|s| s * s * s >= n).unwrap();
    let points: Vec<Vector3<f64>> = (0..n)
        .map(|k| {
            let layer = k / (side * side);
            let in_layer = k % (side * side);
            let mut row = in_layer / side;
            let mut col = in_layer % side;
            if row % 2 == 1 {
                col = side - 1 - col;
            }
            if layer % 2 == 1 {
                row = side - 1 - row;
            }
            step * Vector3::new(col as f64, row as f64, layer as f64)
        })
        .collect();
    let poses = with_headings(&points);
    let candidates = near_pairs(&poses, 1.01 * step);
    (poses, candidates)
}

fn manhattan(n: usize, step: f64, rng: &mut ChaCha8Rng) -> (Vec<Isometry3>, Vec<(NodeId, NodeId)>) {
    let mut heading = 0i32;
    let mut cell = (0i64, 0i64);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(step * Vector3::new(cell.0 as f64, cell.1 as f64, 0.0));
        let turn: f64 = rng.random();
        if turn < 0.15 {
            heading += 1;
        } else if turn < 0.3 {
            heading += 3;
        }
        heading %= 4;
        match heading {
            0 => cell.0 += 1,
            1 => cell.1 += 1,
            2 => cell.0 -= 1,
            _ => cell.1 -= 1,
        }
    }
    let poses = with_headings(&points);
    let candidates = near_pairs(&poses, 1.01 * step);
    (poses, candidates)
}

fn chain(n: usize, step: f64, rng: &mut ChaCha8Rng) -> (Vec<Isometry3>, Vec<(NodeId, NodeId)>) {
    let mut poses = vec![Isometry3::identity()];
    for k in 1..n {
        let mut angle = || rng.random_range(-0.1..0.1);
        let delta = PoseVector6::new(step, 0.0, 0.0, angle(), angle(), angle());
        poses.push((poses[k - 1] * v2t(&delta)).orthonormalized());
    }
    (poses, Vec::new())
}

/// Generates a noise-free graph. Information matrices are identity; the
/// first node is fixed. Edges are sorted by `(from, to)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<PoseGraph, GraphIoError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.node_count;
    let (poses, candidates) = match spec.shape {
        Shape::Torus => torus(n, spec.scale),
        Shape::Sphere => sphere(n, spec.scale),
        Shape::Grid => grid(n, spec.scale),
        Shape::Chain => chain(n, spec.scale, &mut rng),
        Shape::Manhattan => manhattan(n, spec.scale, &mut rng),
    };

    let keep = (spec.density * candidates.len() as f64).round() as usize;
    let mut chosen = rand::seq::index::sample(&mut rng, candidates.len(), keep).into_vec();
    chosen.sort_unstable();

    let mut pairs: Vec<(NodeId, NodeId)> = (1..n).map(|k| (k - 1, k)).collect();
    pairs.extend(chosen.into_iter().map(|c| candidates[c]));
    pairs.sort_unstable();

    let mut graph = PoseGraph::new();
    for (id, pose) in poses.iter().enumerate() {
        graph.add_node(id, *pose);
    }
    for (i, j) in pairs {
        let z = poses[i].inverse() * poses[j];
        graph.add_edge(Edge::new(i, j, z, Matrix6::identity()));
    }
    graph.fix_default_gauge();
    Ok(graph)
}
