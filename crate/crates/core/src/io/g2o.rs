//! `VERTEX_SE3:QUAT` / `EDGE_SE3:QUAT` text format.
//!
//! ```text
//! VERTEX_SE3:QUAT id tx ty tz qx qy qz qw
//! EDGE_SE3:QUAT i j tx ty tz qx qy qz qw i11 i12 .. i16 i22 .. i66
//! ```
//!
//! The 21 information entries are the upper triangle in row-major order.
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so save → load is exact on information entries.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::GraphIoError;
use crate::graph::{Edge, NodeId, PoseGraph};
use crate::se3::Isometry3;

/// Quaternions whose norm is further than this from 1 are rejected.
pub const QUATERNION_RENORMALIZE_LIMIT: f64 = 1e-3;

const VERTEX_TAG: &str = "VERTEX_SE3:QUAT";
const EDGE_TAG: &str = "EDGE_SE3:QUAT";

fn parse_err(line: usize, message: impl Into<String>) -> GraphIoError {
    GraphIoError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_numbers(line: usize, tokens: &[&str]) -> Result<Vec<f64>, GraphIoError> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid number '{t}'")))
        })
        .collect()
}

fn parse_id(line: usize, token: &str) -> Result<NodeId, GraphIoError> {
    token
        .parse::<NodeId>()
        .map_err(|_| parse_err(line, format!("invalid node id '{token}'")))
}

fn parse_pose(line: usize, v: &[f64]) -> Result<Isometry3, GraphIoError> {
    let q = Quaternion::new(v[6], v[3], v[4], v[5]);
    let norm = q.norm();
    if (norm - 1.0).abs() > QUATERNION_RENORMALIZE_LIMIT {
        return Err(parse_err(line, format!("quaternion norm {norm} is not unit")));
    }
    let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    Ok(Isometry3::new(
        *rotation.matrix(),
        Vector3::new(v[0], v[1], v[2]),
    ))
}

fn information_from_upper(v: &[f64]) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    let mut k = 0;
    for r in 0..6 {
        for c in r..6 {
            m[(r, c)] = v[k];
            m[(c, r)] = v[k];
            k += 1;
        }
    }
    m
}

/// Parses g2o text. The node with the smallest id is fixed.
pub fn parse_g2o(text: &str) -> Result<PoseGraph, GraphIoError> {
    let mut graph = PoseGraph::new();
    let mut edge_lines = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        match tokens[0] {
            VERTEX_TAG => {
                if tokens.len() != 9 {
                    return Err(parse_err(
                        line,
                        format!("{VERTEX_TAG} expects 8 fields, found {}", tokens.len() - 1),
                    ));
                }
                let id = parse_id(line, tokens[1])?;
                let pose = parse_pose(line, &parse_numbers(line, &tokens[2..])?)?;
                if graph.nodes.insert(id, pose).is_some() {
                    return Err(parse_err(line, format!("duplicate vertex {id}")));
                }
            }
            EDGE_TAG => {
                if tokens.len() != 31 {
                    return Err(parse_err(
                        line,
                        format!("{EDGE_TAG} expects 30 fields, found {}", tokens.len() - 1),
                    ));
                }
                let from = parse_id(line, tokens[1])?;
                let to = parse_id(line, tokens[2])?;
                let values = parse_numbers(line, &tokens[3..])?;
                let measurement = parse_pose(line, &values[..7])?;
                let information = information_from_upper(&values[7..]);
                graph.add_edge(Edge::new(from, to, measurement, information));
                edge_lines.push(line);
            }
            other => return Err(parse_err(line, format!("unknown record '{other}'"))),
        }
    }
    for (k, e) in graph.edges.iter().enumerate() {
        for node in [e.from, e.to] {
            if !graph.nodes.contains_key(&node) {
                return Err(parse_err(
                    edge_lines[k],
                    format!("edge references missing vertex {node}"),
                ));
            }
        }
    }
    graph.validate()?;
    graph.fix_default_gauge();
    Ok(graph)
}

pub fn load_g2o(path: impl AsRef<Path>) -> Result<PoseGraph, GraphIoError> {
    parse_g2o(&std::fs::read_to_string(path)?)
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Unit quaternion `(x, y, z, w)` with `w >= 0`.
fn quaternion_of(rotation: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation));
    let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
    [q.i, q.j, q.k, q.w]
}

fn write_pose(out: &mut String, pose: &Isometry3) {
    let q = quaternion_of(&pose.rotation);
    for v in pose.translation.iter().chain(q.iter()) {
        let _ = write!(out, " {}", num(*v));
    }
}

/// Canonical text: vertices by id, then edges by `(from, to)` keeping input
/// order among duplicates.
pub fn format_g2o(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for (id, pose) in &graph.nodes {
        let _ = write!(out, "{VERTEX_TAG} {id}");
        write_pose(&mut out, pose);
        out.push('\n');
    }
    let mut order: Vec<usize> = (0..graph.edges.len()).collect();
    order.sort_by_key(|&k| (graph.edges[k].from, graph.edges[k].to));
    for k in order {
        let e = &graph.edges[k];
        let _ = write!(out, "{EDGE_TAG} {} {}", e.from, e.to);
        write_pose(&mut out, &e.measurement);
        for r in 0..6 {
            for c in r..6 {
                let _ = write!(out, " {}", num(e.information[(r, c)]));
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_g2o(graph: &PoseGraph, path: impl AsRef<Path>) -> Result<(), GraphIoError> {
    std::fs::write(path, format_g2o(graph))?;
    Ok(())
}
