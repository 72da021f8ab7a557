use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GraphIoError;
use crate::graph::{NodeId, PoseGraph};
use crate::se3::Isometry3;

/// How node estimates are initialised from the measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Chain consecutive ids through their odometry edges.
    #[default]
    Odometry,
    /// Compose measurements along a breadth-first spanning tree.
    SpanningTree,
}

impl InitStrategy {
    pub fn apply(self, graph: &PoseGraph) -> Result<PoseGraph, GraphIoError> {
        match self {
            Self::Odometry => initial_guess_odometry(graph),
            Self::SpanningTree => initial_guess_spanning_tree(graph),
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Odometry => "odometry",
            Self::SpanningTree => "spanning-tree",
        })
    }
}

impl FromStr for InitStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "odometry" => Ok(Self::Odometry),
            "spanning-tree" => Ok(Self::SpanningTree),
            other => Err(format!("unknown initialisation '{other}'")),
        }
    }
}

fn root_of(graph: &PoseGraph) -> Result<NodeId, GraphIoError> {
    graph
        .fixed
        .iter()
        .next()
        .or_else(|| graph.nodes.keys().next())
        .copied()
        .ok_or(GraphIoError::Empty)
}

/// Walks the ids in increasing order, composing the first edge that links
/// each consecutive pair (inverted if it points backwards). The first node
/// keeps its current pose.
pub fn initial_guess_odometry(graph: &PoseGraph) -> Result<PoseGraph, GraphIoError> {
    let ids: Vec<NodeId> = graph.nodes.keys().copied().collect();
    let first = *ids.first().ok_or(GraphIoError::Empty)?;
    let mut poses = BTreeMap::new();
    let mut current = graph.nodes[&first];
    poses.insert(first, current);
    for pair in ids.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let step = graph
            .edges
            .iter()
            .find_map(|e| {
                if e.from == a && e.to == b {
                    Some(e.measurement)
                } else if e.from == b && e.to == a {
                    Some(e.measurement.inverse())
                } else {
                    None
                }
            })
            .ok_or(GraphIoError::MissingOdometry { from: a, to: b })?;
        current = (current * step).orthonormalized();
        poses.insert(b, current);
    }
    Ok(graph.with_poses(poses))
}

/// Breadth-first traversal from the fixed node (or the smallest id),
/// visiting neighbours in increasing id order and composing measurements
/// along tree edges. The root keeps its current pose.
pub fn initial_guess_spanning_tree(graph: &PoseGraph) -> Result<PoseGraph, GraphIoError> {
    let root = root_of(graph)?;
    let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, usize, Isometry3)>> = BTreeMap::new();
    for (k, e) in graph.edges.iter().enumerate() {
        adjacency.entry(e.from).or_default().push((e.to, k, e.measurement));
        adjacency
            .entry(e.to)
            .or_default()
            .push((e.from, k, e.measurement.inverse()));
    }
    for list in adjacency.values_mut() {
        list.sort_by_key(|(n, k, _)| (*n, *k));
    }

    let mut poses = BTreeMap::new();
    poses.insert(root, graph.nodes[&root]);
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        let pose = poses[&node];
        for (next, _, z) in adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            if !poses.contains_key(next) {
                poses.insert(*next, (pose * *z).orthonormalized());
                queue.push_back(*next);
            }
        }
    }

    if poses.len() < graph.node_count() {
        return Err(GraphIoError::Disconnected {
            components: unreachable_components(graph, &adjacency, &poses),
        });
    }
    Ok(graph.with_poses(poses))
}

fn unreachable_components(
    graph: &PoseGraph,
    adjacency: &BTreeMap<NodeId, Vec<(NodeId, usize, Isometry3)>>,
    reached: &BTreeMap<NodeId, Isometry3>,
) -> Vec<Vec<NodeId>> {
    let mut seen: BTreeSet<NodeId> = reached.keys().copied().collect();
    let mut components = Vec::new();
    for &start in graph.nodes.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut component = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for (next, _, _) in adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(*next) {
                    component.push(*next);
                    queue.push_back(*next);
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}
