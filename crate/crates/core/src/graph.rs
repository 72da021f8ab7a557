use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Matrix6;
use thiserror::Error;

use crate::se3::Isometry3;

pub type NodeId = usize;

/// Relative-pose measurement `Z` from `from` to `to` with its 6-D information
/// in the `[x y z phi theta psi]` chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub measurement: Isometry3,
    pub information: Matrix6<f64>,
}

impl Edge {
    pub fn new(from: NodeId, to: NodeId, measurement: Isometry3, information: Matrix6<f64>) -> Self {
        Self {
            from,
            to,
            measurement,
            information,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {edge} references missing node {node}")]
    DanglingEdge { edge: usize, node: NodeId },
    #[error("edge {edge} connects node {node} to itself")]
    SelfLoop { edge: usize, node: NodeId },
    #[error("fixed node {0} does not exist")]
    UnknownFixedNode(NodeId),
    #[error("no node is fixed; the gauge freedom must be removed before solving")]
    NoFixedNode,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    pub nodes: BTreeMap<NodeId, Isometry3>,
    pub edges: Vec<Edge>,
    pub fixed: BTreeSet<NodeId>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, pose: Isometry3) {
        self.nodes.insert(id, pose);
    }

    pub fn add_edge(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Fixes the node with the smallest id if nothing is fixed yet.
    pub fn fix_default_gauge(&mut self) {
        if self.fixed.is_empty() {
            if let Some(&id) = self.nodes.keys().next() {
                self.fixed.insert(id);
            }
        }
    }

    /// Structural checks: every endpoint exists and no edge is a self loop.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (k, e) in self.edges.iter().enumerate() {
            for node in [e.from, e.to] {
                if !self.nodes.contains_key(&node) {
                    return Err(GraphError::DanglingEdge { edge: k, node });
                }
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop { edge: k, node: e.from });
            }
        }
        if let Some(&id) = self.fixed.iter().find(|id| !self.nodes.contains_key(id)) {
            return Err(GraphError::UnknownFixedNode(id));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus a non-empty gauge.
    pub fn validate_for_solving(&self) -> Result<(), GraphError> {
        self.validate()?;
        if self.fixed.is_empty() {
            return Err(GraphError::NoFixedNode);
        }
        Ok(())
    }

    /// Copy with every node left-composed by `g`; measurements unchanged.
    pub fn left_composed(&self, g: &Isometry3) -> Self {
        let mut out = self.clone();
        for pose in out.nodes.values_mut() {
            *pose = *g * *pose;
        }
        out
    }

    /// Copy with node estimates replaced by `poses` (ids must match).
    pub fn with_poses(&self, poses: BTreeMap<NodeId, Isometry3>) -> Self {
        Self {
            nodes: poses,
            edges: self.edges.clone(),
            fixed: self.fixed.clone(),
        }
    }
}
