//! Quadratic approximation `Δxᵀ H Δx + 2 bᵀ Δx + c` of the pose-graph
//! objective and the manifold update.

use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix6, SMatrix, SVector};

use crate::covariance::{omega_6_to_12, ConversionConfig};
use crate::error::Error;
use crate::error_model::{
    error_chordal, error_geodesic, linearize_chordal, linearize_geodesic, remap_omega_geodesic,
    ErrorModel, Linearization, Matrix12, RobustKernel,
};
use crate::graph::{NodeId, PoseGraph};
use crate::se3::{boxplus, PoseVector6};

use super::sparse::{BlockSparseMatrix, NotPositiveDefinite, BLOCK};

/// Error model plus everything precomputed for it on a given graph.
///
/// For the chordal model the 12-D information of every edge is converted once
/// here and stays constant for the whole run.
#[derive(Debug, Clone)]
pub struct Objective {
    pub model: ErrorModel,
    pub kernel: RobustKernel,
    /// Geodesic only: recompute `Ω̃ = (J_Z Ω⁻¹ J_Zᵀ)⁻¹` at every linearization.
    pub remap_omega: bool,
    chordal_information: Vec<Matrix12>,
}

impl Objective {
    pub fn geodesic(kernel: RobustKernel, remap_omega: bool) -> Self {
        Self {
            model: ErrorModel::Geodesic,
            kernel,
            remap_omega,
            chordal_information: Vec::new(),
        }
    }

    pub fn chordal(
        graph: &PoseGraph,
        kernel: RobustKernel,
        conversion: &ConversionConfig,
    ) -> Result<Self, Error> {
        let chordal_information = graph
            .edges
            .iter()
            .map(|e| omega_6_to_12(&e.measurement, &e.information, conversion))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            model: ErrorModel::Chordal,
            kernel,
            remap_omega: false,
            chordal_information,
        })
    }

    /// Chordal objective with explicitly supplied per-edge 12-D information.
    pub fn chordal_with_information(kernel: RobustKernel, information: Vec<Matrix12>) -> Self {
        Self {
            model: ErrorModel::Chordal,
            kernel,
            remap_omega: false,
            chordal_information: information,
        }
    }

    pub fn new(
        graph: &PoseGraph,
        model: ErrorModel,
        kernel: RobustKernel,
        remap_omega: bool,
        conversion: &ConversionConfig,
    ) -> Result<Self, Error> {
        match model {
            ErrorModel::Geodesic => Ok(Self::geodesic(kernel, remap_omega)),
            ErrorModel::Chordal => Self::chordal(graph, kernel, conversion),
        }
    }

    pub fn chordal_information(&self) -> &[Matrix12] {
        &self.chordal_information
    }
}

/// Sorted node ids and their block positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIndex {
    ids: Vec<NodeId>,
    positions: BTreeMap<NodeId, usize>,
}

impl NodeIndex {
    pub fn new(graph: &PoseGraph) -> Self {
        let ids: Vec<NodeId> = graph.nodes.keys().copied().collect();
        let positions = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        Self { ids, positions }
    }

    pub fn position(&self, id: NodeId) -> usize {
        self.positions[&id]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub index: NodeIndex,
    pub hessian: BlockSparseMatrix,
    pub gradient: DVector<f64>,
    /// Robustified objective at the linearization point.
    pub chi2: f64,
}

fn quad_form<const D: usize>(e: &SVector<f64, D>, omega: &SMatrix<f64, D, D>) -> f64 {
    (e.transpose() * omega * e)[(0, 0)]
}

fn add_gradient(b: &mut DVector<f64>, k: usize, v: &PoseVector6) {
    let mut target = b.fixed_rows_mut::<BLOCK>(k * BLOCK);
    target += v;
}

/// Four block products `JᵢᵀWJᵢ, JⱼᵀWJⱼ, JᵢᵀWJⱼ` and two gradient products.
fn accumulate_general<const D: usize>(
    h: &mut BlockSparseMatrix,
    b: &mut DVector<f64>,
    i: usize,
    j: usize,
    lin: &Linearization<D>,
    weight: f64,
) {
    let w = lin.information * weight;
    let ji_t_w = lin.jacobian_i.transpose() * w;
    let jj_t_w = lin.jacobian_j.transpose() * w;
    h.add(i, i, &(ji_t_w * lin.jacobian_i));
    h.add(j, j, &(jj_t_w * lin.jacobian_j));
    h.add(i, j, &(ji_t_w * lin.jacobian_j));
    add_gradient(b, i, &(ji_t_w * lin.error));
    add_gradient(b, j, &(jj_t_w * lin.error));
}

/// Chordal shortcut: one product `JⱼᵀWJⱼ` placed as `H_ii = H_jj = −H_ij`.
fn accumulate_opposite(
    h: &mut BlockSparseMatrix,
    b: &mut DVector<f64>,
    i: usize,
    j: usize,
    lin: &Linearization<12>,
    weight: f64,
) {
    let jj_t_w = lin.jacobian_j.transpose() * (lin.information * weight);
    let block: Matrix6<f64> = jj_t_w * lin.jacobian_j;
    h.add(i, i, &block);
    h.add(j, j, &block);
    h.add(i, j, &(-block));
    let bj = jj_t_w * lin.error;
    add_gradient(b, i, &(-bj));
    add_gradient(b, j, &bj);
}

fn assemble(
    graph: &PoseGraph,
    objective: &Objective,
    shortcut: bool,
) -> Result<QuadraticSystem, Error> {
    let index = NodeIndex::new(graph);
    let mut hessian = BlockSparseMatrix::new(index.len());
    let mut gradient = DVector::zeros(index.len() * BLOCK);
    let mut chi2 = 0.0;
    for (k, edge) in graph.edges.iter().enumerate() {
        let (i, j) = (index.position(edge.from), index.position(edge.to));
        let (xi, xj) = (&graph.nodes[&edge.from], &graph.nodes[&edge.to]);
        match objective.model {
            ErrorModel::Geodesic => {
                let lin = linearize_geodesic(
                    xi,
                    xj,
                    &edge.measurement,
                    &edge.information,
                    objective.remap_omega,
                )?;
                let (rho, weight) = objective.kernel.apply(quad_form(&lin.error, &lin.information));
                chi2 += rho;
                accumulate_general(&mut hessian, &mut gradient, i, j, &lin, weight);
            }
            ErrorModel::Chordal => {
                let lin =
                    linearize_chordal(xi, xj, &edge.measurement, &objective.chordal_information[k]);
                let (rho, weight) = objective.kernel.apply(quad_form(&lin.error, &lin.information));
                chi2 += rho;
                if shortcut {
                    accumulate_opposite(&mut hessian, &mut gradient, i, j, &lin, weight);
                } else {
                    accumulate_general(&mut hessian, &mut gradient, i, j, &lin, weight);
                }
            }
        }
    }
    for id in &graph.fixed {
        let k = index.position(*id);
        hessian.clamp_to_identity(k);
        gradient.fixed_rows_mut::<BLOCK>(k * BLOCK).fill(0.0);
    }
    Ok(QuadraticSystem {
        index,
        hessian,
        gradient,
        chi2,
    })
}

/// Builds `H`, `b` and `c` at the current estimate. Fixed nodes get an
/// identity diagonal block, no coupling and a zero gradient.
pub fn build_quadratic(graph: &PoseGraph, objective: &Objective) -> Result<QuadraticSystem, Error> {
    assemble(graph, objective, true)
}

/// Same as [`build_quadratic`] but always forms every block product
/// separately, including for the chordal model.
pub fn build_quadratic_unshared(
    graph: &PoseGraph,
    objective: &Objective,
) -> Result<QuadraticSystem, Error> {
    assemble(graph, objective, false)
}

/// Solves `(H + λ diag(H)) Δx = −b`.
pub fn solve_linear(system: &QuadraticSystem, lambda: f64) -> Result<DVector<f64>, NotPositiveDefinite> {
    let factor = system.hessian.damped(lambda).cholesky()?;
    Ok(factor.solve(&(-&system.gradient)))
}

/// `X_k ← v2t(Δx_k) X_k` for every non-fixed node, followed by
/// re-orthonormalization. `dx` holds one 6-block per node in id order.
pub fn apply_update(graph: &PoseGraph, dx: &DVector<f64>) -> PoseGraph {
    let mut out = graph.clone();
    for (k, (id, pose)) in out.nodes.iter_mut().enumerate() {
        if graph.fixed.contains(id) {
            continue;
        }
        let step: PoseVector6 = dx.fixed_rows::<BLOCK>(k * BLOCK).into_owned();
        *pose = boxplus(pose, &step).orthonormalized();
    }
    out
}

/// Robustified objective under the given error model.
pub fn chi2(graph: &PoseGraph, objective: &Objective) -> Result<f64, Error> {
    let mut total = 0.0;
    for (k, edge) in graph.edges.iter().enumerate() {
        let (xi, xj) = (&graph.nodes[&edge.from], &graph.nodes[&edge.to]);
        let chi = match objective.model {
            ErrorModel::Geodesic => {
                let e = error_geodesic(xi, xj, &edge.measurement)?;
                let omega = remap_omega_geodesic(
                    xi,
                    xj,
                    &edge.measurement,
                    &edge.information,
                    objective.remap_omega,
                )?;
                quad_form(&e, &omega)
            }
            ErrorModel::Chordal => quad_form(
                &error_chordal(xi, xj, &edge.measurement),
                &objective.chordal_information[k],
            ),
        };
        total += objective.kernel.apply(chi).0;
    }
    Ok(total)
}

/// Geodesic objective with the original 6-D information (no remapping).
pub fn geodesic_chi2(graph: &PoseGraph, kernel: RobustKernel) -> Result<f64, Error> {
    chi2(graph, &Objective::geodesic(kernel, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::se3::{v2t, Isometry3};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_iso(rng: &mut ChaCha8Rng, angle: f64, trans: f64) -> Isometry3 {
        v2t(&PoseVector6::from_fn(|i, _| {
            if i < 3 {
                rng.random_range(-trans..trans)
            } else {
                rng.random_range(-angle..angle)
            }
        }))
    }

    fn two_node_graph(rng: &mut ChaCha8Rng) -> PoseGraph {
        let mut g = PoseGraph::new();
        let x0 = random_iso(rng, 1.0, 5.0);
        let x1 = random_iso(rng, 1.0, 5.0);
        g.add_node(0, x0);
        g.add_node(1, x1);
        let omega = Matrix6::from_diagonal(&PoseVector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0));
        g.add_edge(Edge::new(0, 1, x0.inverse() * x1, omega));
        g.fix_default_gauge();
        g
    }

    #[test]
    fn noise_free_edge_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = two_node_graph(&mut rng);
        for objective in [
            Objective::geodesic(RobustKernel::None, false),
            Objective::chordal(&g, RobustKernel::None, &ConversionConfig::default()).unwrap(),
        ] {
            let sys = build_quadratic(&g, &objective).unwrap();
            assert!(sys.gradient.amax() < 1e-9);
            assert!(sys.chi2 < 1e-18);
            assert!(chi2(&g, &objective).unwrap() < 1e-18);
        }
    }

    #[test]
    fn chordal_single_edge_blocks_are_opposite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = two_node_graph(&mut rng);
        g.fixed.clear();
        g.edges[0].measurement = random_iso(&mut rng, 0.5, 1.0);
        let objective = Objective::chordal(&g, RobustKernel::None, &ConversionConfig::default()).unwrap();
        let sys = build_quadratic(&g, &objective).unwrap();
        let hii = sys.hessian.get(0, 0).unwrap();
        assert_eq!(sys.hessian.get(0, 1).unwrap(), -hii);
        assert_eq!(sys.hessian.get(1, 1).unwrap(), hii);
    }

    #[test]
    fn cauchy_chi2_of_known_edge() {
        // e = (2, 0, 0, 0, 0, 0) with Ω = I → eᵀΩe = 4, ρ = ln 5
        let mut g = PoseGraph::new();
        g.add_node(0, Isometry3::identity());
        g.add_node(1, Isometry3::from_translation(nalgebra::Vector3::new(2.0, 0.0, 0.0)));
        g.add_edge(Edge::new(0, 1, Isometry3::identity(), Matrix6::identity()));
        let objective = Objective::geodesic(RobustKernel::Cauchy { width: 1.0 }, false);
        assert!((chi2(&g, &objective).unwrap() - 5f64.ln()).abs() < 1e-14);
        assert!((geodesic_chi2(&g, RobustKernel::None).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn update_zero_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = two_node_graph(&mut rng);
        let same = apply_update(&g, &DVector::zeros(12));
        for (a, b) in same.nodes.values().zip(g.nodes.values()) {
            assert!((a.rotation - b.rotation).amax() < 1e-15);
            assert_eq!(a.translation, b.translation);
        }
        let mut dx = DVector::zeros(12);
        dx[6] = 1.5;
        dx[0] = 10.0; // fixed node, ignored
        let moved = apply_update(&g, &dx);
        assert_eq!(moved.nodes[&0], g.nodes[&0]);
        assert!(
            (moved.nodes[&1].translation - g.nodes[&1].translation
                - nalgebra::Vector3::new(1.5, 0.0, 0.0))
            .amax()
                < 1e-14
        );
    }

    #[test]
    fn unconstrained_system_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = two_node_graph(&mut rng);
        g.fixed.clear();
        g.edges[0].measurement = random_iso(&mut rng, 0.5, 1.0);
        let objective = Objective::geodesic(RobustKernel::None, false);
        let sys = build_quadratic(&g, &objective).unwrap();
        assert!(solve_linear(&sys, 0.0).is_err());
    }

    #[test]
    fn identity_system_solves_to_minus_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut h = BlockSparseMatrix::new(2);
        h.set(0, 0, Matrix6::identity());
        h.set(1, 1, Matrix6::identity());
        let v = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let sys = QuadraticSystem {
            index: NodeIndex::new(&two_node_graph(&mut rng)),
            hessian: h,
            gradient: -&v,
            chi2: 0.0,
        };
        assert_eq!(solve_linear(&sys, 0.0).unwrap(), v);
    }

    #[test]
    fn gauge_shift_leaves_chi2_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut g = two_node_graph(&mut rng);
        g.edges[0].measurement = random_iso(&mut rng, 0.5, 1.0);
        let shift = random_iso(&mut rng, 2.0, 10.0);
        let objective = Objective::chordal(&g, RobustKernel::None, &ConversionConfig::default()).unwrap();
        let a = chi2(&g, &objective).unwrap();
        let b = chi2(&g.left_composed(&shift), &objective).unwrap();
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
        let a = geodesic_chi2(&g, RobustKernel::None).unwrap();
        let b = geodesic_chi2(&g.left_composed(&shift), RobustKernel::None).unwrap();
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn sparse_hessian_is_symmetric_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = two_node_graph(&mut rng);
        g.edges[0].measurement = random_iso(&mut rng, 0.5, 1.0);
        let sys = build_quadratic(&g, &Objective::geodesic(RobustKernel::None, false)).unwrap();
        let dense: DMatrix<f64> = sys.hessian.to_dense();
        assert_eq!(dense.clone(), dense.transpose());
    }
}
