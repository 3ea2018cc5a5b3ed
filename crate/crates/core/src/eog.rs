//! Estimation-over-graphs scoring.
//!
//! The abstract graph keeps the road topology and attaches a positive weight
//! to every edge. Its weighted Laplacian, reduced at the anchor node, stands
//! in for the Fisher information of the pose graph; routes are compared by
//! the D-optimality (geometric mean of eigenvalues) of that matrix.
//!
//! Edge weights depend on how often each edge is re-optimized along a route.
//! [`update_edge_counts`] derives those counts from the node sequence: every
//! traversal counts once, and every revisit of a node adds one to each edge
//! of the cycle enclosed since its most recent previous visit.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::route::{Route, RouteError};

/// Pivot at or below which a matrix is declared not positive definite.
pub const PD_PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EogError {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { pivot: f64, row: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("invalid dimension {0}")]
    Dimension(usize),
    #[error("count {count} is below prior count {prior} on edge {edge}")]
    CountBelowPrior {
        edge: EdgeId,
        count: u32,
        prior: u32,
    },
    #[error("edge {0} has zero optimization count")]
    ZeroCount(EdgeId),
    #[error("visited edge {0} has zero prior count")]
    VisitedWithoutPrior(EdgeId),
    #[error("counts do not cover edge {0}")]
    MissingCount(EdgeId),
    #[error("invalid weight parameters: {0}")]
    InvalidParams(String),
    #[error("anchor {0} is not a graph node")]
    UnknownAnchor(NodeId),
    #[error("route misses edges {0:?}")]
    NotCovering(Vec<EdgeId>),
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self, EogError> {
        if data.len() != dim * dim {
            return Err(EogError::Dimension(data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EogError> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(EogError::Dimension(dim));
        }
        Ok(Self {
            dim,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// ‖A − Aᵀ‖∞ ≤ 1e-9·‖A‖∞
    pub fn is_symmetric(&self) -> bool {
        let n = self.dim;
        let asym = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (self[(i, j)] - self[(j, i)]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        asym <= 1e-9 * self.norm_inf()
    }

    /// Lower Cholesky factor, failing on any pivot ≤ [`PD_PIVOT_THRESHOLD`].
    pub fn cholesky(&self) -> Result<SquareMatrix, EogError> {
        let n = self.dim;
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d.is_nan() || d <= PD_PIVOT_THRESHOLD {
                return Err(EogError::NotPositiveDefinite { pivot: d, row: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// log det via Cholesky.
    pub fn log_det(&self) -> Result<f64, EogError> {
        if self.dim == 0 {
            return Err(EogError::Dimension(0));
        }
        if !self.is_symmetric() {
            return Err(EogError::NotSymmetric);
        }
        let l = self.cholesky()?;
        Ok((0..self.dim).map(|i| 2.0 * l[(i, i)].ln()).sum())
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// det(M)^(1/ℓ) = exp(mean log λ), computed from the Cholesky log-determinant.
pub fn d_opt(m: &SquareMatrix) -> Result<f64, EogError> {
    Ok((m.log_det()? / m.dim() as f64).exp())
}

/// Σ_k ω_k·B_k·B_kᵀ in node-index order.
pub fn weighted_laplacian(g: &EogGraph<'_>) -> SquareMatrix {
    let topo = g.graph;
    let mut l = SquareMatrix::zeros(topo.node_count());
    for (e, &w) in topo.edges().iter().zip(&g.weights) {
        let a = topo.node_idx(e.endpoints.0).expect("validated endpoint");
        let b = topo.node_idx(e.endpoints.1).expect("validated endpoint");
        l[(a, a)] += w;
        l[(b, b)] += w;
        l[(a, b)] -= w;
        l[(b, a)] -= w;
    }
    l
}

/// Deletes row and column `anchor`.
pub fn reduced_laplacian(l: &SquareMatrix, anchor: usize) -> Result<SquareMatrix, EogError> {
    let n = l.dim();
    if n < 2 || anchor >= n {
        return Err(EogError::Dimension(n));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != anchor).collect();
    let mut out = SquareMatrix::zeros(n - 1);
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            out[(r, c)] = l[(i, j)];
        }
    }
    Ok(out)
}

/// Per-edge optimization counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeCounts(BTreeMap<EdgeId, u32>);

impl EdgeCounts {
    pub fn zeros(g: &RoadGraph) -> Self {
        Self(g.edges().iter().map(|e| (e.id, 0)).collect())
    }

    pub fn from_map(map: BTreeMap<EdgeId, u32>) -> Self {
        Self(map)
    }

    pub fn get(&self, e: EdgeId) -> u32 {
        self.0.get(&e).copied().unwrap_or(0)
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        self.0.contains_key(&e)
    }

    pub fn set(&mut self, e: EdgeId, c: u32) {
        self.0.insert(e, c);
    }

    fn bump(&mut self, e: EdgeId) {
        *self.0.entry(e).or_insert(0) += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeId, u32)> + '_ {
        self.0.iter().map(|(e, c)| (*e, *c))
    }

    pub fn as_map(&self) -> &BTreeMap<EdgeId, u32> {
        &self.0
    }

    /// Element-wise `self ≥ other`.
    pub fn dominates(&self, other: &EdgeCounts) -> bool {
        other.iter().all(|(e, c)| self.get(e) >= c)
    }
}

/// Optimization counts of a route over `g`.
///
/// First pass: each traversal adds one to its edge. Second pass: when a node
/// reappears, every edge walked since its most recent previous occurrence
/// gains one more.
pub fn update_edge_counts(g: &RoadGraph, route: &Route) -> EdgeCounts {
    let mut counts = EdgeCounts::zeros(g);
    for &e in route.edges() {
        counts.bump(e);
    }
    let mut last_seen: HashMap<NodeId, usize> = HashMap::new();
    for (i, &n) in route.nodes().iter().enumerate() {
        if let Some(&j) = last_seen.get(&n) {
            for &e in &route.edges()[j..i] {
                counts.bump(e);
            }
        }
        last_seen.insert(n, i);
    }
    counts
}

/// Information assigned to a visited edge before the ratio boost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitedInfo {
    /// 1 / length²: odometry information shrinking with segment length.
    InverseSquareLength,
    Constant(f64),
}

impl VisitedInfo {
    pub fn value(&self, length: f64) -> f64 {
        match *self {
            VisitedInfo::InverseSquareLength => 1.0 / (length * length),
            VisitedInfo::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightParams {
    pub alpha: f64,
    /// c in ω₀ = c / length for edges not yet driven.
    pub base_unvisited_scale: f64,
    pub visited_info: VisitedInfo,
}

impl Default for EdgeWeightParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            base_unvisited_scale: 1.0,
            visited_info: VisitedInfo::InverseSquareLength,
        }
    }
}

impl EdgeWeightParams {
    pub fn validate(&self) -> Result<(), EogError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.alpha) {
            return Err(EogError::InvalidParams(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !positive(self.base_unvisited_scale) {
            return Err(EogError::InvalidParams(format!(
                "base_unvisited_scale must be > 0, got {}",
                self.base_unvisited_scale
            )));
        }
        if let VisitedInfo::Constant(c) = self.visited_info {
            if !positive(c) {
                return Err(EogError::InvalidParams(format!(
                    "visited_info must be > 0, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Weight of one edge from its route count and prior (already-driven) count.
///
/// Unvisited: ω₀·(log₂(1+C))^(1/α) with ω₀ = c/length.
/// Visited: info·(log₂(1+C)/log₂(1+n))^(1/α), equal to `info` when C = n.
pub fn edge_weight(
    edge: EdgeId,
    count: u32,
    prior: u32,
    length: f64,
    visited: bool,
    p: &EdgeWeightParams,
) -> Result<f64, EogError> {
    if count < prior {
        return Err(EogError::CountBelowPrior { edge, count, prior });
    }
    let inv_alpha = 1.0 / p.alpha;
    let log_c = (1.0 + f64::from(count)).log2();
    if visited {
        if prior == 0 {
            return Err(EogError::VisitedWithoutPrior(edge));
        }
        let ratio = log_c / (1.0 + f64::from(prior)).log2();
        Ok(p.visited_info.value(length) * ratio.powf(inv_alpha))
    } else {
        if count == 0 {
            return Err(EogError::ZeroCount(edge));
        }
        Ok(p.base_unvisited_scale / length * log_c.powf(inv_alpha))
    }
}

/// Abstract graph: road topology with positive per-edge weights and an anchor.
#[derive(Debug, Clone)]
pub struct EogGraph<'g> {
    graph: &'g RoadGraph,
    /// Indexed like `graph.edges()`.
    weights: Vec<f64>,
    anchor: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EogSnapshot {
    pub anchor: NodeId,
    pub weights: BTreeMap<EdgeId, f64>,
}

impl<'g> EogGraph<'g> {
    pub fn with_weights(
        graph: &'g RoadGraph,
        weights: &BTreeMap<EdgeId, f64>,
        anchor: NodeId,
    ) -> Result<Self, EogError> {
        if !graph.contains_node(anchor) {
            return Err(EogError::UnknownAnchor(anchor));
        }
        let weights = graph
            .edges()
            .iter()
            .map(|e| match weights.get(&e.id) {
                Some(&w) if w.is_finite() && w > 0.0 => Ok(w),
                Some(&w) => Err(EogError::InvalidParams(format!("weight {w} on {}", e.id))),
                None => Err(EogError::MissingCount(e.id)),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            graph,
            weights,
            anchor,
        })
    }

    pub fn graph(&self) -> &'g RoadGraph {
        self.graph
    }

    pub fn anchor(&self) -> NodeId {
        self.anchor
    }

    pub fn weight(&self, e: EdgeId) -> Option<f64> {
        self.graph.edge_idx(e).map(|k| self.weights[k])
    }

    pub fn snapshot(&self) -> EogSnapshot {
        EogSnapshot {
            anchor: self.anchor,
            weights: self
                .graph
                .edges()
                .iter()
                .zip(&self.weights)
                .map(|(e, w)| (e.id, *w))
                .collect(),
        }
    }

    pub fn reduced_laplacian(&self) -> SquareMatrix {
        let anchor = self.graph.node_idx(self.anchor).expect("validated anchor");
        reduced_laplacian(&weighted_laplacian(self), anchor).expect("graph has at least two nodes")
    }

    /// D-opt of the anchored weighted Laplacian.
    pub fn d_opt(&self) -> Result<f64, EogError> {
        if self.graph.node_count() < 2 {
            return Err(EogError::Dimension(self.graph.node_count()));
        }
        d_opt(&self.reduced_laplacian())
    }
}

/// Weights every edge from `counts`; an edge is visited when its prior count is ≥ 1.
/// The anchor is the graph's start node.
pub fn build_eog<'g>(
    g: &'g RoadGraph,
    counts: &EdgeCounts,
    prior: &EdgeCounts,
    p: &EdgeWeightParams,
) -> Result<EogGraph<'g>, EogError> {
    p.validate()?;
    let weights = g
        .edges()
        .iter()
        .map(|e| {
            if !counts.contains(e.id) {
                return Err(EogError::MissingCount(e.id));
            }
            let n = prior.get(e.id);
            edge_weight(e.id, counts.get(e.id), n, e.length, n >= 1, p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EogGraph {
        graph: g,
        weights,
        anchor: g.start_node(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::*;

    fn unit_eog(g: &RoadGraph) -> EogGraph<'_> {
        let w = g.edges().iter().map(|e| (e.id, 1.0)).collect();
        EogGraph::with_weights(g, &w, g.start_node()).unwrap()
    }

    #[test]
    fn path_laplacian() {
        let g = from_triples(&[(1, 2, 1.0), (2, 3, 1.0)], 1);
        let l = weighted_laplacian(&unit_eog(&g));
        assert_eq!(
            l.to_rows(),
            vec![
                vec![1.0, -1.0, 0.0],
                vec![-1.0, 2.0, -1.0],
                vec![0.0, -1.0, 1.0]
            ]
        );
        let r = reduced_laplacian(&l, 0).unwrap();
        assert_eq!(r.to_rows(), vec![vec![2.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn triangle_laplacian_and_tree_count() {
        let g = from_triples(&[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)], 1);
        let l = weighted_laplacian(&unit_eog(&g));
        for i in 0..3 {
            assert_eq!(l.row(i).iter().sum::<f64>(), 0.0);
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }
        let det = reduced_laplacian(&l, 0).unwrap().log_det().unwrap().exp();
        assert!((det - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reduction_needs_two_nodes() {
        assert_eq!(
            reduced_laplacian(&SquareMatrix::identity(1), 0).unwrap_err(),
            EogError::Dimension(1)
        );
    }

    #[test]
    fn d_opt_simple_cases() {
        assert!((d_opt(&SquareMatrix::identity(7)).unwrap() - 1.0).abs() < 1e-15);
        let m = SquareMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((d_opt(&m).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn d_opt_rejects_indefinite_and_asymmetric() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            d_opt(&m),
            Err(EogError::NotPositiveDefinite { .. })
        ));
        let m = SquareMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert_eq!(d_opt(&m), Err(EogError::NotSymmetric));
        // Full Laplacian is singular.
        let g = sample_unit();
        assert!(d_opt(&weighted_laplacian(&unit_eog(&g))).is_err());
    }

    #[test]
    fn counts_without_revisit() {
        let g = from_triples(&[(1, 2, 1.0), (2, 3, 1.0)], 1);
        let r = Route::from_nodes(&g, ids(&[1, 2, 3])).unwrap();
        let c = update_edge_counts(&g, &r);
        assert_eq!(c.get(EdgeId(0)), 1);
        assert_eq!(c.get(EdgeId(1)), 1);
    }

    #[test]
    fn counts_triangle_cycle() {
        let g = from_triples(&[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)], 1);
        let r = Route::from_nodes(&g, ids(&[1, 2, 3, 1])).unwrap();
        let c = update_edge_counts(&g, &r);
        assert!(c.iter().all(|(_, n)| n == 2));
    }

    #[test]
    fn counts_sample_worked_route() {
        let g = sample_unit();
        let r1 = Route::from_nodes(&g, ids(&[1, 2, 3, 4, 5, 2, 3, 4, 6, 7, 8, 11])).unwrap();
        let c = update_edge_counts(&g, &r1);
        let expected: BTreeMap<(i64, i64), u32> = [
            ((1, 2), 1),
            ((2, 3), 5),
            ((3, 4), 5),
            ((4, 5), 4),
            ((5, 2), 4),
            ((4, 6), 1),
            ((6, 7), 1),
            ((7, 8), 1),
            ((8, 11), 1),
        ]
        .into_iter()
        .collect();
        for (k, &(a, b)) in SAMPLE_EDGES.iter().enumerate() {
            let want = expected.get(&(a, b)).copied().unwrap_or(0);
            assert_eq!(c.get(EdgeId(k as u32)), want, "edge ({a},{b})");
        }
    }

    #[test]
    fn weight_rule_cases() {
        let p = EdgeWeightParams {
            visited_info: VisitedInfo::Constant(0.7),
            ..Default::default()
        };
        let e = EdgeId(0);
        assert_eq!(edge_weight(e, 4, 4, 3.0, true, &p).unwrap(), 0.7);
        assert_eq!(
            edge_weight(e, 1, 0, 1.0, false, &EdgeWeightParams::default()).unwrap(),
            1.0
        );
        assert!((edge_weight(e, 3, 1, 1.0, true, &p).unwrap() - 1.4).abs() < 1e-15);
        assert!(matches!(
            edge_weight(e, 1, 2, 1.0, true, &p),
            Err(EogError::CountBelowPrior { .. })
        ));
        assert_eq!(
            edge_weight(e, 0, 0, 1.0, false, &p),
            Err(EogError::ZeroCount(e))
        );
    }

    #[test]
    fn default_visited_info_is_inverse_square_length() {
        let p = EdgeWeightParams::default();
        assert!((edge_weight(EdgeId(0), 2, 2, 4.0, true, &p).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn build_eog_uniform_and_monotone() {
        let g = sample_unit();
        let p = EdgeWeightParams::default();
        let mut counts = EdgeCounts::zeros(&g);
        for e in g.edges() {
            counts.set(e.id, 2);
        }
        let none = EdgeCounts::zeros(&g);
        let eog = build_eog(&g, &counts, &none, &p).unwrap();
        let w0 = eog.weight(EdgeId(0)).unwrap();
        assert!(g.edges().iter().all(|e| eog.weight(e.id) == Some(w0)));
        assert_eq!(eog.anchor(), g.start_node());

        counts.set(EdgeId(3), 3);
        let bumped = build_eog(&g, &counts, &none, &p).unwrap();
        assert!(bumped.weight(EdgeId(3)).unwrap() > w0);
        assert!(bumped.d_opt().unwrap() > eog.d_opt().unwrap());
    }

    #[test]
    fn build_eog_after_worked_route_completion() {
        let g = sample_unit();
        let full = Route::from_nodes(
            &g,
            ids(&[
                1, 2, 3, 4, 5, 2, 3, 4, 6, 7, 8, 11, 12, 6, 7, 8, 9, 10, 11, 12, 1,
            ]),
        )
        .unwrap();
        let r1 = Route::from_nodes(&g, ids(&[1, 2, 3, 4, 5, 2, 3, 4, 6, 7, 8, 11])).unwrap();
        let counts = update_edge_counts(&g, &full);
        let prior = update_edge_counts(&g, &r1);
        let eog = build_eog(&g, &counts, &prior, &EdgeWeightParams::default()).unwrap();
        assert!(g.edges().iter().all(|e| eog.weight(e.id).unwrap() > 0.0));
        assert!(eog.d_opt().unwrap() > 0.0);
    }

    #[test]
    fn snapshot_serializes() {
        let g = sample_unit();
        let json = serde_json::to_string(&unit_eog(&g).snapshot()).unwrap();
        let back: EogSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back.weights.len(), 15);
    }
}
