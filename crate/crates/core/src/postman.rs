//! Chinese-postman coverage routes and their D-optimality ranking.
//!
//! Odd-degree nodes are paired by a minimum-weight perfect matching over
//! shortest-path distances, the matched paths are duplicated, and Eulerian
//! circuits of the augmented multigraph are sampled with a seeded Hierholzer
//! walk. Each distinct circuit is a candidate coverage route.

use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eog::{build_eog, update_edge_counts, EdgeCounts, EdgeWeightParams, EogError};
use crate::graph::{EdgeId, GraphError, NodeId, Path, RoadGraph};
use crate::route::{Route, RouteError};

/// Largest odd-node set matched exactly by subset DP.
pub const DEFAULT_EXACT_MATCHING_LIMIT: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("cannot perfectly match an odd number ({0}) of nodes")]
    OddCardinality(usize),
    #[error("multigraph is not Eulerian: {0}")]
    NotEulerian(String),
    #[error("route does not cover edges {0:?}")]
    NotCovering(Vec<EdgeId>),
    #[error("route must start and end at {0}")]
    NotClosed(NodeId),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("attempts must be at least 1")]
    NoAttempts,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Eog(#[from] EogError),
    #[error(transparent)]
    Route(#[from] RouteError),
}

pub fn odd_degree_nodes(g: &RoadGraph) -> BTreeSet<NodeId> {
    g.odd_degree_nodes()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub a: NodeId,
    pub b: NodeId,
    pub path: Path,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub weight: f64,
    /// False when the greedy fallback was used.
    pub exact: bool,
}

/// Minimum-weight perfect matching of `odd` under shortest-path length in `g`.
///
/// Exact (subset DP) up to `exact_limit` nodes; greedy closest-pair above.
pub fn min_weight_odd_matching(
    g: &RoadGraph,
    odd: &BTreeSet<NodeId>,
    exact_limit: usize,
) -> Result<Matching, PlanError> {
    if odd.len() % 2 == 1 {
        return Err(PlanError::OddCardinality(odd.len()));
    }
    let nodes: Vec<NodeId> = odd.iter().copied().collect();
    let k = nodes.len();
    let mut dist = vec![vec![0.0; k]; k];
    for (i, &u) in nodes.iter().enumerate() {
        let d = g.distances_from(u, |e| e.length)?;
        for (j, &v) in nodes.iter().enumerate() {
            dist[i][j] = d[g.node_idx(v).ok_or(GraphError::UnknownNode(v))?];
        }
    }

    let (index_pairs, exact) = if k <= exact_limit {
        (exact_pairing(&dist), true)
    } else {
        warn!("{k} odd-degree nodes exceed the exact matching limit {exact_limit}; using greedy pairing");
        (greedy_pairing(&dist), false)
    };

    let mut pairs = Vec::with_capacity(index_pairs.len());
    let mut weight = 0.0;
    for (i, j) in index_pairs {
        let path = g.shortest_path_by_length(nodes[i], nodes[j])?;
        weight += path.cost;
        pairs.push(MatchedPair {
            a: nodes[i],
            b: nodes[j],
            path,
        });
    }
    Ok(Matching {
        pairs,
        weight,
        exact,
    })
}

fn exact_pairing(dist: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let k = dist.len();
    if k == 0 {
        return Vec::new();
    }
    let full = (1usize << k) - 1;
    // best[mask]: cost of matching the nodes in mask; choice[mask]: partner of its lowest bit.
    let mut best = vec![f64::INFINITY; 1 << k];
    let mut choice = vec![usize::MAX; 1 << k];
    best[0] = 0.0;
    for mask in 1..=full {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut m = rest;
        while m != 0 {
            let j = m.trailing_zeros() as usize;
            m &= m - 1;
            let c = dist[i][j] + best[rest & !(1 << j)];
            if c < best[mask] {
                best[mask] = c;
                choice[mask] = j;
            }
        }
    }
    let mut out = Vec::with_capacity(k / 2);
    let mut mask = full;
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        let j = choice[mask];
        out.push((i, j));
        mask &= !(1 << i) & !(1 << j);
    }
    out
}

fn greedy_pairing(dist: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let k = dist.len();
    let mut candidates: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    candidates
        .sort_by(|&(a, b), &(c, d)| dist[a][b].total_cmp(&dist[c][d]).then((a, b).cmp(&(c, d))));
    let mut matched = vec![false; k];
    let mut out = Vec::new();
    for (i, j) in candidates {
        if !matched[i] && !matched[j] {
            matched[i] = true;
            matched[j] = true;
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugEdgeKind {
    /// A road edge, or a duplicate of one.
    Road { id: EdgeId, duplicate: bool },
    /// Zero-cost link between the open ends of a postman path.
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub length: f64,
    pub kind: AugEdgeKind,
}

/// Multigraph whose edges reference road edges (possibly repeated).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentedGraph {
    pub edges: Vec<AugEdge>,
}

impl AugmentedGraph {
    pub fn from_road_edges<I: IntoIterator<Item = EdgeId>>(g: &RoadGraph, ids: I) -> Self {
        let mut out = Self::default();
        for id in ids {
            out.push_road(g, id, false);
        }
        out
    }

    pub fn push_road(&mut self, g: &RoadGraph, id: EdgeId, duplicate: bool) {
        let e = g.edge(id).expect("edge of this graph");
        self.edges.push(AugEdge {
            a: e.endpoints.0,
            b: e.endpoints.1,
            length: e.length,
            kind: AugEdgeKind::Road { id, duplicate },
        });
    }

    pub fn push_virtual(&mut self, a: NodeId, b: NodeId, length: f64) {
        self.edges.push(AugEdge {
            a,
            b,
            length,
            kind: AugEdgeKind::Virtual,
        });
    }

    /// Multigraph degree of every touched node, ascending by id.
    pub fn degrees(&self) -> std::collections::BTreeMap<NodeId, usize> {
        let mut deg = std::collections::BTreeMap::new();
        for e in &self.edges {
            *deg.entry(e.a).or_insert(0) += 1;
            *deg.entry(e.b).or_insert(0) += 1;
        }
        deg
    }

    pub fn odd_nodes(&self) -> BTreeSet<NodeId> {
        self.degrees()
            .into_iter()
            .filter(|(_, d)| d % 2 == 1)
            .map(|(n, _)| n)
            .collect()
    }

    /// Total length of road edges (virtual edges excluded).
    pub fn road_length(&self) -> f64 {
        self.edges
            .iter()
            .filter(|e| matches!(e.kind, AugEdgeKind::Road { .. }))
            .map(|e| e.length)
            .sum()
    }

    /// Duplicates every matched path.
    pub fn add_matching(&mut self, g: &RoadGraph, matching: &Matching) {
        for pair in &matching.pairs {
            for &id in &pair.path.edges {
                self.push_road(g, id, true);
            }
        }
    }
}

/// The road graph plus one duplicate of each matched path.
pub fn augment_graph(g: &RoadGraph, matching: &Matching) -> AugmentedGraph {
    let mut aug = AugmentedGraph::from_road_edges(g, g.edges().iter().map(|e| e.id));
    aug.add_matching(g, matching);
    aug
}

/// Eulerian circuit over `aug` from `start`, as (nodes, augmented edge indices).
///
/// Each node's incident edges are shuffled with a generator seeded by
/// `seed`, so different seeds explore different circuits.
pub fn euler_circuit(
    aug: &AugmentedGraph,
    start: NodeId,
    seed: u64,
) -> Result<(Vec<NodeId>, Vec<usize>), PlanError> {
    if aug.edges.is_empty() {
        return Ok((vec![start], Vec::new()));
    }
    if let Some(odd) = aug.odd_nodes().into_iter().next() {
        return Err(PlanError::NotEulerian(format!("node {odd} has odd degree")));
    }
    let ids: Vec<NodeId> = aug.degrees().into_keys().collect();
    let index = |n: NodeId| ids.binary_search(&n).ok();
    let s = index(start)
        .ok_or_else(|| PlanError::NotEulerian(format!("start {start} has no edges")))?;

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for (k, e) in aug.edges.iter().enumerate() {
        adj[index(e.a).expect("touched")].push(k);
        adj[index(e.b).expect("touched")].push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for list in &mut adj {
        list.shuffle(&mut rng);
    }

    let mut used = vec![false; aug.edges.len()];
    let mut next = vec![0usize; ids.len()];
    let mut stack: Vec<(usize, Option<usize>)> = vec![(s, None)];
    let mut circuit: Vec<(usize, Option<usize>)> = Vec::with_capacity(aug.edges.len() + 1);
    while let Some(&(u, _)) = stack.last() {
        while next[u] < adj[u].len() && used[adj[u][next[u]]] {
            next[u] += 1;
        }
        if next[u] < adj[u].len() {
            let k = adj[u][next[u]];
            used[k] = true;
            let e = &aug.edges[k];
            let v = if index(e.a) == Some(u) { e.b } else { e.a };
            stack.push((index(v).expect("touched"), Some(k)));
        } else {
            circuit.push(stack.pop().expect("non-empty"));
        }
    }
    if used.iter().any(|u| !u) {
        return Err(PlanError::NotEulerian(
            "edges are not connected to the start".into(),
        ));
    }
    circuit.reverse();
    let nodes = circuit.iter().map(|&(u, _)| ids[u]).collect();
    let edges = circuit
        .iter()
        .skip(1)
        .map(|&(_, k)| k.expect("arrival edge"))
        .collect();
    Ok((nodes, edges))
}

/// Closed route from `start` using every edge of a road-only augmented graph once.
pub fn hierholzer_circuit(
    aug: &AugmentedGraph,
    start: NodeId,
    seed: u64,
) -> Result<Route, PlanError> {
    let (nodes, edges) = euler_circuit(aug, start, seed)?;
    let edges = edges
        .into_iter()
        .map(|k| match aug.edges[k].kind {
            AugEdgeKind::Road { id, .. } => Ok(id),
            AugEdgeKind::Virtual => Err(PlanError::NotEulerian("unexpected virtual edge".into())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Route::from_parts_unchecked(nodes, edges))
}

/// Coverage-route objective: D-opt of the anchored weighted Laplacian per meter.
///
/// Every edge is treated as not yet driven.
pub fn score_global_route(
    g: &RoadGraph,
    route: &Route,
    p: &EdgeWeightParams,
) -> Result<f64, PlanError> {
    if route.first() != g.start_node() || route.last() != g.start_node() {
        return Err(PlanError::NotClosed(g.start_node()));
    }
    let missed = route.missed_edges(g);
    if !missed.is_empty() {
        return Err(PlanError::NotCovering(missed));
    }
    let counts = update_edge_counts(g, route);
    let eog = build_eog(g, &counts, &EdgeCounts::zeros(g), p)?;
    Ok(eog.d_opt()? / route.distance(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceWindow {
    /// max(50, attempts / 10)
    Auto,
    Fixed(usize),
    Off,
}

impl ConvergenceWindow {
    pub fn resolve(self, attempts: usize) -> Option<usize> {
        match self {
            ConvergenceWindow::Auto => Some((attempts / 10).max(50)),
            ConvergenceWindow::Fixed(n) => Some(n.max(1)),
            ConvergenceWindow::Off => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub attempts: usize,
    pub seed: u64,
    pub exact_matching_limit: usize,
    pub convergence_window: ConvergenceWindow,
    pub weights: EdgeWeightParams,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            attempts: 500,
            seed: 0,
            exact_matching_limit: DEFAULT_EXACT_MATCHING_LIMIT,
            convergence_window: ConvergenceWindow::Auto,
            weights: EdgeWeightParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRoute {
    pub route: Route,
    pub distance: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Distinct circuits in order of discovery.
    pub routes: Vec<ScoredRoute>,
    /// Attempts actually run (early stop may cut this below the request).
    pub attempts: usize,
    pub matching: Matching,
    /// Augmented (CPP) length; every candidate has exactly this distance.
    pub augmented_length: f64,
}

impl CandidateSet {
    pub fn solutions(&self) -> usize {
        self.routes.len()
    }
}

/// Samples Eulerian circuits of the augmented graph and keeps the distinct ones.
pub fn enumerate_candidates(g: &RoadGraph, cfg: &PlanConfig) -> Result<CandidateSet, PlanError> {
    if cfg.attempts == 0 {
        return Err(PlanError::NoAttempts);
    }
    cfg.weights.validate()?;
    let matching = min_weight_odd_matching(g, &g.odd_degree_nodes(), cfg.exact_matching_limit)?;
    let aug = augment_graph(g, &matching);
    let window = cfg.convergence_window.resolve(cfg.attempts);

    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen: HashSet<Vec<EdgeId>> = HashSet::new();
    let mut routes = Vec::new();
    let mut attempts = 0;
    let mut since_new = 0;
    while attempts < cfg.attempts {
        attempts += 1;
        let route = hierholzer_circuit(&aug, g.start_node(), seeds.next_u64())?;
        if seen.insert(route.edges().to_vec()) {
            since_new = 0;
            let score = score_global_route(g, &route, &cfg.weights)?;
            let distance = route.distance(g);
            routes.push(ScoredRoute {
                route,
                distance,
                score,
            });
        } else {
            since_new += 1;
            if window.is_some_and(|w| since_new >= w) {
                break;
            }
        }
    }
    Ok(CandidateSet {
        routes,
        attempts,
        augmented_length: aug.road_length(),
        matching,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: ScoredRoute,
    pub max_score: f64,
    pub min_score: f64,
}

/// Highest score wins; ties go to the shorter route, then the smaller node sequence.
pub fn select_global_route(candidates: &[ScoredRoute]) -> Result<Selection, PlanError> {
    let best = candidates
        .iter()
        .min_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.distance.total_cmp(&b.distance))
                .then_with(|| a.route.nodes().cmp(b.route.nodes()))
        })
        .ok_or(PlanError::EmptyCandidates)?;
    let max_score = candidates
        .iter()
        .map(|c| c.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_score = candidates
        .iter()
        .map(|c| c.score)
        .fold(f64::INFINITY, f64::min);
    Ok(Selection {
        best: best.clone(),
        max_score,
        min_score,
    })
}

/// Table-style summary of one planning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub max: f64,
    pub min: f64,
    pub nodes: usize,
    pub attempts: usize,
    pub solutions: usize,
    pub time_s: f64,
}

/// Scores on metric graphs are tiny; keep three significant digits.
fn score_cell(x: f64) -> String {
    if x == 0.0 || x.abs() >= 0.01 {
        format!("{x:.3}")
    } else {
        format!("{x:.3e}")
    }
}

impl PlanReport {
    pub fn header() -> &'static str {
        "Max\tMin\t#Nodes\t#Attempts\t#Solutions\tTime (s)"
    }

    pub fn row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{:.3}",
            score_cell(self.max),
            score_cell(self.min),
            self.nodes,
            self.attempts,
            self.solutions,
            self.time_s
        )
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub candidates: CandidateSet,
    pub selection: Selection,
    pub report: PlanReport,
}

pub fn plan_global_route(g: &RoadGraph, cfg: &PlanConfig) -> Result<PlanOutcome, PlanError> {
    let t0 = Instant::now();
    let candidates = enumerate_candidates(g, cfg)?;
    let selection = select_global_route(&candidates.routes)?;
    let report = PlanReport {
        max: selection.max_score,
        min: selection.min_score,
        nodes: g.node_count(),
        attempts: candidates.attempts,
        solutions: candidates.solutions(),
        time_s: t0.elapsed().as_secs_f64(),
    };
    Ok(PlanOutcome {
        candidates,
        selection,
        report,
    })
}
