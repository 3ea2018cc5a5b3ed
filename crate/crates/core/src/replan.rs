//! Uncertainty-aware replanning toward a loop-closure location.
//!
//! For every previously visited node the replanner builds a candidate plan:
//! a discounted shortest path there (`to_loop`) followed by a rural-postman
//! completion that covers every edge still unexplored and returns to the
//! start (`completion`). Candidates are ranked by the D-optimality of the
//! resulting abstract graph per meter of total travel.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eog::{build_eog, update_edge_counts, EdgeWeightParams, EogError};
use crate::graph::{EdgeId, GraphError, NodeId, RoadGraph};
use crate::postman::{
    euler_circuit, min_weight_odd_matching, AugEdgeKind, AugmentedGraph, PlanError,
    DEFAULT_EXACT_MATCHING_LIMIT,
};
use crate::route::{Route, RouteError};

/// Virtual edge weight as a fraction of the shortest road edge.
pub const VIRTUAL_EDGE_FRACTION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplanError {
    #[error("traveled route must contain at least one move")]
    TrivialTraveled,
    #[error("no previously visited node other than the current one")]
    NoCandidates,
    #[error("node {0} has not been visited; a loop closure needs a revisit")]
    NotVisited(NodeId),
    #[error("discount must lie in (0, 1], got {0}")]
    BadDiscount(f64),
    #[error("postman circuit used the virtual edge {0} times")]
    VirtualEdgeReuse(usize),
    #[error("combined route misses edges {0:?}")]
    NotCovering(Vec<EdgeId>),
    #[error("combined route ends at {end}, not at start {start}")]
    NotHome { end: NodeId, start: NodeId },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Eog(#[from] EogError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplanConfig {
    pub weights: EdgeWeightParams,
    /// Cost multiplier for unexplored edges, in (0, 1].
    pub beta: f64,
    /// Seed for the postman circuit of each completion.
    pub seed: u64,
    pub exact_matching_limit: usize,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        Self {
            weights: EdgeWeightParams::default(),
            beta: 0.5,
            seed: 0,
            exact_matching_limit: DEFAULT_EXACT_MATCHING_LIMIT,
        }
    }
}

/// What the robot has driven so far.
#[derive(Debug, Clone)]
pub struct ReplanState<'g> {
    pub graph: &'g RoadGraph,
    pub traveled: Route,
    pub visited_nodes: BTreeSet<NodeId>,
    pub visited_edges: BTreeSet<EdgeId>,
    pub current_node: NodeId,
}

impl<'g> ReplanState<'g> {
    pub fn new(graph: &'g RoadGraph, traveled: Route) -> Self {
        Self {
            graph,
            visited_nodes: traveled.nodes().iter().copied().collect(),
            visited_edges: traveled.edges().iter().copied().collect(),
            current_node: traveled.last(),
            traveled,
        }
    }
}

fn check_beta(beta: f64) -> Result<(), ReplanError> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(ReplanError::BadDiscount(beta))
    }
}

/// Shortest path where unexplored edges cost `beta × length`.
pub fn discounted_path(
    g: &RoadGraph,
    explored: &BTreeSet<EdgeId>,
    from: NodeId,
    to: NodeId,
    beta: f64,
) -> Result<Route, ReplanError> {
    check_beta(beta)?;
    let path = g.shortest_path(from, to, |e| {
        if explored.contains(&e.id) {
            e.length
        } else {
            e.length * beta
        }
    })?;
    Ok(Route::from_parts_unchecked(path.nodes, path.edges))
}

/// Discounted path from the current node to an already visited `target`.
pub fn dijkstra_best_path(
    s: &ReplanState<'_>,
    target: NodeId,
    beta: f64,
) -> Result<Route, ReplanError> {
    if !s.visited_nodes.contains(&target) {
        return Err(ReplanError::NotVisited(target));
    }
    discounted_path(s.graph, &s.visited_edges, s.current_node, target, beta)
}

/// Edges not yet explored.
pub fn create_required_graph(g: &RoadGraph, explored: &BTreeSet<EdgeId>) -> BTreeSet<EdgeId> {
    g.edges()
        .iter()
        .map(|e| e.id)
        .filter(|id| !explored.contains(id))
        .collect()
}

/// Optional shortest path joining two components of the required graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub from: NodeId,
    pub to: NodeId,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequiredGraph {
    pub required: Vec<EdgeId>,
    pub connectors: Vec<Connector>,
}

impl RequiredGraph {
    pub fn connector_length(&self) -> f64 {
        self.connectors.iter().map(|c| c.length).sum()
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Joins the components of `required` (plus `terminals`, each treated as a
/// component of its own when not touched) with shortest-path connectors
/// chosen as a minimum spanning tree over component distances.
pub fn connect_required_graph(
    g: &RoadGraph,
    required: &BTreeSet<EdgeId>,
    terminals: &[NodeId],
) -> Result<RequiredGraph, ReplanError> {
    let mut touched: BTreeSet<NodeId> = terminals.iter().copied().collect();
    for id in required {
        let e = g.edge(*id).ok_or(RouteError::EdgeMismatch {
            edge: *id,
            from: g.start_node(),
            to: g.start_node(),
        })?;
        touched.insert(e.endpoints.0);
        touched.insert(e.endpoints.1);
    }
    let touched: Vec<NodeId> = touched.into_iter().collect();
    let pos = |n: NodeId| touched.binary_search(&n).expect("touched node");

    let mut comps = DisjointSet((0..touched.len()).collect());
    for id in required {
        let e = g.edge(*id).expect("checked above");
        comps.union(pos(e.endpoints.0), pos(e.endpoints.1));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..touched.len() {
        let r = comps.find(i);
        members.entry(r).or_default().push(i);
    }
    let roots: Vec<usize> = members.keys().copied().collect();
    let mut connectors = Vec::new();
    if roots.len() > 1 {
        let dist: Vec<Vec<f64>> = touched
            .iter()
            .map(|&u| g.distances_from(u, |e| e.length))
            .collect::<Result<_, _>>()?;
        // (distance, from, to, component a, component b), closest node pair per component pair
        let mut links = Vec::new();
        for (x, &ra) in roots.iter().enumerate() {
            for &rb in &roots[x + 1..] {
                let mut best: Option<(f64, NodeId, NodeId)> = None;
                for &i in &members[&ra] {
                    for &j in &members[&rb] {
                        let d = dist[i][g.node_idx(touched[j]).expect("graph node")];
                        let cand = (d, touched[i], touched[j]);
                        if best.is_none_or(|b| (cand.0, cand.1, cand.2) < b) {
                            best = Some(cand);
                        }
                    }
                }
                let (d, u, v) = best.expect("components are non-empty");
                links.push((d, u, v, ra, rb));
            }
        }
        links.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut forest = DisjointSet((0..touched.len()).collect());
        for (_, u, v, ra, rb) in links {
            if forest.union(ra, rb) {
                let path = g.shortest_path_by_length(u, v)?;
                connectors.push(Connector {
                    from: u,
                    to: v,
                    length: path.cost,
                    nodes: path.nodes,
                    edges: path.edges,
                });
            }
        }
    }
    Ok(RequiredGraph {
        required: required.iter().copied().collect(),
        connectors,
    })
}

/// Open route `start → end` covering every required edge.
///
/// A virtual `start–end` edge of negligible weight turns the open problem
/// into a closed postman tour; the tour is rotated so the virtual edge comes
/// last and then dropped.
pub fn rpp_solve(
    g: &RoadGraph,
    start: NodeId,
    end: NodeId,
    req: &RequiredGraph,
    seed: u64,
    exact_matching_limit: usize,
) -> Result<Route, ReplanError> {
    let mut aug = AugmentedGraph::from_road_edges(g, req.required.iter().copied());
    for c in &req.connectors {
        for &id in &c.edges {
            aug.push_road(g, id, true);
        }
    }
    if start != end {
        aug.push_virtual(start, end, VIRTUAL_EDGE_FRACTION * g.min_edge_length());
    }
    let matching = min_weight_odd_matching(g, &aug.odd_nodes(), exact_matching_limit)?;
    aug.add_matching(g, &matching);
    let virtual_count = aug
        .edges
        .iter()
        .filter(|e| e.kind == AugEdgeKind::Virtual)
        .count();
    if virtual_count > 1 {
        return Err(ReplanError::VirtualEdgeReuse(virtual_count));
    }

    let (nodes, edges) = euler_circuit(&aug, start, seed)?;
    let (nodes, edges) = match edges
        .iter()
        .position(|&k| aug.edges[k].kind == AugEdgeKind::Virtual)
    {
        None => (nodes, edges),
        Some(p) => {
            // Edge k runs nodes[k] → nodes[k+1]; start right after the virtual edge.
            let m = edges.len();
            let order: Vec<usize> = (p + 1..m).chain(0..p).collect();
            let mut rn = vec![nodes[(p + 1) % m]];
            let mut re = Vec::with_capacity(m - 1);
            for k in order {
                re.push(edges[k]);
                rn.push(nodes[k + 1]);
            }
            if rn[0] == start {
                (rn, re)
            } else {
                rn.reverse();
                re.reverse();
                (rn, re)
            }
        }
    };
    let road_edges = edges
        .into_iter()
        .map(|k| match aug.edges[k].kind {
            AugEdgeKind::Road { id, .. } => Ok(id),
            AugEdgeKind::Virtual => Err(ReplanError::VirtualEdgeReuse(2)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let route = Route::from_parts_unchecked(nodes, road_edges);
    debug_assert_eq!(route.first(), start);
    debug_assert_eq!(route.last(), end);
    Ok(route)
}

/// D-opt over total distance for the combined route `r1 + r2 + r3`.
///
/// Edges driven in `r1` are weighted as visited, with prior counts taken from
/// `r1` alone.
pub fn evaluate_candidate(
    g: &RoadGraph,
    r1: &Route,
    r2: &Route,
    r3: &Route,
    p: &EdgeWeightParams,
) -> Result<f64, ReplanError> {
    let full = r1.concat(r2)?.concat(r3)?;
    let missed = full.missed_edges(g);
    if !missed.is_empty() {
        return Err(ReplanError::NotCovering(missed));
    }
    let counts = update_edge_counts(g, &full);
    let prior = update_edge_counts(g, r1);
    let eog = build_eog(g, &counts, &prior, p)?;
    let distance = r1.distance(g) + r2.distance(g) + r3.distance(g);
    Ok(eog.d_opt()? / distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostics {
    pub node: NodeId,
    pub objective: f64,
    pub to_loop_distance: f64,
    pub completion_distance: f64,
    pub total_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanResult {
    pub loop_node: NodeId,
    pub to_loop: Route,
    pub completion: Route,
    pub objective: f64,
    pub candidates: Vec<CandidateDiagnostics>,
}

/// Plan for one loop-closure candidate. Works on copies of the explored
/// set so candidates never observe each other's bookkeeping.
pub fn plan_candidate(
    s: &ReplanState<'_>,
    loop_node: NodeId,
    cfg: &ReplanConfig,
) -> Result<(Route, Route, f64), ReplanError> {
    let g = s.graph;
    let to_loop = dijkstra_best_path(s, loop_node, cfg.beta)?;
    let mut explored = s.visited_edges.clone();
    explored.extend(to_loop.edges().iter().copied());
    let required = create_required_graph(g, &explored);
    let completion = if required.is_empty() {
        discounted_path(g, &explored, loop_node, g.start_node(), cfg.beta)?
    } else {
        let req = connect_required_graph(g, &required, &[loop_node, g.start_node()])?;
        rpp_solve(
            g,
            loop_node,
            g.start_node(),
            &req,
            cfg.seed,
            cfg.exact_matching_limit,
        )?
    };
    if completion.last() != g.start_node() {
        return Err(ReplanError::NotHome {
            end: completion.last(),
            start: g.start_node(),
        });
    }
    let objective = evaluate_candidate(g, &s.traveled, &to_loop, &completion, &cfg.weights)?;
    Ok((to_loop, completion, objective))
}

/// Evaluates every visited node except the current one and keeps the best.
///
/// Objectives within 1e-9 relative count as tied; ties go to the shorter
/// path to the loop node, then the smaller node id.
pub fn replan(
    g: &RoadGraph,
    traveled: &Route,
    cfg: &ReplanConfig,
) -> Result<ReplanResult, ReplanError> {
    check_beta(cfg.beta)?;
    if traveled.hops() == 0 {
        return Err(ReplanError::TrivialTraveled);
    }
    let state = ReplanState::new(g, traveled.clone());
    let candidates: Vec<NodeId> = state
        .visited_nodes
        .iter()
        .copied()
        .filter(|&n| n != state.current_node)
        .collect();
    if candidates.is_empty() {
        return Err(ReplanError::NoCandidates);
    }

    let mut best: Option<(NodeId, Route, Route, f64)> = None;
    let mut diagnostics = Vec::with_capacity(candidates.len());
    for node in candidates {
        let (to_loop, completion, objective) = plan_candidate(&state, node, cfg)?;
        let d2 = to_loop.distance(g);
        let d3 = completion.distance(g);
        diagnostics.push(CandidateDiagnostics {
            node,
            objective,
            to_loop_distance: d2,
            completion_distance: d3,
            total_distance: traveled.distance(g) + d2 + d3,
        });
        let better = match &best {
            None => true,
            Some((bn, br2, _, bobj)) => {
                let tol = 1e-9 * bobj.abs().max(objective.abs());
                if (objective - bobj).abs() <= tol {
                    let bd2 = br2.distance(g);
                    d2 < bd2 || (d2 == bd2 && node < *bn)
                } else {
                    objective > *bobj
                }
            }
        };
        if better {
            best = Some((node, to_loop, completion, objective));
        }
    }
    let (loop_node, to_loop, completion, objective) = best.expect("at least one candidate");
    Ok(ReplanResult {
        loop_node,
        to_loop,
        completion,
        objective,
        candidates: diagnostics,
    })
}
