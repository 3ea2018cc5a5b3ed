//! Road-network graph: intersections joined by road segments.
//!
//! A [`RoadGraph`] is an undirected multigraph. It is validated once on
//! construction (endpoints present, positive lengths, connected, start node
//! present) and immutable afterwards, so it can be shared freely between
//! evaluators.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used for all great-circle distances.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge id {0}")]
    DuplicateEdge(EdgeId),
    #[error("edge {edge} references unknown node {node}")]
    UnknownEndpoint { edge: EdgeId, node: NodeId },
    #[error("edge {0} has non-positive or non-finite length")]
    BadLength(EdgeId),
    #[error("edge {0} is a self-loop")]
    SelfLoop(EdgeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("graph has no nodes")]
    Empty,
    #[error("graph is disconnected: component sizes {0:?}")]
    Disconnected(Vec<usize>),
    #[error("no path from {from} to {to}")]
    NoPath { from: NodeId, to: NodeId },
    #[error("malformed graph document: {0}")]
    Json(String),
}

/// WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GraphError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GraphError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in meters.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNode {
    pub id: NodeId,
    pub position: GeoPoint,
    /// Equirectangular projection about the graph centroid, meters.
    pub local_xy: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub id: EdgeId,
    pub endpoints: (NodeId, NodeId),
    pub length: f64,
}

impl RoadEdge {
    /// The endpoint opposite `node`, if `node` is incident.
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        match self.endpoints {
            (a, b) if a == node => Some(b),
            (a, b) if b == node => Some(a),
            _ => None,
        }
    }

    pub fn connects(&self, u: NodeId, v: NodeId) -> bool {
        self.endpoints == (u, v) || self.endpoints == (v, u)
    }
}

/// Minimal-cost path returned by [`RoadGraph::shortest_path`].
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    start_node: NodeId,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
    /// Per node index: (edge index, neighbour node index), sorted by neighbour id then edge id.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl RoadGraph {
    /// Builds and validates a graph. Edges are stored in ascending id order
    /// and nodes in ascending id order, which fixes the Laplacian row order.
    pub fn new(
        nodes: Vec<(NodeId, GeoPoint)>,
        mut edges: Vec<RoadEdge>,
        start_node: NodeId,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut nodes = nodes;
        nodes.sort_by_key(|(id, _)| *id);
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, (id, p)) in nodes.iter().enumerate() {
            GeoPoint::new(p.lat, p.lon)?;
            if node_index.insert(*id, i).is_some() {
                return Err(GraphError::DuplicateNode(*id));
            }
        }
        if !node_index.contains_key(&start_node) {
            return Err(GraphError::UnknownNode(start_node));
        }

        edges.sort_by_key(|e| e.id);
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (k, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id, k).is_some() {
                return Err(GraphError::DuplicateEdge(e.id));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(GraphError::BadLength(e.id));
            }
            let (a, b) = e.endpoints;
            if a == b {
                return Err(GraphError::SelfLoop(e.id));
            }
            let ia = *node_index.get(&a).ok_or(GraphError::UnknownEndpoint {
                edge: e.id,
                node: a,
            })?;
            let ib = *node_index.get(&b).ok_or(GraphError::UnknownEndpoint {
                edge: e.id,
                node: b,
            })?;
            adjacency[ia].push((k, ib));
            adjacency[ib].push((k, ia));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(k, v)| (nodes[v].0, edges[k].id));
        }

        let (lat0, lon0) = {
            let n = nodes.len() as f64;
            let lat = nodes.iter().map(|(_, p)| p.lat).sum::<f64>() / n;
            let lon = nodes.iter().map(|(_, p)| p.lon).sum::<f64>() / n;
            (lat, lon)
        };
        let coslat = lat0.to_radians().cos();
        let nodes: Vec<RoadNode> = nodes
            .into_iter()
            .map(|(id, p)| RoadNode {
                id,
                position: p,
                local_xy: (
                    EARTH_RADIUS_M * (p.lon - lon0).to_radians() * coslat,
                    EARTH_RADIUS_M * (p.lat - lat0).to_radians(),
                ),
            })
            .collect();

        let graph = Self {
            nodes,
            edges,
            start_node,
            node_index,
            edge_index,
            adjacency,
        };
        let sizes = graph.component_sizes();
        if sizes.len() > 1 {
            return Err(GraphError::Disconnected(sizes));
        }
        Ok(graph)
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn start_node(&self) -> NodeId {
        self.start_node
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.node_index.contains_key(&id)
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn edge_idx(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.node_idx(id).map(|i| &self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&RoadEdge> {
        self.edge_idx(id).map(|k| &self.edges[k])
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.length)
            .fold(f64::INFINITY, f64::min)
    }

    /// Multigraph degree (parallel edges counted individually).
    pub fn degree(&self, id: NodeId) -> usize {
        self.node_idx(id).map_or(0, |i| self.adjacency[i].len())
    }

    /// Incident edges of `id` as (edge, neighbour), ordered by neighbour id then edge id.
    pub fn incident(&self, id: NodeId) -> impl Iterator<Item = (&RoadEdge, NodeId)> + '_ {
        let adj = self
            .node_idx(id)
            .map(|i| self.adjacency[i].as_slice())
            .unwrap_or(&[]);
        adj.iter().map(|&(k, v)| (&self.edges[k], self.nodes[v].id))
    }

    /// Edges joining `u` and `v`, ascending by id.
    pub fn edges_between(&self, u: NodeId, v: NodeId) -> Vec<&RoadEdge> {
        let mut out: Vec<&RoadEdge> = self
            .incident(u)
            .filter(|(_, w)| *w == v)
            .map(|(e, _)| e)
            .collect();
        out.sort_by_key(|e| e.id);
        out
    }

    /// Shortest edge joining `u` and `v` (smallest id among equal lengths).
    pub fn best_edge_between(&self, u: NodeId, v: NodeId) -> Option<&RoadEdge> {
        self.edges_between(u, v)
            .into_iter()
            .min_by(|a, b| a.length.total_cmp(&b.length).then(a.id.cmp(&b.id)))
    }

    fn component_sizes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut sizes = Vec::new();
        for s in 0..self.nodes.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut size = 0;
            while let Some(u) = stack.pop() {
                size += 1;
                for &(_, v) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }

    /// Single-source distances under `cost`, indexed by node index.
    pub fn distances_from<F>(&self, from: NodeId, cost: F) -> Result<Vec<f64>, GraphError>
    where
        F: Fn(&RoadEdge) -> f64,
    {
        let s = self.node_idx(from).ok_or(GraphError::UnknownNode(from))?;
        Ok(self.dijkstra(s, &cost))
    }

    fn dijkstra<F>(&self, s: usize, cost: &F) -> Vec<f64>
    where
        F: Fn(&RoadEdge) -> f64,
    {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(HeapEntry { cost: 0.0, node: s });
        while let Some(HeapEntry { cost: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(k, v) in &self.adjacency[u] {
                let nd = d + cost(&self.edges[k]);
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapEntry { cost: nd, node: v });
                }
            }
        }
        dist
    }

    /// Minimal-cost path under `cost`. Among equal-cost paths the
    /// lexicographically smallest node-id sequence is returned; among
    /// parallel edges the cheapest, then smallest id, is used.
    pub fn shortest_path<F>(&self, from: NodeId, to: NodeId, cost: F) -> Result<Path, GraphError>
    where
        F: Fn(&RoadEdge) -> f64,
    {
        let s = self.node_idx(from).ok_or(GraphError::UnknownNode(from))?;
        let t = self.node_idx(to).ok_or(GraphError::UnknownNode(to))?;
        // Distances to the target; the graph is undirected so a forward search from t suffices.
        let to_target = self.dijkstra(t, &cost);
        if !to_target[s].is_finite() {
            return Err(GraphError::NoPath { from, to });
        }

        let mut nodes = vec![from];
        let mut edges = Vec::new();
        let mut u = s;
        let mut total = 0.0;
        while u != t {
            let remaining = to_target[u];
            let tol = 1e-9 * remaining.abs().max(1.0);
            // adjacency is sorted by neighbour id, so the first tight neighbour is the smallest.
            let mut next: Option<(usize, usize, f64)> = None;
            for &(k, v) in &self.adjacency[u] {
                let c = cost(&self.edges[k]);
                if (c + to_target[v] - remaining).abs() > tol || to_target[v] >= remaining {
                    continue;
                }
                match next {
                    None => next = Some((k, v, c)),
                    Some((_, nv, nc)) if nv == v && c < nc => next = Some((k, v, c)),
                    _ => {}
                }
                if let Some((_, nv, _)) = next {
                    if nv != v {
                        break;
                    }
                }
            }
            let (k, v, c) = next.ok_or(GraphError::NoPath { from, to })?;
            nodes.push(self.nodes[v].id);
            edges.push(self.edges[k].id);
            total += c;
            u = v;
        }
        Ok(Path {
            nodes,
            edges,
            cost: total,
        })
    }

    /// Plain geometric shortest path.
    pub fn shortest_path_by_length(&self, from: NodeId, to: NodeId) -> Result<Path, GraphError> {
        self.shortest_path(from, to, |e| e.length)
    }

    /// Node ids of odd multigraph degree.
    pub fn odd_degree_nodes(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.adjacency[*i].len() % 2 == 1)
            .map(|(_, n)| n.id)
            .collect()
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    lat: n.position.lat,
                    lon: n.position.lon,
                })
                .collect(),
            edges: self.edges.clone(),
            start_node: self.start_node,
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        let nodes = doc
            .nodes
            .into_iter()
            .map(|n| GeoPoint::new(n.lat, n.lon).map(|p| (n.id, p)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(nodes, doc.edges, doc.start_node)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument =
            serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        Self::from_document(doc)
    }
}

/// Canonical JSON form of a [`RoadGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<RoadEdge>,
    pub start_node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use super::*;

    /// Builds a graph from (a, b, length) triples with edge ids in list order
    /// and nodes laid out on a small lattice near the equator.
    pub fn from_triples(triples: &[(i64, i64, f64)], start: i64) -> RoadGraph {
        let mut ids: Vec<i64> = triples.iter().flat_map(|&(a, b, _)| [a, b]).collect();
        ids.sort_unstable();
        ids.dedup();
        let nodes = ids
            .iter()
            .map(|&id| {
                (
                    NodeId(id),
                    GeoPoint::new(0.001 * (id % 5) as f64, 0.001 * (id / 5) as f64).unwrap(),
                )
            })
            .collect();
        let edges = triples
            .iter()
            .enumerate()
            .map(|(k, &(a, b, length))| RoadEdge {
                id: EdgeId(k as u32),
                endpoints: (NodeId(a), NodeId(b)),
                length,
            })
            .collect();
        RoadGraph::new(nodes, edges, NodeId(start)).unwrap()
    }

    pub const SAMPLE_EDGES: [(i64, i64); 15] = [
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 2),
        (4, 6),
        (6, 7),
        (7, 8),
        (8, 11),
        (8, 9),
        (9, 10),
        (10, 11),
        (11, 12),
        (12, 6),
        (12, 1),
    ];

    pub fn sample_unit() -> RoadGraph {
        let t: Vec<_> = SAMPLE_EDGES.iter().map(|&(a, b)| (a, b, 1.0)).collect();
        from_triples(&t, 1)
    }

    pub fn ids(v: &[i64]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }
}
