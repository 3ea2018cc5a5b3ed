use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, NodeId, RoadGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("route is empty")]
    Empty,
    #[error("no edge between {0} and {1}")]
    NotAnEdge(NodeId, NodeId),
    #[error("edge {edge} does not join {from} and {to}")]
    EdgeMismatch {
        edge: EdgeId,
        from: NodeId,
        to: NodeId,
    },
    #[error("route has {nodes} nodes but {edges} edges")]
    LengthMismatch { nodes: usize, edges: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("routes do not join: {0} then {1}")]
    Discontinuous(NodeId, NodeId),
}

/// A walk over a [`RoadGraph`]: node sequence plus the edge taken for each step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Route {
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

impl Route {
    pub fn single(node: NodeId) -> Self {
        Self {
            nodes: vec![node],
            edges: Vec::new(),
        }
    }

    /// Resolves consecutive node pairs to edges; among parallel edges the
    /// shortest (then smallest id) is taken.
    pub fn from_nodes(g: &RoadGraph, nodes: Vec<NodeId>) -> Result<Self, RouteError> {
        let first = *nodes.first().ok_or(RouteError::Empty)?;
        if !g.contains_node(first) {
            return Err(RouteError::UnknownNode(first));
        }
        let edges = nodes
            .windows(2)
            .map(|w| {
                g.best_edge_between(w[0], w[1])
                    .map(|e| e.id)
                    .ok_or(RouteError::NotAnEdge(w[0], w[1]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { nodes, edges })
    }

    /// Validates an explicit node/edge pairing.
    pub fn from_parts(
        g: &RoadGraph,
        nodes: Vec<NodeId>,
        edges: Vec<EdgeId>,
    ) -> Result<Self, RouteError> {
        let first = *nodes.first().ok_or(RouteError::Empty)?;
        if !g.contains_node(first) {
            return Err(RouteError::UnknownNode(first));
        }
        if edges.len() + 1 != nodes.len() {
            return Err(RouteError::LengthMismatch {
                nodes: nodes.len(),
                edges: edges.len(),
            });
        }
        for (w, &e) in nodes.windows(2).zip(&edges) {
            match g.edge(e) {
                Some(edge) if edge.connects(w[0], w[1]) => {}
                _ => {
                    return Err(RouteError::EdgeMismatch {
                        edge: e,
                        from: w[0],
                        to: w[1],
                    })
                }
            }
        }
        Ok(Self { nodes, edges })
    }

    /// Construct without validation; callers guarantee consistency.
    pub(crate) fn from_parts_unchecked(nodes: Vec<NodeId>, edges: Vec<EdgeId>) -> Self {
        debug_assert_eq!(nodes.len(), edges.len() + 1);
        Self { nodes, edges }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn first(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn last(&self) -> NodeId {
        *self.nodes.last().expect("route is never empty")
    }

    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    pub fn is_closed(&self) -> bool {
        self.first() == self.last()
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn concat(&self, other: &Route) -> Result<Route, RouteError> {
        if self.last() != other.first() {
            return Err(RouteError::Discontinuous(self.last(), other.first()));
        }
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes[1..]);
        let mut edges = self.edges.clone();
        edges.extend_from_slice(&other.edges);
        Ok(Route { nodes, edges })
    }

    pub fn reversed(&self) -> Route {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        let mut edges = self.edges.clone();
        edges.reverse();
        Route { nodes, edges }
    }

    /// Sum of traversed edge lengths, repeats included.
    pub fn distance(&self, g: &RoadGraph) -> f64 {
        self.edges
            .iter()
            .map(|e| g.edge(*e).map_or(0.0, |e| e.length))
            .sum()
    }

    /// Graph edges this route never traverses.
    pub fn missed_edges(&self, g: &RoadGraph) -> Vec<EdgeId> {
        let used: BTreeSet<EdgeId> = self.edges.iter().copied().collect();
        g.edges()
            .iter()
            .map(|e| e.id)
            .filter(|id| !used.contains(id))
            .collect()
    }
}

/// Route length in meters for a node sequence.
pub fn route_distance(g: &RoadGraph, nodes: &[NodeId]) -> Result<f64, RouteError> {
    Ok(Route::from_nodes(g, nodes.to_vec())?.distance(g))
}
