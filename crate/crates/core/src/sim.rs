//! Deterministic mission simulator.
//!
//! Pose uncertainty is a scalar `u` that grows by `drift_rate` per meter and
//! drops to `min(u, u_first + residual)` whenever the robot re-enters a node,
//! where `u_first` is the uncertainty recorded on the first arrival there.
//! With active loop closure enabled, crossing `trigger_threshold` makes the
//! robot replan from its driven history and follow the new plan instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, NodeId, RoadGraph};
use crate::replan::{replan, ReplanConfig, ReplanError};
use crate::route::{Route, RouteError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("edge {edge} is not incident to node {node}")]
    NotIncident { edge: EdgeId, node: NodeId },
    #[error("node {0} was never visited")]
    UnknownNode(NodeId),
    #[error("robot is at {current}, not at {node}")]
    NotAtNode { node: NodeId, current: NodeId },
    #[error("route must start at {0}")]
    WrongStart(NodeId),
    #[error("mission ended at {end} with unvisited edges {missed:?}")]
    Incomplete { end: NodeId, missed: Vec<EdgeId> },
    #[error("replan at odometer {odometer:.1} m failed: {source}")]
    Replan {
        odometer: f64,
        #[source]
        source: ReplanError,
    },
    #[error(transparent)]
    Route(#[from] RouteError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// ρ, uncertainty per meter.
    pub drift_rate: f64,
    /// κ, uncertainty left after a loop closure.
    pub loop_closure_residual: f64,
    /// u_max
    pub trigger_threshold: f64,
    pub alc_enabled: bool,
    pub seed: u64,
    /// Minimum odometer gap between two replans.
    pub min_replan_spacing_m: f64,
    pub replan: ReplanConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            drift_rate: 0.001,
            loop_closure_residual: 0.02,
            trigger_threshold: 0.3,
            alc_enabled: true,
            seed: 0,
            min_replan_spacing_m: 10.0,
            replan: ReplanConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.drift_rate > 0.0 && self.drift_rate.is_finite()) {
            return Err(SimError::Config(format!(
                "drift_rate must be > 0, got {}",
                self.drift_rate
            )));
        }
        if self.loop_closure_residual.is_nan() || self.loop_closure_residual < 0.0 {
            return Err(SimError::Config(format!(
                "loop_closure_residual must be >= 0, got {}",
                self.loop_closure_residual
            )));
        }
        if self.trigger_threshold.is_nan() || self.trigger_threshold <= self.loop_closure_residual {
            return Err(SimError::Config(format!(
                "trigger_threshold ({}) must exceed loop_closure_residual ({})",
                self.trigger_threshold, self.loop_closure_residual
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub current_node: NodeId,
    pub odometer: f64,
    pub u: f64,
    /// Uncertainty at the first arrival at each node.
    pub node_memory: BTreeMap<NodeId, f64>,
}

impl RobotState {
    pub fn at(start: NodeId) -> Self {
        Self {
            current_node: start,
            odometer: 0.0,
            u: 0.0,
            node_memory: [(start, 0.0)].into_iter().collect(),
        }
    }
}

/// Drives one edge: odometer and uncertainty grow with its length.
pub fn traverse_edge(
    state: &RobotState,
    g: &RoadGraph,
    edge: EdgeId,
    drift_rate: f64,
) -> Result<RobotState, SimError> {
    let e = g.edge(edge).ok_or(SimError::NotIncident {
        edge,
        node: state.current_node,
    })?;
    let next = e.other(state.current_node).ok_or(SimError::NotIncident {
        edge,
        node: state.current_node,
    })?;
    let mut s = state.clone();
    s.current_node = next;
    s.odometer += e.length;
    s.u += drift_rate * e.length;
    s.node_memory.entry(next).or_insert(s.u);
    Ok(s)
}

pub fn loop_closure(
    state: &RobotState,
    node: NodeId,
    residual: f64,
) -> Result<RobotState, SimError> {
    if node != state.current_node {
        return Err(SimError::NotAtNode {
            node,
            current: state.current_node,
        });
    }
    let memory = *state
        .node_memory
        .get(&node)
        .ok_or(SimError::UnknownNode(node))?;
    let mut s = state.clone();
    s.u = s.u.min(memory + residual);
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Move,
    LoopClosure,
    AlcTrigger,
    Replan,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Move => "move",
            TraceEvent::LoopClosure => "loop_closure",
            TraceEvent::AlcTrigger => "alc_trigger",
            TraceEvent::Replan => "replan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub odometer_m: f64,
    pub uncertainty: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub odometer_m: f64,
    pub at_node: NodeId,
    pub loop_node: NodeId,
    pub to_loop: Vec<NodeId>,
    pub completion: Vec<NodeId>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    /// Distance-weighted mean uncertainty.
    pub avg: f64,
    pub max: f64,
    pub traj_len_m: f64,
}

impl MissionSummary {
    /// Integrates the piecewise-linear uncertainty profile implied by the
    /// records, starting from zero uncertainty at odometer zero.
    pub fn from_records(records: &[TraceRecord]) -> Self {
        let mut area = 0.0;
        let mut max = 0.0f64;
        let (mut x, mut u) = (0.0, 0.0);
        for r in records {
            if r.event == TraceEvent::Move {
                area += (r.odometer_m - x) * (u + r.uncertainty) / 2.0;
            }
            x = r.odometer_m;
            u = r.uncertainty;
            max = max.max(u);
        }
        Self {
            avg: if x > 0.0 { area / x } else { 0.0 },
            max,
            traj_len_m: x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionTrace {
    pub records: Vec<TraceRecord>,
    pub replans: Vec<ReplanRecord>,
    pub driven: Route,
    pub summary: MissionSummary,
}

impl MissionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("odometer_m,uncertainty,event\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{}",
                r.odometer_m,
                r.uncertainty,
                r.event.as_str()
            );
        }
        out
    }
}

/// Follows `route` edge by edge, closing loops on node revisits and, when
/// enabled, replanning when uncertainty rises above the trigger threshold.
///
/// The trigger fires on an upward crossing and re-arms once uncertainty is
/// back at or below the threshold. It is not checked while the robot is
/// still heading to the chosen loop node, and is ignored (consuming the
/// crossing) within `min_replan_spacing_m` of the previous replan or when no
/// new edge has been explored since it.
pub fn run_mission(
    g: &RoadGraph,
    route: &Route,
    cfg: &SimConfig,
) -> Result<MissionTrace, SimError> {
    cfg.validate()?;
    if route.first() != g.start_node() {
        return Err(SimError::WrongStart(g.start_node()));
    }
    let mut state = RobotState::at(g.start_node());
    let mut records = Vec::new();
    let mut replans = Vec::new();
    let mut driven_nodes = vec![g.start_node()];
    let mut driven_edges = Vec::new();
    let mut explored: BTreeSet<EdgeId> = BTreeSet::new();
    let mut last_replan: Option<f64> = None;
    let mut explored_since_replan = true;
    let replan_cfg = ReplanConfig {
        seed: cfg.seed,
        ..cfg.replan.clone()
    };

    let mut plan = route.clone();
    let mut step = 0;
    let mut heading_to_loop = 0;
    let mut armed = true;
    while step < plan.hops() {
        let edge = plan.edges()[step];
        step += 1;
        let revisit = g
            .edge(edge)
            .and_then(|e| e.other(state.current_node))
            .is_some_and(|n| state.node_memory.contains_key(&n));
        state = traverse_edge(&state, g, edge, cfg.drift_rate)?;
        driven_nodes.push(state.current_node);
        driven_edges.push(edge);
        if explored.insert(edge) {
            explored_since_replan = true;
        }
        records.push(TraceRecord {
            odometer_m: state.odometer,
            uncertainty: state.u,
            event: TraceEvent::Move,
        });
        if revisit {
            state = loop_closure(&state, state.current_node, cfg.loop_closure_residual)?;
            records.push(TraceRecord {
                odometer_m: state.odometer,
                uncertainty: state.u,
                event: TraceEvent::LoopClosure,
            });
        }

        if state.u <= cfg.trigger_threshold {
            armed = true;
        }
        let unexplored_left = explored.len() < g.edge_count();
        if !(cfg.alc_enabled && armed && state.u > cfg.trigger_threshold && unexplored_left) {
            continue;
        }
        if step < heading_to_loop {
            debug!(
                "trigger at {:.1} m deferred until the loop node is reached",
                state.odometer
            );
            continue;
        }
        armed = false;
        let too_close = last_replan.is_some_and(|x| state.odometer - x < cfg.min_replan_spacing_m);
        if too_close || !explored_since_replan {
            warn!(
                "ignoring loop-closure trigger at {:.1} m (u = {:.3}): too soon after previous replan",
                state.odometer, state.u
            );
            continue;
        }
        records.push(TraceRecord {
            odometer_m: state.odometer,
            uncertainty: state.u,
            event: TraceEvent::AlcTrigger,
        });
        let traveled = Route::from_parts_unchecked(driven_nodes.clone(), driven_edges.clone());
        let result = replan(g, &traveled, &replan_cfg).map_err(|source| SimError::Replan {
            odometer: state.odometer,
            source,
        })?;
        records.push(TraceRecord {
            odometer_m: state.odometer,
            uncertainty: state.u,
            event: TraceEvent::Replan,
        });
        replans.push(ReplanRecord {
            odometer_m: state.odometer,
            at_node: state.current_node,
            loop_node: result.loop_node,
            to_loop: result.to_loop.nodes().to_vec(),
            completion: result.completion.nodes().to_vec(),
            objective: result.objective,
        });
        heading_to_loop = result.to_loop.hops();
        plan = result.to_loop.concat(&result.completion)?;
        step = 0;
        last_replan = Some(state.odometer);
        explored_since_replan = false;
    }

    let driven = Route::from_parts_unchecked(driven_nodes, driven_edges);
    let missed = driven.missed_edges(g);
    if !missed.is_empty() || state.current_node != g.start_node() {
        return Err(SimError::Incomplete {
            end: state.current_node,
            missed,
        });
    }
    let summary = MissionSummary::from_records(&records);
    Ok(MissionTrace {
        records,
        replans,
        driven,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub with_alc: MissionSummary,
    pub without_alc: MissionSummary,
    /// with / without trajectory length.
    pub traj_len_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionComparison {
    pub with_alc: MissionTrace,
    pub without_alc: MissionTrace,
    pub summary: PairedSummary,
}

/// Runs the same route with and without active loop closure.
pub fn compare_missions(
    g: &RoadGraph,
    route: &Route,
    cfg: &SimConfig,
) -> Result<MissionComparison, SimError> {
    let with_alc = run_mission(
        g,
        route,
        &SimConfig {
            alc_enabled: true,
            ..cfg.clone()
        },
    )?;
    let without_alc = run_mission(
        g,
        route,
        &SimConfig {
            alc_enabled: false,
            ..cfg.clone()
        },
    )?;
    let summary = PairedSummary {
        with_alc: with_alc.summary,
        without_alc: without_alc.summary,
        traj_len_ratio: with_alc.summary.traj_len_m / without_alc.summary.traj_len_m,
    };
    Ok(MissionComparison {
        with_alc,
        without_alc,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::*;

    #[test]
    fn traverse_accumulates_linearly() {
        let g = from_triples(&[(1, 2, 10.0), (2, 3, 4.0)], 1);
        let s = traverse_edge(&RobotState::at(NodeId(1)), &g, EdgeId(0), 0.01).unwrap();
        assert!((s.u - 0.1).abs() < 1e-15);
        let s = traverse_edge(&s, &g, EdgeId(1), 0.01).unwrap();
        assert!((s.u - 0.14).abs() < 1e-15);
        assert_eq!(s.odometer, 14.0);
        assert_eq!(s.node_memory[&NodeId(3)], s.u);
        assert!(matches!(
            traverse_edge(&s, &g, EdgeId(0), 0.01),
            Err(SimError::NotIncident { .. })
        ));
    }

    #[test]
    fn loop_closure_clamps() {
        let mut s = RobotState::at(NodeId(1));
        s.node_memory.insert(NodeId(7), 0.2);
        s.current_node = NodeId(7);
        s.u = 1.0;
        assert!((loop_closure(&s, NodeId(7), 0.05).unwrap().u - 0.25).abs() < 1e-15);
        s.u = 0.21;
        assert_eq!(loop_closure(&s, NodeId(7), 0.05).unwrap().u, 0.21);
        s.current_node = NodeId(9);
        assert_eq!(
            loop_closure(&s, NodeId(9), 0.05),
            Err(SimError::UnknownNode(NodeId(9)))
        );
    }

    #[test]
    fn triangle_without_trigger() {
        let g = from_triples(&[(1, 2, 100.0), (2, 3, 100.0), (3, 1, 100.0)], 1);
        let route = Route::from_nodes(&g, ids(&[1, 2, 3, 1])).unwrap();
        let cfg = SimConfig {
            trigger_threshold: 1e9,
            ..Default::default()
        };
        let t = run_mission(&g, &route, &cfg).unwrap();
        let closures = t
            .records
            .iter()
            .filter(|r| r.event == TraceEvent::LoopClosure)
            .count();
        assert_eq!(closures, 1);
        assert!(t.replans.is_empty());
        assert_eq!(t.summary.traj_len_m, 300.0);
        assert!((t.summary.max - 0.3).abs() < 1e-12);
    }

    #[test]
    fn infinite_threshold_matches_baseline() {
        let g = sample_unit();
        let route = Route::from_nodes(
            &g,
            ids(&[
                1, 2, 3, 4, 5, 2, 3, 4, 6, 12, 11, 8, 9, 10, 11, 8, 7, 6, 12, 1,
            ]),
        )
        .unwrap();
        let cfg = SimConfig {
            trigger_threshold: f64::INFINITY,
            ..Default::default()
        };
        let cmp = compare_missions(&g, &route, &cfg).unwrap();
        assert_eq!(cmp.with_alc, cmp.without_alc);
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            trigger_threshold: 0.01,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(SimError::Config(_))));
        assert!(SimConfig {
            drift_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn csv_header() {
        let g = from_triples(&[(1, 2, 5.0)], 1);
        let route = Route::from_nodes(&g, ids(&[1, 2, 1])).unwrap();
        let t = run_mission(&g, &route, &SimConfig::default()).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("odometer_m,uncertainty,event\n5,0.005,move\n"));
    }
}
