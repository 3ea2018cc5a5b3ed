//! Waypoint choice among detected intersection exits.
//!
//! Each exit is scored by `K_d / (1 + d) + K_α / (1 + α)`, where `d` is its
//! distance to the latest OSM reference point and `α` (radians, in [0, π]) is
//! the angle at the robot between the exit and that reference point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("no intersection exits to choose from")]
    NoWaypoint,
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid guidance weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionExit {
    /// Local planar coordinates, meters.
    pub position: (f64, f64),
    pub d: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceWeights {
    pub k_d: f64,
    pub k_alpha: f64,
}

impl Default for GuidanceWeights {
    fn default() -> Self {
        Self {
            k_d: 1.0,
            k_alpha: 1.0,
        }
    }
}

impl GuidanceWeights {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if self.k_d < 0.0 || self.k_alpha < 0.0 || self.k_d + self.k_alpha <= 0.0 || self.k_d.is_nan() || self.k_alpha.is_nan() {
            return Err(GuidanceError::InvalidWeights(format!(
                "k_d={} k_alpha={}",
                self.k_d, self.k_alpha
            )));
        }
        Ok(())
    }
}

pub fn exit_score(exit: &IntersectionExit, w: &GuidanceWeights) -> f64 {
    w.k_d / (1.0 + exit.d) + w.k_alpha / (1.0 + exit.alpha)
}

/// Highest-scoring exit; ties go to smaller `d`, then smaller `alpha`, then position.
pub fn select_waypoint(
    exits: &[IntersectionExit],
    w: &GuidanceWeights,
) -> Result<IntersectionExit, GuidanceError> {
    w.validate()?;
    exits
        .iter()
        .copied()
        .min_by(|a, b| {
            exit_score(b, w)
                .total_cmp(&exit_score(a, w))
                .then(a.d.total_cmp(&b.d))
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.position.0.total_cmp(&b.position.0))
                .then(a.position.1.total_cmp(&b.position.1))
        })
        .ok_or(GuidanceError::NoWaypoint)
}

/// Distance from `exit` to `osm_ref`, and the angle at `robot` between them.
pub fn exit_geometry(
    robot: (f64, f64),
    exit: (f64, f64),
    osm_ref: (f64, f64),
) -> Result<(f64, f64), GuidanceError> {
    let to_exit = (exit.0 - robot.0, exit.1 - robot.1);
    let to_ref = (osm_ref.0 - robot.0, osm_ref.1 - robot.1);
    if to_exit == (0.0, 0.0) {
        return Err(GuidanceError::Degenerate("exit coincides with robot"));
    }
    if to_ref == (0.0, 0.0) {
        return Err(GuidanceError::Degenerate(
            "reference point coincides with robot",
        ));
    }
    let d = (exit.0 - osm_ref.0).hypot(exit.1 - osm_ref.1);
    let cross = to_exit.0 * to_ref.1 - to_exit.1 * to_ref.0;
    let dot = to_exit.0 * to_ref.0 + to_exit.1 * to_ref.1;
    Ok((d, cross.abs().atan2(dot)))
}

/// Builds exits from raw positions and picks the next waypoint.
pub fn next_waypoint(
    robot: (f64, f64),
    osm_ref: (f64, f64),
    exits: &[(f64, f64)],
    w: &GuidanceWeights,
) -> Result<IntersectionExit, GuidanceError> {
    let scored = exits
        .iter()
        .map(|&p| {
            exit_geometry(robot, p, osm_ref).map(|(d, alpha)| IntersectionExit {
                position: p,
                d,
                alpha,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    select_waypoint(&scored, w)
}
