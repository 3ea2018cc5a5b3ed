//! OSM-guided coverage planning with active loop closure.
//!
//! The pipeline ingests an OpenStreetMap road network ([`osm`]), plans an
//! edge-covering route ranked by the D-optimality of a route-dependent
//! weighted graph Laplacian ([`postman`], [`eog`]), and replans toward the
//! best loop-closure location when simulated pose uncertainty grows too
//! large ([`replan`], [`sim`]).

pub mod cli;
pub mod config;
pub mod eog;
pub mod graph;
pub mod guidance;
pub mod osm;
pub mod postman;
pub mod replan;
pub mod route;
pub mod sim;

pub use graph::{EdgeId, GeoPoint, NodeId, RoadGraph};
pub use route::Route;
