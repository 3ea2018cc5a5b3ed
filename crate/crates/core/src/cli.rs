//! Command-line front end: `plan`, `replan`, `simulate`, `graph-info`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::graph::{EdgeId, GraphError, NodeId, RoadGraph};
use crate::osm::{build_road_graph, parse_osm, OsmError};
use crate::postman::{plan_global_route, PlanError, PlanReport};
use crate::replan::{replan, ReplanError, ReplanResult};
use crate::route::{Route, RouteError};
use crate::sim::{compare_missions, MissionComparison, SimError};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DISCONNECTED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_BAD_ROUTE: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Disconnected(GraphError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid traveled route: {0}")]
    BadRoute(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Replan(ReplanError),
    #[error(transparent)]
    Sim(SimError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => EXIT_INPUT,
            CliError::Disconnected(_) => EXIT_DISCONNECTED,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::BadRoute(_) => EXIT_BAD_ROUTE,
            CliError::Plan(_) | CliError::Replan(_) | CliError::Sim(_) => EXIT_FAILURE,
        }
    }
}

fn config_help() -> String {
    format!(
        "Configuration keys and defaults (use --config FILE or --set KEY=VALUE):\n\n{}",
        RunConfig::default()
    )
}

#[derive(Debug, Parser)]
#[command(
    name = "osm-alc",
    version,
    about = "Coverage route planning with active loop closure on OSM road graphs"
)]
#[command(after_long_help = config_help())]
pub struct Cli {
    /// Seed for every randomized step; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Road network: OSM XML or graph JSON.
    pub graph: PathBuf,
    /// Start node; defaults to the graph's own start (JSON) or the first node of the first road (OSM).
    #[arg(long)]
    pub start: Option<i64>,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan the global covering route and write route/report files.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Number of Eulerian-circuit attempts.
        #[arg(long)]
        attempts: Option<usize>,
    },
    /// Choose a loop-closure node and completion route for a traveled prefix.
    Replan {
        #[command(flatten)]
        common: Common,
        /// Traveled route: `[node, ...]` or `{"nodes": [...], "edges": [...]}`.
        traveled: PathBuf,
        /// Also write the result here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the mission with and without active loop closure.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Route to follow; planned from scratch when omitted.
        #[arg(long)]
        route: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print graph statistics as JSON.
    GraphInfo {
        #[command(flatten)]
        common: Common,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn graph_error(path: &Path, e: GraphError) -> CliError {
    match e {
        GraphError::Disconnected(_) => CliError::Disconnected(e),
        other => CliError::Parse {
            path: path.to_owned(),
            message: other.to_string(),
        },
    }
}

/// Loads OSM XML or graph JSON, sniffed from the first non-blank byte.
pub fn load_graph(path: &Path, start: Option<i64>, cfg: &RunConfig) -> Result<RoadGraph, CliError> {
    graph_from_text(&read(path)?, path, start, cfg)
}

/// Parses graph text already in memory; `source` only labels errors.
pub fn graph_from_text(
    text: &str,
    source: &Path,
    start: Option<i64>,
    cfg: &RunConfig,
) -> Result<RoadGraph, CliError> {
    let path = source;
    let parse_err = |message: String| CliError::Parse {
        path: path.to_owned(),
        message,
    };
    if text.trim_start().starts_with('<') {
        let raw = parse_osm(text, &cfg.osm_options()).map_err(|e| parse_err(e.to_string()))?;
        let start = match start {
            Some(s) => NodeId(s),
            None => *raw
                .ways
                .first()
                .and_then(|w| w.nodes.first())
                .ok_or_else(|| parse_err("no road ways found".into()))?,
        };
        build_road_graph(&raw, start).map_err(|e| match e {
            OsmError::Graph(g) => graph_error(path, g),
            other => parse_err(other.to_string()),
        })
    } else {
        let g = RoadGraph::from_json(text).map_err(|e| graph_error(path, e))?;
        match start {
            Some(s) if NodeId(s) != g.start_node() => {
                let mut doc = g.to_document();
                doc.start_node = NodeId(s);
                RoadGraph::from_document(doc).map_err(|e| graph_error(path, e))
            }
            _ => Ok(g),
        }
    }
}

pub fn load_config(common: &Common, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_text(&read(p)?)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RouteInput {
    Nodes(Vec<NodeId>),
    Full {
        nodes: Vec<NodeId>,
        #[serde(default)]
        edges: Option<Vec<EdgeId>>,
    },
}

/// Reads a route file; edges are resolved from nodes when absent.
pub fn load_route(path: &Path, g: &RoadGraph) -> Result<Route, CliError> {
    route_from_json(&read(path)?, path, g)
}

/// Parses a bare node array or `{nodes, edges?}`.
pub fn route_from_json(text: &str, source: &Path, g: &RoadGraph) -> Result<Route, CliError> {
    let input: RouteInput = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: source.to_owned(),
        message: e.to_string(),
    })?;
    let route = match input {
        RouteInput::Nodes(nodes) | RouteInput::Full { nodes, edges: None } => {
            Route::from_nodes(g, nodes)
        }
        RouteInput::Full {
            nodes,
            edges: Some(edges),
        } => Route::from_parts(g, nodes, edges),
    };
    route.map_err(|e: RouteError| CliError::BadRoute(e.to_string()))
}

#[derive(Debug, Serialize)]
struct RouteFile<'a> {
    nodes: &'a [NodeId],
    edges: &'a [EdgeId],
    distance: f64,
    score: f64,
}

#[derive(Debug, Serialize)]
struct ReportFile {
    max: f64,
    min: f64,
    nodes: usize,
    attempts: usize,
    solutions: usize,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn route_geojson(g: &RoadGraph, route: &Route, distance: f64, score: f64) -> serde_json::Value {
    let coords: Vec<[f64; 2]> = route
        .nodes()
        .iter()
        .map(|&n| {
            let p = g.node(n).expect("route node in graph").position;
            [p.lon, p.lat]
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": { "distance_m": distance, "score": score },
        }],
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })
}

fn cmd_plan(
    g: &RoadGraph,
    cfg: &RunConfig,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let outcome = plan_global_route(g, &cfg.plan_config())?;
    let best = &outcome.selection.best;
    let r = &outcome.report;
    create_dir(out_dir)?;
    write(
        &out_dir.join("route.json"),
        &to_json(&RouteFile {
            nodes: best.route.nodes(),
            edges: best.route.edges(),
            distance: best.distance,
            score: best.score,
        }),
    )?;
    write(
        &out_dir.join("route.geojson"),
        &to_json(&route_geojson(g, &best.route, best.distance, best.score)),
    )?;
    write(&out_dir.join("graph.json"), &g.to_json())?;
    write(
        &out_dir.join("report.json"),
        &to_json(&ReportFile {
            max: r.max,
            min: r.min,
            nodes: r.nodes,
            attempts: r.attempts,
            solutions: r.solutions,
        }),
    )?;
    let _ = writeln!(out, "{}\n{}", PlanReport::header(), r.row());
    Ok(())
}

/// Replans after `r1`, which must start at the graph's start node.
pub fn replan_from(g: &RoadGraph, r1: &Route, cfg: &RunConfig) -> Result<ReplanResult, CliError> {
    if r1.first() != g.start_node() {
        return Err(CliError::BadRoute(format!(
            "route starts at {}, not at start node {}",
            r1.first(),
            g.start_node()
        )));
    }
    replan(g, r1, &cfg.replan_config()).map_err(|e| match e {
        ReplanError::TrivialTraveled | ReplanError::NoCandidates | ReplanError::Route(_) => {
            CliError::BadRoute(e.to_string())
        }
        other => CliError::Replan(other),
    })
}

/// Runs the paired missions; without a route the planned tour is used.
pub fn simulate_pair(
    g: &RoadGraph,
    route: Option<Route>,
    cfg: &RunConfig,
) -> Result<MissionComparison, CliError> {
    let route = match route {
        Some(r) => r,
        None => {
            plan_global_route(g, &cfg.plan_config())?
                .selection
                .best
                .route
        }
    };
    compare_missions(g, &route, &cfg.sim_config(true)).map_err(|e| match e {
        SimError::Config(_) => CliError::Config(ConfigError::BadValue {
            key: "sim".into(),
            value: String::new(),
            reason: e.to_string(),
        }),
        SimError::WrongStart(_) | SimError::Incomplete { .. } | SimError::Route(_) => {
            CliError::BadRoute(e.to_string())
        }
        other => CliError::Sim(other),
    })
}

fn cmd_replan(
    g: &RoadGraph,
    cfg: &RunConfig,
    traveled: &Path,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let result = replan_from(g, &load_route(traveled, g)?, cfg)?;
    let text = to_json(&result);
    if let Some(p) = dest {
        write(p, &text)?;
    }
    let _ = out.write_all(text.as_bytes());
    Ok(())
}

fn cmd_simulate(
    g: &RoadGraph,
    cfg: &RunConfig,
    route: Option<&Path>,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let route = route.map(|p| load_route(p, g)).transpose()?;
    let cmp = simulate_pair(g, route, cfg)?;
    create_dir(out_dir)?;
    write(&out_dir.join("trace_alc.csv"), &cmp.with_alc.to_csv())?;
    write(&out_dir.join("trace_no_alc.csv"), &cmp.without_alc.to_csv())?;
    write(&out_dir.join("trace_alc.json"), &to_json(&cmp.with_alc))?;
    write(
        &out_dir.join("trace_no_alc.json"),
        &to_json(&cmp.without_alc),
    )?;
    let summary = to_json(&cmp.summary);
    write(&out_dir.join("summary.json"), &summary)?;
    let _ = out.write_all(summary.as_bytes());
    Ok(())
}

fn cmd_graph_info(g: &RoadGraph, out: &mut dyn Write) {
    let info = json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "start_node": g.start_node(),
        "total_length_m": g.total_length(),
        "odd_degree_nodes": g.odd_degree_nodes(),
    });
    let _ = out.write_all(to_json(&info).as_bytes());
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Plan { common, .. }
        | Command::Replan { common, .. }
        | Command::Simulate { common, .. }
        | Command::GraphInfo { common } => common,
    };
    let mut cfg = load_config(common, cli.seed)?;
    if let Command::Plan {
        attempts: Some(a), ..
    } = &cli.command
    {
        cfg.attempts = *a;
        cfg.validate()?;
    }
    let g = load_graph(&common.graph, common.start, &cfg)?;
    match &cli.command {
        Command::Plan { out_dir, .. } => cmd_plan(&g, &cfg, out_dir, out),
        Command::Replan {
            traveled,
            out: dest,
            ..
        } => cmd_replan(&g, &cfg, traveled, dest.as_deref(), out),
        Command::Simulate { route, out_dir, .. } => {
            cmd_simulate(&g, &cfg, route.as_deref(), out_dir, out)
        }
        Command::GraphInfo { .. } => {
            cmd_graph_info(&g, out);
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        let io = CliError::Io {
            path: "x".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(io.exit_code(), EXIT_INPUT);
        assert_eq!(
            CliError::Disconnected(GraphError::Disconnected(vec![2, 1])).exit_code(),
            EXIT_DISCONNECTED
        );
        assert_eq!(
            CliError::Config(ConfigError::UnknownKey("x".into())).exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(
            CliError::BadRoute(String::new()).exit_code(),
            EXIT_BAD_ROUTE
        );
    }

    #[test]
    fn geojson_uses_lon_lat() {
        let g = RoadGraph::from_json(
            r#"{"nodes":[{"id":1,"lat":10.0,"lon":20.0},{"id":2,"lat":10.001,"lon":20.0}],
                "edges":[{"id":0,"endpoints":[1,2],"length":111.2}],"start_node":1}"#,
        )
        .unwrap();
        let r = Route::from_nodes(&g, vec![NodeId(1), NodeId(2), NodeId(1)]).unwrap();
        let v = route_geojson(&g, &r, 222.4, 1.0);
        assert_eq!(
            v["features"][0]["geometry"]["coordinates"][0],
            json!([20.0, 10.0])
        );
    }
}
