//! C ABI over `osm_alc`.
//!
//! Graphs live behind an opaque [`AlcGraph`] handle. Structured results come
//! back as JSON strings owned by the library; release them with
//! [`alc_string_free`]. Every fallible call returns an [`AlcStatus`] and, on
//! failure, leaves a message readable through [`alc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use osm_alc::cli::{self, CliError};
use osm_alc::config::RunConfig;
use osm_alc::eog::{build_eog, update_edge_counts, EdgeCounts};
use osm_alc::postman::{plan_global_route, score_global_route};
use osm_alc::RoadGraph;
use serde_json::json;

/// Status codes; values 1 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlcStatus {
    Ok = 0,
    Failure = 1,
    InvalidInput = 2,
    Disconnected = 3,
    InvalidConfig = 4,
    InvalidRoute = 5,
    NullArgument = 6,
    Panic = 7,
}

/// Opaque road graph.
pub struct AlcGraph {
    graph: RoadGraph,
}

const SOURCE: &str = "<memory>";

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(AlcStatus, String);

impl From<CliError> for Fail {
    fn from(e: CliError) -> Self {
        let status = match e.exit_code() {
            2 => AlcStatus::InvalidInput,
            3 => AlcStatus::Disconnected,
            4 => AlcStatus::InvalidConfig,
            5 => AlcStatus::InvalidRoute,
            _ => AlcStatus::Failure,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AlcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AlcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AlcStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(AlcStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AlcStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn config(p: *const c_char) -> Result<RunConfig, Fail> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    let cfg = RunConfig::from_text(text(p, "config")?).map_err(CliError::from)?;
    cfg.validate().map_err(CliError::from)?;
    Ok(cfg)
}

unsafe fn graph<'a>(g: *const AlcGraph) -> Result<&'a RoadGraph, Fail> {
    g.as_ref()
        .map(|h| &h.graph)
        .ok_or_else(|| Fail(AlcStatus::NullArgument, "graph is null".into()))
}

unsafe fn emit(out: *mut *mut c_char, value: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(
            AlcStatus::NullArgument,
            "output pointer is null".into(),
        ));
    }
    *out = CString::new(value).expect("json has no NUL").into_raw();
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

unsafe fn load(
    input: *const c_char,
    start: *const i64,
    cfg: *const c_char,
    out: *mut *mut AlcGraph,
) -> AlcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(
                AlcStatus::NullArgument,
                "output pointer is null".into(),
            ));
        }
        *out = ptr::null_mut();
        let cfg = config(cfg)?;
        let g = cli::graph_from_text(
            text(input, "graph text")?,
            Path::new(SOURCE),
            start.as_ref().copied(),
            &cfg,
        )?;
        *out = Box::into_raw(Box::new(AlcGraph { graph: g }));
        Ok(())
    })
}

/// Parses graph JSON. `start` may be null to keep the document's start node.
///
/// # Safety
/// `json` must be a NUL-terminated string; `start` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alc_graph_from_json(
    json: *const c_char,
    start: *const i64,
    out: *mut *mut AlcGraph,
) -> AlcStatus {
    load(json, start, ptr::null(), out)
}

/// Parses OSM XML. `config` (nullable, `key = value` lines) selects the
/// highway filter; a null `start` picks the first node of the first road way.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alc_graph_from_osm(
    xml: *const c_char,
    start: *const i64,
    config: *const c_char,
    out: *mut *mut AlcGraph,
) -> AlcStatus {
    load(xml, start, config, out)
}

/// # Safety
/// `g` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn alc_graph_free(g: *mut AlcGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn alc_graph_node_count(g: *const AlcGraph) -> usize {
    g.as_ref().map_or(0, |h| h.graph.node_count())
}

/// # Safety
/// `g` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn alc_graph_edge_count(g: *const AlcGraph) -> usize {
    g.as_ref().map_or(0, |h| h.graph.edge_count())
}

/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alc_graph_to_json(g: *const AlcGraph, out: *mut *mut c_char) -> AlcStatus {
    guard(|| emit(out, graph(g)?.to_json()))
}

/// Plans a coverage tour: `{nodes, edges, distance, score, report}`.
///
/// # Safety
/// `g` must be a live handle, `config` null or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alc_plan(
    g: *const AlcGraph,
    config: *const c_char,
    out: *mut *mut c_char,
) -> AlcStatus {
    guard(|| {
        let g = graph(g)?;
        let cfg = self::config(config)?;
        let plan = plan_global_route(g, &cfg.plan_config()).map_err(CliError::from)?;
        let best = &plan.selection.best;
        let r = &plan.report;
        let doc = json!({
            "nodes": best.route.nodes(),
            "edges": best.route.edges(),
            "distance": best.distance,
            "score": best.score,
            "report": {
                "max": r.max,
                "min": r.min,
                "nodes": r.nodes,
                "attempts": r.attempts,
                "solutions": r.solutions,
                "time_s": r.time_s,
            },
        });
        emit(out, pretty(&doc))
    })
}

/// Replans after the traveled route (node array or `{nodes, edges}` JSON).
///
/// # Safety
/// `g` must be a live handle, strings NUL-terminated (`config` may be null), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alc_replan(
    g: *const AlcGraph,
    traveled: *const c_char,
    config: *const c_char,
    out: *mut *mut c_char,
) -> AlcStatus {
    guard(|| {
        let g = graph(g)?;
        let cfg = self::config(config)?;
        let r1 = cli::route_from_json(text(traveled, "traveled route")?, Path::new(SOURCE), g)?;
        emit(out, pretty(&cli::replan_from(g, &r1, &cfg)?))
    })
}

/// Simulates the route with and without active loop closure and returns the
/// paired summary. A null `route` simulates the planned tour.
///
/// # Safety
/// `g` must be a live handle, `route` and `config` null or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alc_simulate(
    g: *const AlcGraph,
    route: *const c_char,
    config: *const c_char,
    out: *mut *mut c_char,
) -> AlcStatus {
    guard(|| {
        let g = graph(g)?;
        let cfg = self::config(config)?;
        let route = if route.is_null() {
            None
        } else {
            Some(cli::route_from_json(
                text(route, "route")?,
                Path::new(SOURCE),
                g,
            )?)
        };
        emit(out, pretty(&cli::simulate_pair(g, route, &cfg)?.summary))
    })
}

/// Information gain of a driven route: D-optimality of its edge graph and
/// the distance-normalized score. Either output pointer may be null.
///
/// # Safety
/// `g` must be a live handle, `route` NUL-terminated, `config` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn alc_route_d_opt(
    g: *const AlcGraph,
    route: *const c_char,
    config: *const c_char,
    d_opt: *mut f64,
    score: *mut f64,
) -> AlcStatus {
    guard(|| {
        let g = graph(g)?;
        let cfg = self::config(config)?;
        let r = cli::route_from_json(text(route, "route")?, Path::new(SOURCE), g)?;
        let p = cfg.weights();
        let fail = |e: &dyn std::fmt::Display| Fail(AlcStatus::Failure, e.to_string());
        let eog = build_eog(g, &update_edge_counts(g, &r), &EdgeCounts::zeros(g), &p)
            .map_err(|e| fail(&e))?;
        let d = eog.d_opt().map_err(|e| fail(&e))?;
        let s = score_global_route(g, &r, &p).map_err(|e| fail(&e))?;
        if let Some(d_opt) = d_opt.as_mut() {
            *d_opt = d;
        }
        if let Some(score) = score.as_mut() {
            *score = s;
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn alc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn alc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use osm_alc::config::ConfigError;

    #[test]
    fn statuses_follow_exit_codes() {
        let e = CliError::Config(ConfigError::UnknownKey("x".into()));
        let Fail(s, msg) = e.into();
        assert_eq!(s, AlcStatus::InvalidConfig);
        assert!(msg.contains('x'));
        assert_eq!(AlcStatus::InvalidRoute as i32, cli::EXIT_BAD_ROUTE);
        assert_eq!(AlcStatus::Disconnected as i32, cli::EXIT_DISCONNECTED);
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), AlcStatus::Panic);
        let msg = unsafe { CStr::from_ptr(alc_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn errors_are_per_thread() {
        set_error("here");
        std::thread::spawn(|| assert!(alc_last_error().is_null()))
            .join()
            .unwrap();
        assert!(!alc_last_error().is_null());
    }
}
