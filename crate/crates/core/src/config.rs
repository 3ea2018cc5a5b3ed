//! Flat `key = value` run configuration.
//!
//! ```text
//! # planner
//! attempts = 500
//! convergence_window = auto   # auto | off | <n>
//! visited_info = inverse_square_length   # or a positive constant
//! trigger_threshold = inf
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::eog::{EdgeWeightParams, VisitedInfo};
use crate::guidance::GuidanceWeights;
use crate::osm::OsmOptions;
use crate::postman::{ConvergenceWindow, PlanConfig, DEFAULT_EXACT_MATCHING_LIMIT};
use crate::replan::ReplanConfig;
use crate::sim::SimConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub base_unvisited_scale: f64,
    pub visited_info: VisitedInfo,
    pub beta: f64,
    pub k_d: f64,
    pub k_alpha: f64,
    pub drift_rate: f64,
    pub loop_closure_residual: f64,
    pub trigger_threshold: f64,
    pub min_replan_spacing_m: f64,
    pub attempts: usize,
    pub seed: u64,
    pub exact_matching_limit: usize,
    pub convergence_window: ConvergenceWindow,
    pub highway_filter: Option<BTreeSet<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = EdgeWeightParams::default();
        let s = SimConfig::default();
        let p = PlanConfig::default();
        let g = GuidanceWeights::default();
        Self {
            alpha: w.alpha,
            base_unvisited_scale: w.base_unvisited_scale,
            visited_info: w.visited_info,
            beta: ReplanConfig::default().beta,
            k_d: g.k_d,
            k_alpha: g.k_alpha,
            drift_rate: s.drift_rate,
            loop_closure_residual: s.loop_closure_residual,
            trigger_threshold: s.trigger_threshold,
            min_replan_spacing_m: s.min_replan_spacing_m,
            attempts: p.attempts,
            seed: p.seed,
            exact_matching_limit: DEFAULT_EXACT_MATCHING_LIMIT,
            convergence_window: p.convergence_window,
            highway_filter: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "alpha",
    "base_unvisited_scale",
    "visited_info",
    "beta",
    "k_d",
    "k_alpha",
    "drift_rate",
    "loop_closure_residual",
    "trigger_threshold",
    "min_replan_spacing_m",
    "attempts",
    "seed",
    "exact_matching_limit",
    "convergence_window",
    "highway_filter",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| ConfigError::AtLine {
                    line: i + 1,
                    source: Box::new(e),
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "alpha" => self.alpha = parse(key, value)?,
            "base_unvisited_scale" => self.base_unvisited_scale = parse(key, value)?,
            "visited_info" => {
                self.visited_info = match value {
                    "inverse_square_length" => VisitedInfo::InverseSquareLength,
                    v => VisitedInfo::Constant(parse(key, v)?),
                }
            }
            "beta" => self.beta = parse(key, value)?,
            "k_d" => self.k_d = parse(key, value)?,
            "k_alpha" => self.k_alpha = parse(key, value)?,
            "drift_rate" => self.drift_rate = parse(key, value)?,
            "loop_closure_residual" => self.loop_closure_residual = parse(key, value)?,
            "trigger_threshold" => self.trigger_threshold = parse(key, value)?,
            "min_replan_spacing_m" => self.min_replan_spacing_m = parse(key, value)?,
            "attempts" => self.attempts = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "exact_matching_limit" => self.exact_matching_limit = parse(key, value)?,
            "convergence_window" => {
                self.convergence_window = match value {
                    "auto" => ConvergenceWindow::Auto,
                    "off" => ConvergenceWindow::Off,
                    v => ConvergenceWindow::Fixed(parse(key, v)?),
                }
            }
            "highway_filter" => {
                let set: BTreeSet<String> = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
                self.highway_filter = (!set.is_empty()).then_some(set);
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| ConfigError::BadValue {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        self.weights().validate().map_err(|e| {
            bad(
                "alpha/base_unvisited_scale/visited_info",
                String::new(),
                &e.to_string(),
            )
        })?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(bad("beta", self.beta.to_string(), "must be in (0, 1]"));
        }
        self.guidance_weights()
            .validate()
            .map_err(|e| bad("k_d/k_alpha", String::new(), &e.to_string()))?;
        self.sim_config(true).validate().map_err(|e| {
            bad(
                "drift_rate/loop_closure_residual/trigger_threshold",
                String::new(),
                &e.to_string(),
            )
        })?;
        if self.min_replan_spacing_m.is_nan() || self.min_replan_spacing_m < 0.0 {
            return Err(bad(
                "min_replan_spacing_m",
                self.min_replan_spacing_m.to_string(),
                "must be >= 0",
            ));
        }
        if self.attempts == 0 {
            return Err(bad("attempts", "0".into(), "must be at least 1"));
        }
        if self.exact_matching_limit % 2 == 1 {
            return Err(bad(
                "exact_matching_limit",
                self.exact_matching_limit.to_string(),
                "must be even",
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> EdgeWeightParams {
        EdgeWeightParams {
            alpha: self.alpha,
            base_unvisited_scale: self.base_unvisited_scale,
            visited_info: self.visited_info,
        }
    }

    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            attempts: self.attempts,
            seed: self.seed,
            exact_matching_limit: self.exact_matching_limit,
            convergence_window: self.convergence_window,
            weights: self.weights(),
        }
    }

    pub fn replan_config(&self) -> ReplanConfig {
        ReplanConfig {
            weights: self.weights(),
            beta: self.beta,
            seed: self.seed,
            exact_matching_limit: self.exact_matching_limit,
        }
    }

    pub fn sim_config(&self, alc_enabled: bool) -> SimConfig {
        SimConfig {
            drift_rate: self.drift_rate,
            loop_closure_residual: self.loop_closure_residual,
            trigger_threshold: self.trigger_threshold,
            alc_enabled,
            seed: self.seed,
            min_replan_spacing_m: self.min_replan_spacing_m,
            replan: self.replan_config(),
        }
    }

    pub fn guidance_weights(&self) -> GuidanceWeights {
        GuidanceWeights {
            k_d: self.k_d,
            k_alpha: self.k_alpha,
        }
    }

    pub fn osm_options(&self) -> OsmOptions {
        OsmOptions {
            highway_filter: self.highway_filter.clone(),
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "base_unvisited_scale = {}", self.base_unvisited_scale)?;
        match self.visited_info {
            VisitedInfo::InverseSquareLength => {
                writeln!(f, "visited_info = inverse_square_length")?
            }
            VisitedInfo::Constant(c) => writeln!(f, "visited_info = {c}")?,
        }
        writeln!(f, "beta = {}", self.beta)?;
        writeln!(f, "k_d = {}", self.k_d)?;
        writeln!(f, "k_alpha = {}", self.k_alpha)?;
        writeln!(f, "drift_rate = {}", self.drift_rate)?;
        writeln!(f, "loop_closure_residual = {}", self.loop_closure_residual)?;
        writeln!(f, "trigger_threshold = {}", self.trigger_threshold)?;
        writeln!(f, "min_replan_spacing_m = {}", self.min_replan_spacing_m)?;
        writeln!(f, "attempts = {}", self.attempts)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "exact_matching_limit = {}", self.exact_matching_limit)?;
        match self.convergence_window {
            ConvergenceWindow::Auto => writeln!(f, "convergence_window = auto")?,
            ConvergenceWindow::Off => writeln!(f, "convergence_window = off")?,
            ConvergenceWindow::Fixed(n) => writeln!(f, "convergence_window = {n}")?,
        }
        if let Some(h) = &self.highway_filter {
            let list: Vec<&str> = h.iter().map(String::as_str).collect();
            writeln!(f, "highway_filter = {}", list.join(","))?;
        }
        Ok(())
    }
}
