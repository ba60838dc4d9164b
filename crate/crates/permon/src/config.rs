//! Run configuration: flat `section.key = value` text with dotted keys.
//!
//! Keys mirror the field names of the core parameter structs, e.g.
//! `grid.cell_size = 0.2`, `scenario.margins.dv = 1` or
//! `sweep.magnitudes = 0.2, 0.4`. Lines starting with `#` are comments.
//! Setting `scenario.kind` first loads that archetype's defaults, so the other
//! `scenario.*` keys refine it regardless of their position.

use std::path::Path;

use permon_core::eval::{ExperimentSpec, MonitorParams};
use permon_core::grid::GridConfig;
use permon_core::inject::InjectionConfig;
use permon_core::plausibility::PlausibilityParams;
use permon_core::scenario::{LidarConfig, ScenarioConfig, ScenarioKind};
use permon_core::sensor::SensorCheckParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Grid of a metrics sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub cell_sizes: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub rates: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub window: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { cell_sizes: vec![0.5], magnitudes: vec![0.0], rates: vec![0.1], noise_sigmas: vec![0.0], window: 2 }
    }
}

/// Latency benchmark settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { repetitions: 10 }
    }
}

/// Every parameter a subcommand may read.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub lidar: LidarConfig,
    pub grid: GridConfig,
    pub sensor: SensorCheckParams,
    pub plausibility: PlausibilityParams,
    pub inject: InjectionConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn monitor(&self) -> MonitorParams {
        MonitorParams { grid: self.grid, sensor: self.sensor, plausibility: self.plausibility }
    }

    pub fn experiment(&self) -> ExperimentSpec {
        ExperimentSpec {
            scenario: self.scenario,
            lidar: self.lidar,
            monitor: self.monitor(),
            injection: self.inject,
            cell_sizes: self.sweep.cell_sizes.clone(),
            magnitudes: self.sweep.magnitudes.clone(),
            rates: self.sweep.rates.clone(),
            noise_sigmas: self.sweep.noise_sigmas.clone(),
            window: self.sweep.window,
        }
    }

    /// Sets the scenario and injection seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.scenario.seed = seed;
        self.inject.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.lidar.validate()?;
        self.monitor().validate()?;
        self.inject.validate()?;
        let s = &self.sweep;
        if [&s.cell_sizes, &s.magnitudes, &s.rates, &s.noise_sigmas].iter().any(|v| v.is_empty()) {
            return Err(Error::Config("sweep lists must not be empty".into()));
        }
        for &cell in &s.cell_sizes {
            GridConfig { cell_size: cell, ..self.grid }.validate()?;
        }
        for &m in &s.magnitudes {
            InjectionConfig { magnitude: m, ..self.inject }.validate()?;
        }
        for &r in &s.rates {
            InjectionConfig { rate: r, ..self.inject }.validate()?;
        }
        for &sigma in &s.noise_sigmas {
            InjectionConfig { noise_sigma: sigma, ..self.inject }.validate()?;
        }
        if self.bench.repetitions < 10 {
            return Err(Error::Config(format!("bench.repetitions must be at least 10, got {}", self.bench.repetitions)));
        }
        Ok(())
    }

    /// Builds a configuration from `key = value` assignments applied to the defaults.
    pub fn from_assignments(assignments: &[(String, String)]) -> Result<Self> {
        let mut base = RunConfig::default();
        if let Some((_, kind)) = assignments.iter().rev().find(|(k, _)| k == "scenario.kind") {
            let kind: ScenarioKind = serde_json::from_value(Value::String(kind.clone()))
                .map_err(|_| Error::Config(format!("scenario.kind: unknown archetype {kind:?}")))?;
            base.scenario = match kind {
                ScenarioKind::Pedestrian => ScenarioConfig::pedestrian(),
                ScenarioKind::Intersection => ScenarioConfig::intersection(),
            };
        }
        let mut tree = serde_json::to_value(&base).expect("config serializes");
        for (key, raw) in assignments {
            set_key(&mut tree, key, raw)?;
        }
        let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file, then applies `overrides` on top of it.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut assignments = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_text(&text).map_err(|(line, msg)| Error::Parse { path: p.into(), line, msg })?
            }
            None => Vec::new(),
        };
        for o in overrides {
            assignments.push(split_assignment(o).ok_or_else(|| Error::Config(format!("expected key=value, got {o:?}")))?);
        }
        Self::from_assignments(&assignments)
    }
}

fn split_assignment(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then(|| (k.to_string(), v.trim().to_string()))
}

/// Parses config text into assignments; errors carry the 1-based line.
pub fn parse_text(text: &str) -> std::result::Result<Vec<(String, String)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(split_assignment(line).ok_or((i + 1, format!("expected key = value, got {line:?}")))?);
    }
    Ok(out)
}

fn set_key(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown key {key:?}"));
    let mut node = tree;
    for part in key.split('.') {
        node = node.as_object_mut().and_then(|m| m.get_mut(part)).ok_or_else(unknown)?;
    }
    let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {raw:?}"));
    let number = |s: &str| -> Result<Value> {
        let s = s.trim();
        if let Ok(i) = s.parse::<u64>() {
            return Ok(Value::from(i));
        }
        s.parse::<f64>().ok().filter(|f| f.is_finite()).map(Value::from).ok_or_else(|| bad("a number"))
    };
    *node = match node {
        Value::Object(_) => return Err(unknown()),
        _ if raw.eq_ignore_ascii_case("none") => Value::Null,
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("true or false"))?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Array(_) => {
            let items = raw.split(',').filter(|s| !s.trim().is_empty());
            Value::Array(items.map(number).collect::<Result<_>>()?)
        }
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().map_err(|_| bad("a non-negative integer"))?),
        Value::Number(_) => number(raw)?,
        Value::Null => number(raw)?,
    };
    Ok(())
}
