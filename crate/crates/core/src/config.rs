//! Experiment configuration files and the built-in sweep presets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slice::{IntRange, NsprError, NsprParams, SimTime, TICKS_PER_UNIT};
use crate::p2c::P2cConfig;
use crate::sim::{AlgoSelect, SimConfig};
use crate::topology::{PsnConfig, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: at `{field}`: {message}")]
    Field {
        file: String,
        field: String,
        message: String,
    },
    #[error("arrival_rate must be finite and non-negative, got {0}")]
    Rate(f64),
    #[error("horizon must be finite and positive, got {0}")]
    Horizon(f64),
    #[error("sweep needs at least one value and one seed")]
    EmptySweep,
    #[error("sweep seed {0} is repeated")]
    RepeatedSeed(u64),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Nspr(#[from] NsprError),
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    /// Arrivals per time unit.
    ArrivalRate,
    /// Multiplier on every server's CPU and RAM.
    NodeCapacity,
    /// Multiplier on per-VNF CPU/RAM demand; latency bounds are divided
    /// by it.
    Requirements,
    /// Fixed number of VNFs per request.
    ChainLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub psn: PsnConfig,
    pub nspr: NsprParams,
    /// Mean arrivals per time unit.
    pub arrival_rate: f64,
    /// Simulated time units.
    pub horizon: f64,
    /// Seeds the trace and the heuristic's sampling.
    pub seed: u64,
    pub sim: SimConfig,
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            psn: PsnConfig::default(),
            nspr: NsprParams::default(),
            arrival_rate: 40.0,
            horizon: 200.0,
            seed: 1,
            sim: SimConfig {
                p2c: P2cConfig { seed: 1, ..P2cConfig::default() },
                ..SimConfig::default()
            },
            sweep: None,
        }
    }
}

/// Fixed-point factor with two decimals, so `1.25` becomes `125 / 100`.
fn centi(value: f64) -> u64 {
    (value * 100.0).round().max(0.0) as u64
}

impl ExperimentConfig {
    /// Small substrate where the exact solver is practical.
    pub fn desk() -> Self {
        ExperimentConfig {
            psn: PsnConfig::desk(),
            arrival_rate: 0.4,
            horizon: 300.0,
            sim: SimConfig {
                algorithm: AlgoSelect::Both,
                ..ExperimentConfig::default().sim
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn demo() -> Self {
        ExperimentConfig::default()
    }

    pub fn horizon_ticks(&self) -> SimTime {
        (self.horizon * TICKS_PER_UNIT as f64).round() as SimTime
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.psn.validate()?;
        self.nspr.validate()?;
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(ConfigError::Rate(self.arrival_rate));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) || self.horizon_ticks() == 0 {
            return Err(ConfigError::Horizon(self.horizon));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.seeds.is_empty() {
                return Err(ConfigError::EmptySweep);
            }
            let mut seen = std::collections::BTreeSet::new();
            if let Some(&dup) = s.seeds.iter().find(|&&x| !seen.insert(x)) {
                return Err(ConfigError::RepeatedSeed(dup));
            }
        }
        Ok(())
    }

    /// Sets the seed of both the trace and the heuristic.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sim.p2c.seed = seed;
    }

    /// Copy of `self` with `param` set to `value`.
    pub fn with_param(&self, param: SweepParam, value: f64) -> ExperimentConfig {
        let mut c = self.clone();
        match param {
            SweepParam::ArrivalRate => c.arrival_rate = value,
            SweepParam::NodeCapacity => c.psn.scale_capacities(centi(value), 100),
            SweepParam::Requirements => {
                let k = centi(value).max(1);
                c.nspr.cpu = c.nspr.cpu.scaled(k, 100);
                c.nspr.ram = c.nspr.ram.scaled(k, 100);
                c.nspr.vlink_latency = c.nspr.vlink_latency.scaled(100, k);
                c.nspr.e2e_latency = c.nspr.e2e_latency.scaled(100, k);
            }
            SweepParam::ChainLength => c.nspr.chain_len = IntRange::point(value.round() as u64),
        }
        c
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::Field {
                file: file.to_string(),
                field,
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Demo,
}

/// A named sweep over one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// What the sweep is meant to show.
    pub shows: &'static str,
    pub base: ExperimentConfig,
    pub sweep: SweepConfig,
}

pub const PRESET_NAMES: [&str; 4] = ["requirements", "critical-load", "node-capacity", "nspr-size"];

/// Built-in sweeps. Desk scale compares both algorithms; demo scale runs
/// the heuristic only.
pub fn preset(name: &str, scale: Scale) -> Option<Preset> {
    let mut base = match scale {
        Scale::Desk => ExperimentConfig::desk(),
        Scale::Demo => ExperimentConfig::demo(),
    };
    let (load_values, base_rate, horizon): (Vec<f64>, f64, f64) = match scale {
        Scale::Desk => (vec![0.1, 0.2, 0.4, 0.8, 1.6], 0.4, 200.0),
        Scale::Demo => (vec![10.0, 20.0, 40.0, 80.0, 160.0], 40.0, 60.0),
    };
    base.arrival_rate = base_rate;
    base.horizon = horizon;
    base.sim.record_timing = true;
    base.sim.algorithm = match scale {
        Scale::Desk => AlgoSelect::Both,
        Scale::Demo => AlgoSelect::P2c,
    };
    let seeds = vec![1, 2, 3, 4, 5];
    let (shows, param, values) = match name {
        "requirements" => (
            "acceptance and utilization as per-request resource demands grow",
            SweepParam::Requirements,
            vec![1.0, 1.5, 2.0, 3.0],
        ),
        "critical-load" => (
            "acceptance falling as offered load passes substrate capacity",
            SweepParam::ArrivalRate,
            load_values,
        ),
        "node-capacity" => (
            "acceptance rising with server CPU/RAM capacity",
            SweepParam::NodeCapacity,
            vec![0.25, 0.5, 1.0, 2.0],
        ),
        "nspr-size" => (
            "acceptance and decision time as request chains get longer",
            SweepParam::ChainLength,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        ),
        _ => return None,
    };
    let name = PRESET_NAMES.iter().copied().find(|n| *n == name)?;
    Some(Preset {
        name,
        shows,
        base,
        sweep: SweepConfig {
            param,
            values,
            seeds,
        },
    })
}
