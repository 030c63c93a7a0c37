//! Experiment configuration file (TOML). Data paths are relative to the
//! file's directory.

use std::path::{Path, PathBuf};

use chrono::{FixedOffset, NaiveDate, TimeDelta};
use serde::Deserialize;
use thiserror::Error;

use super::experiment::{ExperimentOptions, HouseSetup};
use super::io::{self, IngestOptions, IoError, SeriesKind};
use crate::controllers::{MpcConfig, TreePair};
use crate::safety::{GridMode, DEFAULT_THRESHOLD};
use crate::sim::{EvParams, HouseConfig, ScenarioData, ScenarioOptions};
use crate::tariff::TariffParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] IoError),
}

/// Per-house section. Omitted asset parameters come from the reference
/// house with the same id.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseSection {
    pub id: u8,
    pub load: PathBuf,
    pub pv: PathBuf,
    pub sessions: PathBuf,
    /// Reactive load in var, only read in apparent-power mode.
    pub reactive: Option<PathBuf>,
    pub bess_capacity: Option<f64>,
    pub bess_max_charge: Option<f64>,
    pub bess_max_discharge: Option<f64>,
    pub bess_efficiency: Option<f64>,
    pub bess_soc_cap: Option<f64>,
    pub pv_peak: Option<f64>,
    pub grid_limit_active: Option<f64>,
    pub grid_limit_apparent: Option<f64>,
}

impl HouseSection {
    pub fn house_config(&self) -> HouseConfig {
        let mut h = HouseConfig::reference(self.id);
        h.house_id = self.id;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut h.bess_capacity, self.bess_capacity);
        set(&mut h.bess_max_charge, self.bess_max_charge);
        set(&mut h.bess_max_discharge, self.bess_max_discharge);
        set(&mut h.bess_efficiency, self.bess_efficiency);
        set(&mut h.bess_soc_cap, self.bess_soc_cap);
        set(&mut h.pv_peak, self.pv_peak);
        set(&mut h.grid_limit_active, self.grid_limit_active);
        set(&mut h.grid_limit_apparent, self.grid_limit_apparent);
        h
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub safety: bool,
    pub grid_mode: GridMode,
    /// W²
    pub safety_threshold: f64,
    pub inner_dt_minutes: u32,
    pub switch_hour: u32,
    pub enforce: bool,
    pub initial_bess_soc: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            safety: true,
            grid_mode: GridMode::Active,
            safety_threshold: DEFAULT_THRESHOLD,
            inner_dt_minutes: 15,
            switch_hour: 15,
            enforce: true,
            initial_bess_soc: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSection {
    pub run_mpc_p: bool,
    pub knn_k: usize,
    pub slack_penalty: f64,
    pub max_nodes: usize,
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            run_mpc_p: true,
            knn_k: 5,
            slack_penalty: 1e4,
            max_nodes: 2000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Date of the first switch.
    pub start: NaiveDate,
    /// Offset of local time, e.g. "+02:00".
    #[serde(default = "default_offset")]
    pub utc_offset: String,
    /// Whole days added to all data timestamps to align weekdays.
    #[serde(default)]
    pub weekday_shift_days: i64,
    /// Run only the first days of the schedule.
    pub days: Option<usize>,
    pub prices: PathBuf,
    /// TreeC policy in the tree text format.
    pub treec_policy: Option<PathBuf>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub tariff: TariffParams,
    #[serde(default)]
    pub ev: EvParams,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(rename = "house")]
    pub houses: Vec<HouseSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_offset() -> String {
    "+00:00".into()
}

pub fn parse_offset(s: &str) -> Option<FixedOffset> {
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let (h, m) = rest.split_once(':')?;
    let (h, m): (i32, i32) = (h.parse().ok()?, m.parse().ok()?);
    if !(0..=14).contains(&h) || !(0..60).contains(&m) {
        return None;
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if parse_offset(&self.utc_offset).is_none() {
            return bad(format!("utc_offset `{}` is not of the form +HH:MM", self.utc_offset));
        }
        let sim = &self.simulation;
        if sim.inner_dt_minutes == 0 || 15 % sim.inner_dt_minutes != 0 {
            return bad("simulation.inner_dt_minutes must divide 15".into());
        }
        if sim.switch_hour > 23 {
            return bad("simulation.switch_hour must be in 0..=23".into());
        }
        if self.houses.is_empty() {
            return bad("at least one [[house]] section is required".into());
        }
        let mut ids: Vec<u8> = self.houses.iter().map(|h| h.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("house ids must be unique".into());
        }
        for h in &self.houses {
            h.house_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.ev.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.tariff.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.mpc.knn_k == 0 {
            return bad("mpc.knn_k must be >= 1".into());
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            utc_offset: parse_offset(&self.utc_offset).expect("validated offset"),
            shift_days: self.weekday_shift_days,
        }
    }

    pub fn scenario_options(&self) -> ScenarioOptions {
        let s = &self.simulation;
        ScenarioOptions {
            safety: s.safety,
            inner_dt: TimeDelta::minutes(s.inner_dt_minutes as i64),
            grid_mode: s.grid_mode,
            safety_threshold: s.safety_threshold,
            switch_hour: s.switch_hour,
            enforce: s.enforce,
            initial_bess_soc: s.initial_bess_soc,
            tariff: self.tariff.clone(),
        }
    }

    /// Loads every house's data. Prices are shared; the weekday shift is
    /// applied to load, PV and sessions only.
    pub fn load_houses(&self) -> Result<Vec<HouseSetup>, ConfigError> {
        let opts = self.ingest_options();
        let unshifted = IngestOptions { shift_days: 0, ..opts };
        let price = io::load_timeseries(&self.resolve(&self.prices), SeriesKind::Price, &unshifted)?;
        self.houses
            .iter()
            .map(|h| {
                let reactive = match &h.reactive {
                    Some(p) => Some(io::load_timeseries(&self.resolve(p), SeriesKind::Load, &opts)?),
                    None => None,
                };
                Ok(HouseSetup {
                    config: h.house_config(),
                    data: ScenarioData {
                        load: io::load_timeseries(&self.resolve(&h.load), SeriesKind::Load, &opts)?,
                        pv: io::load_timeseries(&self.resolve(&h.pv), SeriesKind::Pv, &opts)?,
                        price: price.clone(),
                        reactive,
                        sessions: io::load_sessions(&self.resolve(&h.sessions), &opts)?,
                    },
                })
            })
            .collect()
    }

    pub fn load_policy(&self) -> Result<Option<TreePair>, ConfigError> {
        let Some(p) = &self.treec_policy else {
            return Ok(None);
        };
        let path = self.resolve(p);
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
            path: path.clone(),
            source,
        })?;
        text.parse()
            .map(Some)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn experiment_options(&self, treec: Option<TreePair>) -> ExperimentOptions {
        let mut mpc = MpcConfig {
            slack_penalty: self.mpc.slack_penalty,
            ..MpcConfig::default()
        };
        mpc.solver.max_nodes = self.mpc.max_nodes;
        ExperimentOptions {
            start: self.start,
            scenario: self.scenario_options(),
            ev: self.ev.clone(),
            mpc,
            mpc_p: self.mpc.run_mpc_p,
            seed: self.seed,
            knn_k: self.mpc.knn_k,
            treec,
        }
    }
}
