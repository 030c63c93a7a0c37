//! Discrete-time physics of one house.
//!
//! Sign conventions: BESS power is negative while charging and positive while
//! discharging; EV power is never negative; grid power is positive when
//! injecting into the grid and negative on offtake.

mod bess;
mod enforce;
mod ev;
mod scenario;

pub use bess::{bess_available, bess_step, self_consumption_power, BessStep};
pub use enforce::{
    buffer_time, enforced_charge_override, enforced_min_power, Asset, BufferTimes, ChargeModel,
};
pub use ev::{ev_available_power, ev_max_power, ev_soc_step};
pub use crate::safety::GridMode;
pub use scenario::{run_scenario, ScenarioData, ScenarioOptions, ScenarioRun, SessionOutcome};

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state of charge {0} outside [0, 1]")]
    SocOutOfRange(f64),
    #[error("EV power {requested} kW exceeds the CC-CV limit {limit} kW")]
    EvPowerAboveLimit { requested: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{series} data missing from {from} to {to}")]
    DataGap {
        series: &'static str,
        from: Timestamp,
        to: Timestamp,
    },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
}

/// Static asset parameters of one house.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseConfig {
    pub house_id: u8,
    /// kWh
    pub bess_capacity: f64,
    /// kW
    pub bess_max_charge: f64,
    /// kW
    pub bess_max_discharge: f64,
    pub bess_efficiency: f64,
    /// kWp
    pub pv_peak: f64,
    /// kW
    pub grid_limit_active: f64,
    /// kVA
    pub grid_limit_apparent: f64,
    /// Upper SOC the BESS is operated to. Above it the BESS only does
    /// self-consumption and cannot charge.
    #[serde(default = "default_soc_cap")]
    pub bess_soc_cap: f64,
}

fn default_soc_cap() -> f64 {
    1.0
}

impl HouseConfig {
    /// The four houses of the reference installation. Active grid limits are
    /// the measured active-power equivalent of the breaker rating (9.2 kVA is
    /// roughly 8.7 kW).
    pub fn reference(house_id: u8) -> Self {
        let (cap, ch, dis, eta, pv, kva) = match house_id {
            1 => (5.12, 3.2, 3.2, 0.95, 3.4, 9.2),
            2 => (5.0, 2.5, 2.5, 0.95, 5.6, 17.2),
            3 => (15.3, 3.0, 4.0, 0.96, 3.0, 9.2),
            _ => (3.55, 1.7, 2.5, 0.95, 2.6, 9.2),
        };
        Self {
            house_id: house_id.clamp(1, 4),
            bess_capacity: cap,
            bess_max_charge: ch,
            bess_max_discharge: dis,
            bess_efficiency: eta,
            pv_peak: pv,
            grid_limit_active: kva * 8.7 / 9.2,
            grid_limit_apparent: kva,
            bess_soc_cap: if house_id == 4 { 0.95 } else { 1.0 },
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(format!("house {}: {m}", self.house_id)));
        if !(1..=4).contains(&self.house_id) {
            return bad("house_id must be in 1..=4");
        }
        if !(self.bess_capacity > 0.0) {
            return bad("bess_capacity must be > 0");
        }
        if !(self.bess_efficiency > 0.0 && self.bess_efficiency <= 1.0) {
            return bad("bess_efficiency must be in (0, 1]");
        }
        if !(self.bess_max_charge > 0.0 && self.bess_max_discharge > 0.0) {
            return bad("BESS power limits must be > 0");
        }
        if !(self.grid_limit_active > 0.0 && self.grid_limit_apparent > 0.0) {
            return bad("grid limits must be > 0");
        }
        if !(self.pv_peak >= 0.0) {
            return bad("pv_peak must be >= 0");
        }
        if !(self.bess_soc_cap > 0.0 && self.bess_soc_cap <= 1.0) {
            return bad("bess_soc_cap must be in (0, 1]");
        }
        Ok(())
    }
}

/// EV battery and charger parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvParams {
    /// kWh
    pub capacity: f64,
    /// kW
    pub p_max: f64,
    /// Maximum charging power at 100 % SOC, kW.
    pub p_min_at_full: f64,
    /// SOC where constant-current charging turns into constant-voltage.
    pub soc_cc_cv: f64,
    pub charge_efficiency: f64,
}

impl Default for EvParams {
    fn default() -> Self {
        Self {
            capacity: 60.0,
            p_max: 7.4,
            p_min_at_full: 1.0,
            soc_cc_cv: 0.8,
            charge_efficiency: 0.95,
        }
    }
}

impl EvParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(format!("ev: {m}")));
        if !(self.capacity > 0.0) {
            return bad("capacity must be > 0");
        }
        if !(self.soc_cc_cv > 0.0 && self.soc_cc_cv < 1.0) {
            return bad("soc_cc_cv must be in (0, 1)");
        }
        if !(self.p_min_at_full >= 0.0 && self.p_min_at_full <= self.p_max) {
            return bad("p_min_at_full must be in [0, p_max]");
        }
        if !(self.charge_efficiency > 0.0 && self.charge_efficiency <= 1.0) {
            return bad("charge_efficiency must be in (0, 1]");
        }
        Ok(())
    }
}

/// One EV charging session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub arrival: Timestamp,
    pub departure: Timestamp,
    pub soc_start: f64,
    pub soc_goal: f64,
}

impl EvSession {
    pub fn validate(&self) -> Result<(), String> {
        if self.arrival >= self.departure {
            return Err(format!("arrival {} not before departure {}", self.arrival, self.departure));
        }
        for v in [self.soc_start, self.soc_goal] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("SOC {v} outside [0, 1]"));
            }
        }
        if self.soc_goal < self.soc_start {
            return Err(format!(
                "soc_goal {} below soc_start {}",
                self.soc_goal, self.soc_start
            ));
        }
        Ok(())
    }

    pub fn duration(&self) -> TimeDelta {
        self.departure - self.arrival
    }
}

/// What the EMS asks of the BESS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BessAction {
    /// Track net household demand so that grid exchange goes to zero.
    SelfConsumption,
    /// Signed setpoint in kW, charge negative.
    Power(f64),
}

/// One EMS decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPair {
    pub bess: BessAction,
    /// kW, >= 0
    pub ev: f64,
}

impl ActionPair {
    pub fn power(bess: f64, ev: f64) -> Self {
        Self {
            bess: BessAction::Power(bess),
            ev,
        }
    }

    pub fn self_consumption(ev: f64) -> Self {
        Self {
            bess: BessAction::SelfConsumption,
            ev,
        }
    }

    /// The BESS setpoint, if numeric.
    pub fn bess_power(&self) -> Option<f64> {
        match self.bess {
            BessAction::Power(p) => Some(p),
            BessAction::SelfConsumption => None,
        }
    }
}

/// Realized quantities for one 15-minute EMS step. Powers are means over
/// the inner steps; energies and exceedance are sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub time: Timestamp,
    pub load: f64,
    pub pv: f64,
    pub ev: f64,
    pub bess: f64,
    pub grid: f64,
    /// kWh drawn from the grid.
    pub imported: f64,
    /// kWh injected into the grid.
    pub exported: f64,
    pub bess_soc: f64,
    pub ev_soc: Option<f64>,
    pub safety_activated: bool,
    pub fallback_used: bool,
    /// Largest correction applied by the safety layer in this step, kW.
    pub correction: f64,
    /// Largest excess over the grid limit in this step, kW.
    pub exceedance: f64,
    /// Energy above the grid limit, Wh.
    pub exceedance_wh: f64,
    pub clipped: bool,
    pub enforced: bool,
    /// The controller fell back to its backup policy for this step.
    #[serde(default)]
    pub ems_fallback: bool,
}

/// Grid exchange in kW; positive injects into the grid, negative is offtake.
pub fn grid_power(load: f64, ev: f64, pv: f64, bess: f64) -> f64 {
    -load - ev + pv + bess
}
