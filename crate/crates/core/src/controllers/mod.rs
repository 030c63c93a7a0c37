//! EMS policies.

mod mpc;
mod tree;

pub use mpc::{mpc_build, MpcConfig, MpcController, MpcInput, MpcModel};
pub use tree::{
    bess_action_map, ev_action_map, tree_action_map, tree_eval, Feature, FeatureRanges, PolicyTree,
    TreeController, TreeParseError, TreePair,
};

use chrono::TimeDelta;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::{ActionPair, EvParams, EvSession, HouseConfig, ScenarioData, StepTrace};
use crate::tariff::TariffParams;
use crate::time::Timestamp;

/// What a controller sees at the start of an EMS step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: Timestamp,
    /// kW
    pub load: f64,
    /// kW
    pub pv: f64,
    pub bess_soc: f64,
    pub ev_soc: Option<f64>,
    /// Day-ahead price, €/kWh.
    pub price: f64,
    pub hour: f64,
    /// 0 = Monday
    pub weekday: u32,
    /// Price minus the lowest price of the current experiment day.
    pub shifted_price: f64,
    pub time_to_switch: TimeDelta,
    pub session: Option<EvSession>,
    /// EV power needed this step to keep the session goal reachable, kW.
    pub ev_min_power: f64,
}

/// Read-only context shared by all decisions of one scenario.
#[derive(Debug, Clone, Copy)]
pub struct DecisionEnv<'a> {
    pub house: &'a HouseConfig,
    pub ev: &'a EvParams,
    pub data: &'a ScenarioData,
    pub tariff: &'a TariffParams,
    pub switch_hour: u32,
}

pub trait Controller: Send {
    fn name(&self) -> &str;
    fn decide(&mut self, obs: &Observation, env: &DecisionEnv) -> ActionPair;
    /// Called with the realized trace of each step.
    fn record(&mut self, _trace: &StepTrace) {}
    /// True when the last decision came from a fallback path.
    fn last_fallback(&self) -> bool {
        false
    }
}

/// Self-consumption BESS, EV at full power while connected.
pub fn rbc_step(obs: &Observation, ev: &EvParams) -> ActionPair {
    ActionPair::self_consumption(if obs.session.is_some() { ev.p_max } else { 0.0 })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rbc;

impl Controller for Rbc {
    fn name(&self) -> &str {
        "RBC"
    }

    fn decide(&mut self, obs: &Observation, env: &DecisionEnv) -> ActionPair {
        rbc_step(obs, env.ev)
    }
}

/// Uniform random setpoints over the whole action box. Stands in for an
/// untrained learning agent and is not safe on its own.
pub fn exploration_stub_step(
    obs: &Observation,
    house: &HouseConfig,
    ev: &EvParams,
    rng: &mut ChaCha8Rng,
) -> ActionPair {
    let b = rng.random_range(-house.bess_max_charge..=house.bess_max_discharge);
    let e = rng.random_range(0.0..=ev.p_max);
    ActionPair::power(b, if obs.session.is_some() { e } else { 0.0 })
}

#[derive(Debug, Clone)]
pub struct ExplorationStub {
    rng: ChaCha8Rng,
}

impl ExplorationStub {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for ExplorationStub {
    fn name(&self) -> &str {
        "RL-stub"
    }

    fn decide(&mut self, obs: &Observation, env: &DecisionEnv) -> ActionPair {
        exploration_stub_step(obs, env.house, env.ev, &mut self.rng)
    }
}

#[cfg(test)]
pub(crate) fn test_observation(time: Timestamp) -> Observation {
    Observation {
        time,
        load: 0.5,
        pv: 0.0,
        bess_soc: 0.5,
        ev_soc: None,
        price: 0.1,
        hour: crate::time::hour_of_day(time),
        weekday: crate::time::weekday_index(time),
        shifted_price: 0.0,
        time_to_switch: TimeDelta::hours(1),
        session: None,
        ev_min_power: 0.0,
    }
}
