//! Runs a house-switching schedule: one simulated day per (day, house),
//! optionally paired with a perfect-foresight MPC run on the same day.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, TimeDelta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::{adjust_sessions, Ems, Schedule, N_HOUSES};
use crate::controllers::{Controller, ExplorationStub, MpcConfig, MpcController, Rbc, TreeController, TreePair};
use crate::forecast::{HistoricalSession, KnnSessionForecaster, PerfectSeries, PerfectSession, Persistence};
use crate::sim::{run_scenario, EvParams, HouseConfig, ScenarioData, ScenarioOptions};
use crate::tariff::{net_consumption_cost, total_cost, CostBreakdown};
use crate::time::{Timestamp, STEP_HOURS};

/// Label of the perfect-foresight benchmark.
pub const MPC_P: &str = "MPC-P";

#[derive(Debug, Clone)]
pub struct HouseSetup {
    pub config: HouseConfig,
    pub data: ScenarioData,
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    /// Date of the first switch; day `d` runs from `start + d` at the switch
    /// hour to the next switch.
    pub start: NaiveDate,
    pub scenario: ScenarioOptions,
    pub ev: EvParams,
    pub mpc: MpcConfig,
    /// Also run MPC-P on every (day, house) pair.
    pub mpc_p: bool,
    pub seed: u64,
    /// Neighbours for the EV session forecast.
    pub knn_k: usize,
    pub treec: Option<TreePair>,
}

impl ExperimentOptions {
    pub fn new(start: NaiveDate) -> Self {
        Self {
            start,
            scenario: ScenarioOptions::default(),
            ev: EvParams::default(),
            mpc: MpcConfig::default(),
            mpc_p: true,
            seed: 0,
            knn_k: 5,
            treec: None,
        }
    }

    pub fn day_window(&self, day: usize) -> (Timestamp, Timestamp) {
        let from = (self.start + TimeDelta::days(day as i64))
            .and_hms_opt(self.scenario.switch_hour, 0, 0)
            .expect("valid switch hour");
        (from, from + TimeDelta::days(1))
    }
}

/// Outcome of one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub cost: CostBreakdown,
    pub net_cost: CostBreakdown,
    /// kWh
    pub imported: f64,
    /// kWh
    pub exported: f64,
    pub safety_activations: usize,
    pub exceedance_wh: f64,
    pub ems_fallbacks: usize,
    pub sessions: usize,
    pub sessions_reached: usize,
    pub final_bess_soc: f64,
    /// Highest 15-minute offtake power, kW.
    pub peak_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// Index into the schedule.
    pub day: usize,
    pub date: NaiveDate,
    pub house: u8,
    /// EMS name or [`MPC_P`].
    pub controller: String,
    pub result: Result<DayMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub seed: u64,
    pub records: Vec<DayRecord>,
}

fn mix(seed: u64, day: usize, house: u8) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((day as u64) << 8)
        .wrapping_add(house as u64)
}

fn build_controller(
    ems: Ems,
    house: &HouseSetup,
    from: Timestamp,
    opts: &ExperimentOptions,
    day: usize,
    month_peak: Option<f64>,
) -> Result<Box<dyn Controller>, String> {
    Ok(match ems {
        Ems::RlStub => Box::new(ExplorationStub::new(mix(opts.seed, day, house.config.house_id))),
        Ems::Rbc => Box::new(Rbc),
        Ems::TreeC => Box::new(TreeController::new(
            opts.treec.clone().ok_or_else(|| "no trained TreeC policy configured".to_string())?,
        )),
        Ems::Mpc => {
            let history: Vec<HistoricalSession> = house
                .data
                .sessions
                .iter()
                .filter(|s| s.departure <= from)
                .map(|s| HistoricalSession::from_session(s, &opts.ev))
                .collect();
            let mut c = MpcController::new(
                "MPC",
                opts.mpc.clone(),
                Box::new(Persistence),
                Box::new(Persistence),
                Box::new(KnnSessionForecaster::new(history, opts.knn_k, opts.ev.clone())),
            );
            if let Some(p) = month_peak {
                c.set_month_peak(from, p);
            }
            Box::new(c)
        }
    })
}

/// Controller by label (an EMS name or [`MPC_P`]) for a run starting at
/// `from`. `day` only feeds the exploration stub's seed.
pub fn controller_for(
    label: &str,
    house: &HouseSetup,
    from: Timestamp,
    opts: &ExperimentOptions,
    day: usize,
) -> Result<Box<dyn Controller>, String> {
    if label == MPC_P {
        return Ok(Box::new(perfect_mpc(opts)));
    }
    let ems: Ems = label.parse().map_err(|e: super::schedule::UnknownEms| e.to_string())?;
    build_controller(ems, house, from, opts, day, None)
}

fn perfect_mpc(opts: &ExperimentOptions) -> MpcController {
    MpcController::new(
        MPC_P,
        opts.mpc.clone(),
        Box::new(PerfectSeries),
        Box::new(PerfectSeries),
        Box::new(PerfectSession),
    )
}

/// Runs one controller over `[from, to)` starting at BESS SOC `soc`.
pub fn simulate_day(
    ctrl: &mut dyn Controller,
    house: &HouseSetup,
    from: Timestamp,
    to: Timestamp,
    soc: f64,
    opts: &ExperimentOptions,
) -> Result<DayMetrics, String> {
    let sopts = ScenarioOptions {
        initial_bess_soc: soc,
        ..opts.scenario.clone()
    };
    let run = run_scenario(&house.config, &opts.ev, ctrl, &house.data, from, to, &sopts).map_err(|e| e.to_string())?;
    let tariff = &opts.scenario.tariff;
    let cost = total_cost(&run.traces, &house.data.price, tariff).map_err(|e| e.to_string())?;
    let net_cost = net_consumption_cost(&run.traces, &house.data.price, tariff).map_err(|e| e.to_string())?;
    let completed: Vec<_> = run.sessions.iter().filter(|s| s.completed).collect();
    Ok(DayMetrics {
        cost,
        net_cost,
        imported: run.traces.iter().map(|t| t.imported).sum(),
        exported: run.traces.iter().map(|t| t.exported).sum(),
        safety_activations: run.traces.iter().filter(|t| t.safety_activated).count(),
        exceedance_wh: run.traces.iter().map(|t| t.exceedance_wh).sum(),
        ems_fallbacks: run.traces.iter().filter(|t| t.ems_fallback).count(),
        sessions: completed.len(),
        sessions_reached: completed.iter().filter(|s| s.reached).count(),
        final_bess_soc: run.final_bess_soc,
        peak_power: run.traces.iter().map(|t| t.imported / STEP_HOURS).fold(0.0, f64::max),
    })
}

fn run_house(schedule: &Schedule, h: usize, house: &HouseSetup, opts: &ExperimentOptions) -> Vec<DayRecord> {
    let mut out = Vec::new();
    let mut soc = opts.scenario.initial_bess_soc;
    // highest offtake power per month, shared by all controllers of this house
    let mut month_peak: BTreeMap<(i32, u32), f64> = BTreeMap::new();
    for (day, assignment) in schedule.days.iter().enumerate() {
        let ems = assignment[h];
        let (from, to) = opts.day_window(day);
        let date = from.date();
        let peak = month_peak.get(&(from.year(), from.month())).copied();
        let result = build_controller(ems, house, from, opts, day, peak)
            .and_then(|mut c| simulate_day(c.as_mut(), house, from, to, soc, opts));
        let mpc_p = opts.mpc_p.then(|| {
            let mut c = perfect_mpc(opts);
            if let Some(p) = peak {
                c.set_month_peak(from, p);
            }
            simulate_day(&mut c, house, from, to, soc, opts)
        });
        match &result {
            Ok(m) => {
                soc = m.final_bess_soc;
                let e = month_peak.entry((from.year(), from.month())).or_insert(0.0);
                *e = e.max(m.peak_power);
            }
            Err(_) => soc = house.config.bess_soc_cap,
        }
        out.push(DayRecord {
            day,
            date,
            house: house.config.house_id,
            controller: ems.name().to_string(),
            result,
        });
        if let Some(r) = mpc_p {
            out.push(DayRecord {
                day,
                date,
                house: house.config.house_id,
                controller: MPC_P.to_string(),
                result: r,
            });
        }
    }
    out
}

/// Simulates every scheduled (day, house) pair. Houses run in parallel; the
/// days of one house run in order so the BESS state carries over. A failing
/// day is recorded and the house continues from a full battery.
pub fn run_experiment(schedule: &Schedule, houses: &[HouseSetup], opts: &ExperimentOptions) -> ExperimentReport {
    let adjusted: Vec<HouseSetup> = houses
        .iter()
        .map(|h| {
            let mut h = h.clone();
            h.data.sessions = adjust_sessions(&h.data.sessions, opts.scenario.switch_hour).sessions;
            h
        })
        .collect();
    let per_house: Vec<Vec<DayRecord>> = adjusted
        .par_iter()
        .map(|house| {
            let h = house.config.house_id as usize - 1;
            if h >= N_HOUSES {
                return Vec::new();
            }
            run_house(schedule, h, house, opts)
        })
        .collect();
    let mut records: Vec<DayRecord> = per_house.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.day, a.house, a.controller == MPC_P).cmp(&(b.day, b.house, b.controller == MPC_P))
    });
    ExperimentReport {
        seed: schedule.seed,
        records,
    }
}
