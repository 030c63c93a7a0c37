//! Receding-horizon MILP controller.
//!
//! Each step plans from now to the next switch time on the 15-minute grid
//! and applies the first setpoints. Grid injection is eliminated from the
//! model: `ei = eo + dt·(pv − load − ev + dis − ch)` with `ei >= 0` kept as
//! a row.

use chrono::Datelike;

use super::{rbc_step, Controller, DecisionEnv, Observation};
use crate::forecast::{SeriesForecaster, SessionForecast, SessionForecaster};
use crate::mathprog::{solve_milp_with, Cmp, LinearProgram, SolverOptions, VarId};
use crate::sim::{ev_available_power, ActionPair, EvParams, HouseConfig, StepTrace};
use crate::tariff::{spot_prices, TariffParams};
use crate::time::{self, Timestamp, STEP, STEP_HOURS};

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Active grid limit used in the model, kW. `None` takes the house's.
    pub grid_limit: Option<f64>,
    /// €/kWh for missing the terminal SOC targets.
    pub slack_penalty: f64,
    pub solver: SolverOptions,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            grid_limit: None,
            slack_penalty: 1e4,
            solver: SolverOptions::default(),
        }
    }
}

/// Everything one MPC solve depends on. Series slices have the horizon's
/// length; powers in kW, prices in €/kWh.
#[derive(Debug, Clone)]
pub struct MpcInput<'a> {
    pub time: Timestamp,
    pub bess_soc: f64,
    /// Current EV SOC and the forecast of the connected session.
    pub ev: Option<(f64, SessionForecast)>,
    /// Lower bound on the first-step EV power, kW.
    pub ev_floor: f64,
    pub load: &'a [f64],
    pub pv: &'a [f64],
    pub vd: &'a [f64],
    /// Highest 15-minute offtake power of the month so far, kW.
    pub prev_peak: f64,
    pub switch_hour: u32,
}

/// The program plus handles to the first-step decision variables.
#[derive(Debug, Clone)]
pub struct MpcModel {
    pub lp: LinearProgram,
    pub horizon: usize,
    pub ch: Vec<VarId>,
    pub dis: Vec<VarId>,
    /// Charge/discharge mode binaries; `None` where they are redundant.
    pub gamma: Vec<Option<VarId>>,
    pub ev: Vec<VarId>,
    pub eo: Vec<VarId>,
    pub soc: Vec<VarId>,
    pub ev_soc: Vec<VarId>,
    pub peak: VarId,
    pub bess_slack: VarId,
    pub ev_slack: Option<VarId>,
}

impl MpcModel {
    /// BESS setpoint (discharge positive) and EV power for step 0.
    pub fn first_action(&self, values: &[f64]) -> ActionPair {
        let clean = |x: f64| if x.abs() < 1e-9 { 0.0 } else { x };
        let b = clean(values[self.dis[0].0] - values[self.ch[0].0]);
        let e = self.ev.first().map_or(0.0, |v| clean(values[v.0]).max(0.0));
        ActionPair::power(b, e)
    }
}

pub fn mpc_build(
    input: &MpcInput,
    house: &HouseConfig,
    evp: &EvParams,
    tariff: &TariffParams,
    cfg: &MpcConfig,
) -> MpcModel {
    let h = input.load.len().min(input.pv.len()).min(input.vd.len());
    let dt = STEP_HOURS;
    let lim = cfg.grid_limit.unwrap_or(house.grid_limit_active);
    let cap = house.bess_soc_cap;
    let e_b = house.bess_capacity;
    let eta = house.bess_efficiency;
    let mut lp = LinearProgram::new();

    let peak = lp.add_var("peak", input.prev_peak.max(tariff.peak_floor), f64::INFINITY, tariff.peak_price);
    let bess_slack = lp.add_var("bess_slack", 0.0, f64::INFINITY, cfg.slack_penalty * e_b);

    // EV horizon: steps until the forecast departure, within the plan.
    let (ev_steps, ev_state) = match input.ev {
        Some((soc, fc)) => {
            let dep = fc.departure.min(time::next_switch(input.time, input.switch_hour));
            let mut d = if dep > input.time { time::steps_between(input.time, dep, STEP) } else { 0 };
            if input.ev_floor > 0.0 {
                d = d.max(1);
            }
            (d.min(h), Some((soc, fc.soc_final)))
        }
        None => (0, None),
    };
    let ev_slack = ev_state
        .filter(|&(soc, goal)| goal > soc && ev_steps > 0)
        .map(|_| lp.add_var("ev_slack", 0.0, f64::INFINITY, cfg.slack_penalty * evp.capacity));

    let mut m = MpcModel {
        lp: LinearProgram::new(),
        horizon: h,
        ch: Vec::with_capacity(h),
        dis: Vec::with_capacity(h),
        gamma: Vec::with_capacity(h),
        ev: Vec::with_capacity(ev_steps),
        eo: Vec::with_capacity(h),
        soc: Vec::with_capacity(h),
        ev_soc: Vec::with_capacity(ev_steps),
        peak,
        bess_slack,
        ev_slack,
    };

    let kappa = (evp.p_max - evp.p_min_at_full) / (1.0 - evp.soc_cc_cv);
    let c_ev = evp.charge_efficiency * dt / evp.capacity;
    for k in 0..h {
        let (vo, vi) = spot_prices(input.vd[k], tariff);
        let net = input.pv[k] - input.load[k];
        lp.obj_offset -= vi * dt * net;

        let export_lim = lim.max(net);
        let exp_row = net + house.bess_max_discharge > export_lim;
        let ch = lp.add_var(format!("ch{k}"), 0.0, house.bess_max_charge, vi * dt);
        let dis = lp.add_var(format!("dis{k}"), 0.0, house.bess_max_discharge, -vi * dt);
        let eo = lp.add_var(format!("eo{k}"), 0.0, lim.max(-net) * dt, vo + tariff.offtake_extras - vi);
        let sb = lp.add_var(format!("sb{}", k + 1), 0.0, cap, 0.0);

        // Simultaneous charge and discharge only burns energy. With a
        // non-negative injection price and no export limit in reach, any such
        // dispatch has a one-directional one with the same SOC path and no
        // higher cost, so the mode binary is only needed otherwise.
        let g = (vi < 0.0 || exp_row).then(|| {
            let g = lp.add_binary(format!("g{k}"), 0.0);
            lp.add_constraint(format!("gch{k}"), vec![(ch, 1.0), (g, -house.bess_max_charge)], Cmp::Le, 0.0);
            lp.add_constraint(
                format!("gdis{k}"),
                vec![(dis, 1.0), (g, house.bess_max_discharge)],
                Cmp::Le,
                house.bess_max_discharge,
            );
            g
        });
        let mut soc_row = vec![(sb, 1.0), (ch, -eta * dt / e_b), (dis, dt / (eta * e_b))];
        let soc_rhs = if k == 0 {
            input.bess_soc
        } else {
            soc_row.push((m.soc[k - 1], -1.0));
            0.0
        };
        lp.add_constraint(format!("soc{k}"), soc_row, Cmp::Eq, soc_rhs);
        lp.add_constraint(format!("pk{k}"), vec![(eo, 1.0 / dt), (peak, -1.0)], Cmp::Le, 0.0);

        let mut inj = vec![(eo, 1.0), (dis, dt), (ch, -dt)];
        if k < ev_steps {
            let (soc0, _) = ev_state.expect("ev horizon implies a session");
            let lo = if k == 0 {
                input.ev_floor.min(ev_available_power(soc0, dt, evp)).max(0.0)
            } else {
                0.0
            };
            let v = lp.add_var(format!("ev{k}"), lo, evp.p_max, vi * dt);
            let se = lp.add_var(format!("se{}", k + 1), 0.0, 1.0, 0.0);
            let mut row = vec![(se, 1.0), (v, -c_ev)];
            let rhs = if k == 0 {
                soc0
            } else {
                row.push((m.ev_soc[k - 1], -1.0));
                0.0
            };
            lp.add_constraint(format!("evsoc{k}"), row, Cmp::Eq, rhs);
            // skip the taper row where the SOC cannot reach the CV region
            if soc0 + c_ev * evp.p_max * (k + 1) as f64 > evp.soc_cc_cv {
                lp.add_constraint(
                    format!("evcap{k}"),
                    vec![(v, 1.0), (se, kappa)],
                    Cmp::Le,
                    evp.p_max + kappa * evp.soc_cc_cv,
                );
            }
            inj.push((v, -dt));
            m.ev.push(v);
            m.ev_soc.push(se);
        }
        lp.add_constraint(format!("inj{k}"), inj.clone(), Cmp::Ge, -dt * net);
        if exp_row {
            lp.add_constraint(format!("exp{k}"), inj, Cmp::Le, dt * (export_lim - net));
        }
        m.ch.push(ch);
        m.dis.push(dis);
        m.gamma.push(g);
        m.eo.push(eo);
        m.soc.push(sb);
    }
    if h > 0 {
        lp.add_constraint("terminal_bess", vec![(m.soc[h - 1], 1.0), (bess_slack, 1.0)], Cmp::Ge, cap);
    }
    if let (Some(sl), Some((_, goal))) = (ev_slack, ev_state) {
        lp.add_constraint(
            "terminal_ev",
            vec![(m.ev_soc[ev_steps - 1], 1.0), (sl, 1.0)],
            Cmp::Ge,
            goal.min(1.0),
        );
    }
    m.lp = lp;
    m
}

/// MPC with pluggable forecasters; perfect forecasters give the benchmark.
pub struct MpcController {
    pub cfg: MpcConfig,
    name: String,
    load_fc: Box<dyn SeriesForecaster>,
    pv_fc: Box<dyn SeriesForecaster>,
    session_fc: Box<dyn SessionForecaster>,
    prev_peak: Option<f64>,
    month: Option<(i32, u32)>,
    fallback: bool,
    pub solves: usize,
    pub fallbacks: usize,
}

impl MpcController {
    pub fn new(
        name: impl Into<String>,
        cfg: MpcConfig,
        load_fc: Box<dyn SeriesForecaster>,
        pv_fc: Box<dyn SeriesForecaster>,
        session_fc: Box<dyn SessionForecaster>,
    ) -> Self {
        Self {
            cfg,
            name: name.into(),
            load_fc,
            pv_fc,
            session_fc,
            prev_peak: None,
            month: None,
            fallback: false,
            solves: 0,
            fallbacks: 0,
        }
    }

    /// Highest realized 15-minute offtake power of the current month, kW.
    pub fn prev_peak(&self) -> Option<f64> {
        self.prev_peak
    }

    /// Starts the month of `t` with an already realized peak, e.g. from days
    /// run by other controllers.
    pub fn set_month_peak(&mut self, t: Timestamp, peak: f64) {
        self.month = Some((t.year(), t.month()));
        self.prev_peak = Some(peak);
    }

    fn roll_month(&mut self, t: Timestamp) {
        let m = (t.year(), t.month());
        if self.month != Some(m) {
            self.month = Some(m);
            self.prev_peak = None;
        }
    }

    fn plan(&mut self, obs: &Observation, env: &DecisionEnv) -> Option<ActionPair> {
        let h = time::steps_between(obs.time, time::next_switch(obs.time, env.switch_hour), STEP);
        if h == 0 {
            return None;
        }
        let load = self.load_fc.forecast(&env.data.load, obs.time, h).ok()?;
        let pv = self.pv_fc.forecast(&env.data.pv, obs.time, h).ok()?;
        let vd = env.data.price.window(obs.time, h)?;
        let ev = match (&obs.session, obs.ev_soc) {
            (Some(s), Some(soc)) => Some((soc, self.session_fc.forecast(s, obs.time).ok()?)),
            _ => None,
        };
        let input = MpcInput {
            time: obs.time,
            bess_soc: obs.bess_soc,
            ev,
            ev_floor: obs.ev_min_power,
            load: &load.values,
            pv: &pv.values,
            vd: &vd,
            prev_peak: self.prev_peak.unwrap_or(env.tariff.peak_floor),
            switch_hour: env.switch_hour,
        };
        let model = mpc_build(&input, env.house, env.ev, env.tariff, &self.cfg);
        self.solves += 1;
        let sol = solve_milp_with(&model.lp, &self.cfg.solver);
        sol.has_solution().then(|| model.first_action(&sol.values))
    }
}

impl Controller for MpcController {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, obs: &Observation, env: &DecisionEnv) -> ActionPair {
        self.roll_month(obs.time);
        match self.plan(obs, env) {
            Some(a) => {
                self.fallback = false;
                a
            }
            None => {
                self.fallback = true;
                self.fallbacks += 1;
                rbc_step(obs, env.ev)
            }
        }
    }

    fn record(&mut self, trace: &StepTrace) {
        self.roll_month(trace.time);
        let p = trace.imported / STEP_HOURS;
        self.prev_peak = Some(self.prev_peak.map_or(p, |q| q.max(p)));
    }

    fn last_fallback(&self) -> bool {
        self.fallback
    }
}
