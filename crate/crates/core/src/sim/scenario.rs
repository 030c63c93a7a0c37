//! Closed-loop simulation of one house under one controller.

use chrono::TimeDelta;

use super::{
    bess_step, enforced_charge_override, enforced_min_power, ev_available_power, grid_power, ActionPair,
    BessAction, ChargeModel, EvParams, EvSession, HouseConfig, SimError, StepTrace,
};
use crate::controllers::{Controller, DecisionEnv, Observation};
use crate::safety::{self, GridMode, SafetyContext};
use crate::series::Series;
use crate::tariff::TariffParams;
use crate::time::{self, Timestamp, STEP};

const SOC_TOL: f64 = 1e-6;

/// Exogenous inputs on the 15-minute grid. Powers in kW, prices in €/kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub load: Series,
    pub pv: Series,
    pub price: Series,
    /// Reactive load in kvar; only read in apparent-power mode.
    pub reactive: Option<Series>,
    pub sessions: Vec<EvSession>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    pub safety: bool,
    /// Integration and safety-layer step; must divide 15 minutes.
    pub inner_dt: TimeDelta,
    pub grid_mode: GridMode,
    /// W²
    pub safety_threshold: f64,
    pub switch_hour: u32,
    pub enforce: bool,
    pub initial_bess_soc: f64,
    pub tariff: TariffParams,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            safety: true,
            inner_dt: STEP,
            grid_mode: GridMode::Active,
            safety_threshold: safety::DEFAULT_THRESHOLD,
            switch_hour: 15,
            enforce: true,
            initial_bess_soc: 1.0,
            tariff: TariffParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub session: EvSession,
    pub final_soc: f64,
    pub reached: bool,
    /// False when the window ended before departure.
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub traces: Vec<StepTrace>,
    pub sessions: Vec<SessionOutcome>,
    pub final_bess_soc: f64,
}

struct Connected {
    idx: usize,
    soc: f64,
}

fn validate(
    house: &HouseConfig,
    ev: &EvParams,
    data: &ScenarioData,
    from: Timestamp,
    to: Timestamp,
    opts: &ScenarioOptions,
) -> Result<(), SimError> {
    house.validate()?;
    ev.validate()?;
    if from >= to {
        return Err(SimError::InvalidWindow(format!("{from} is not before {to}")));
    }
    if !time::is_aligned(from, STEP) || !time::is_aligned(to, STEP) {
        return Err(SimError::InvalidWindow("window must align to 15 minutes".into()));
    }
    let inner = opts.inner_dt.num_milliseconds();
    if inner <= 0 || STEP.num_milliseconds() % inner != 0 {
        return Err(SimError::InvalidConfig("inner_dt must divide 15 minutes".into()));
    }
    if !(0.0..=1.0).contains(&opts.initial_bess_soc) {
        return Err(SimError::SocOutOfRange(opts.initial_bess_soc));
    }
    let mut series: Vec<(&'static str, &Series)> = vec![("load", &data.load), ("pv", &data.pv), ("price", &data.price)];
    if opts.grid_mode == GridMode::Apparent {
        if let Some(q) = &data.reactive {
            series.push(("reactive", q));
        }
    }
    for (name, s) in series {
        if let Some((a, b)) = s.first_gap(from, to) {
            return Err(SimError::DataGap { series: name, from: a, to: b });
        }
    }
    for s in &data.sessions {
        s.validate().map_err(SimError::InvalidConfig)?;
    }
    Ok(())
}

fn day_min_price(price: &Series, day_start: Timestamp) -> f64 {
    (0..time::STEPS_PER_DAY)
        .filter_map(|k| price.value_at(day_start + STEP * k as i32))
        .fold(f64::INFINITY, f64::min)
}

/// Simulates `[from, to)` in 15-minute EMS steps.
///
/// Each step the controller is queried once; enforced charging, the SOC cap
/// rule and the safety layer are then applied at every inner step before
/// the dynamics are integrated.
pub fn run_scenario(
    house: &HouseConfig,
    ev: &EvParams,
    controller: &mut dyn Controller,
    data: &ScenarioData,
    from: Timestamp,
    to: Timestamp,
    opts: &ScenarioOptions,
) -> Result<ScenarioRun, SimError> {
    validate(house, ev, data, from, to, opts)?;
    let env = DecisionEnv {
        house,
        ev,
        data,
        tariff: &opts.tariff,
        switch_hour: opts.switch_hour,
    };
    let fine = opts.inner_dt < STEP;
    let n_inner = (STEP.num_milliseconds() / opts.inner_dt.num_milliseconds()) as usize;
    let dt_h = time::hours(opts.inner_dt);
    let cap = house.bess_soc_cap;

    let mut sessions: Vec<usize> = (0..data.sessions.len())
        .filter(|&i| data.sessions[i].departure > from && data.sessions[i].arrival < to)
        .collect();
    sessions.sort_by_key(|&i| data.sessions[i].arrival);
    let mut pending = sessions.into_iter().peekable();
    let mut connected: Option<Connected> = None;
    let mut outcomes = Vec::new();

    let mut soc = opts.initial_bess_soc;
    let mut traces = Vec::with_capacity(time::steps_between(from, to, STEP));
    let mut day: Option<(Timestamp, f64)> = None;
    let mut t = from;

    // Disconnects a departed EV and connects the next arrival at `tau`.
    let mut update_session = |tau: Timestamp, connected: &mut Option<Connected>, outcomes: &mut Vec<SessionOutcome>| {
        if let Some(c) = connected {
            let s = &data.sessions[c.idx];
            if tau >= s.departure {
                outcomes.push(SessionOutcome {
                    session: s.clone(),
                    final_soc: c.soc,
                    reached: c.soc >= s.soc_goal - SOC_TOL,
                    completed: true,
                });
                *connected = None;
            }
        }
        if connected.is_none() {
            while let Some(&i) = pending.peek() {
                let s = &data.sessions[i];
                if s.departure <= tau {
                    pending.next();
                    continue;
                }
                if s.arrival <= tau {
                    pending.next();
                    *connected = Some(Connected { idx: i, soc: s.soc_start });
                }
                break;
            }
        }
    };

    while t < to {
        update_session(t, &mut connected, &mut outcomes);
        let load = data.load.value_at(t).expect("checked for gaps");
        let pv = data.pv.value_at(t).expect("checked for gaps");
        let price = data.price.value_at(t).expect("checked for gaps");
        let q = match (&data.reactive, opts.grid_mode) {
            (Some(s), GridMode::Apparent) => s.value_at(t).unwrap_or(0.0),
            _ => 0.0,
        };
        let day_start = time::prev_switch(t, opts.switch_hour);
        let min_price = match day {
            Some((d, m)) if d == day_start => m,
            _ => {
                let m = day_min_price(&data.price, day_start);
                day = Some((day_start, m));
                m
            }
        };
        let session = connected.as_ref().map(|c| data.sessions[c.idx].clone());
        let ev_soc = connected.as_ref().map(|c| c.soc);
        let ev_min_power = match (&session, ev_soc) {
            (Some(s), Some(es)) if opts.enforce => {
                enforced_min_power(ChargeModel::Ev(ev), es, s.soc_goal, 0.0, t, s.departure, STEP).unwrap_or(0.0)
            }
            _ => 0.0,
        };
        let obs = Observation {
            time: t,
            load,
            pv,
            bess_soc: soc,
            ev_soc,
            price,
            hour: time::hour_of_day(t),
            weekday: time::weekday_index(t),
            shifted_price: (price - min_price).max(0.0),
            time_to_switch: time::next_switch(t, opts.switch_hour) - t,
            session,
            ev_min_power,
        };
        let requested = controller.decide(&obs, &env);
        let ems_fallback = controller.last_fallback();

        let mut clipped = false;
        let mut action = requested;
        if let BessAction::Power(p) = action.bess {
            let c = p.clamp(-house.bess_max_charge, house.bess_max_discharge);
            clipped |= c != p;
            action.bess = BessAction::Power(c);
        }
        let e_clip = action.ev.clamp(0.0, ev.p_max);
        clipped |= e_clip != action.ev;
        action.ev = e_clip;

        let mut tr = StepTrace {
            time: t,
            load,
            pv,
            ev: 0.0,
            bess: 0.0,
            grid: 0.0,
            imported: 0.0,
            exported: 0.0,
            bess_soc: soc,
            ev_soc: None,
            safety_activated: false,
            fallback_used: false,
            correction: 0.0,
            exceedance: 0.0,
            exceedance_wh: 0.0,
            clipped,
            enforced: false,
            ems_fallback,
        };
        let mut tau = t;
        for _ in 0..n_inner {
            if fine {
                update_session(tau, &mut connected, &mut outcomes);
            }
            let ev_now = connected.as_ref().map(|c| c.soc);
            let mut a = ActionPair {
                bess: action.bess,
                ev: if ev_now.is_some() { action.ev } else { 0.0 },
            };
            let ctx = SafetyContext::for_step(house, ev, load, pv, q, soc, ev_now, opts.grid_mode, dt_h);

            if cap < 1.0 && soc >= cap - 1e-9 && matches!(a.bess, BessAction::Power(p) if p < 0.0) {
                a.bess = BessAction::SelfConsumption;
            }
            let (mut min_b, mut min_e) = (0.0, 0.0);
            if opts.enforce {
                let target = time::next_switch(tau, opts.switch_hour);
                let model = ChargeModel::Bess(house);
                let proposed = -ctx.resolve_bess(&a);
                let forced = fine
                    .then(|| enforced_charge_override(model, soc, cap, tau, target, opts.inner_dt))
                    .flatten()
                    .or_else(|| enforced_min_power(model, soc, cap, proposed, tau, target, opts.inner_dt));
                if let Some(p) = forced {
                    a.bess = BessAction::Power(-p);
                    min_b = p.max(0.0);
                    tr.enforced = true;
                }
                if let (Some(c), Some(es)) = (&connected, ev_now) {
                    let s = &data.sessions[c.idx];
                    let model = ChargeModel::Ev(ev);
                    let forced = fine
                        .then(|| enforced_charge_override(model, es, s.soc_goal, tau, s.departure, opts.inner_dt))
                        .flatten()
                        .or_else(|| enforced_min_power(model, es, s.soc_goal, a.ev, tau, s.departure, opts.inner_dt));
                    if let Some(p) = forced {
                        min_e = p;
                        if p > a.ev {
                            a.ev = p;
                            tr.enforced = true;
                        }
                    }
                }
            }

            // charger and BMS limits apply before the grid-limit projection
            a.ev = a.ev.min(ctx.ev_avail);
            if let BessAction::Power(p) = a.bess {
                a.bess = BessAction::Power(p.clamp(-ctx.bess_charge_avail, ctx.bess_discharge_avail));
            }
            let pb = ctx.resolve_bess(&a);
            let (b, e) = if opts.safety {
                // enforced charging is kept as a lower bound unless the grid
                // limit cannot accommodate it; the BESS minimum yields first
                let sctx = [(min_b, min_e), (0.0, min_e)]
                    .into_iter()
                    .filter(|&(mb, me)| mb > 0.0 || me > 0.0)
                    .map(|(mb, me)| SafetyContext {
                        bess_min_charge: mb,
                        ev_min: me,
                        ..ctx.clone()
                    })
                    .find(SafetyContext::is_feasible_set)
                    .unwrap_or_else(|| ctx.clone());
                let r = safety::apply(&a, &sctx, opts.safety_threshold);
                tr.safety_activated |= r.activated;
                tr.fallback_used |= r.fallback_used;
                tr.correction = tr.correction.max((pb - r.bess()).hypot(a.ev - r.ev()));
                (r.bess(), r.ev())
            } else {
                (pb, a.ev)
            };

            let bs = bess_step(soc, b, dt_h, house);
            tr.clipped |= bs.clipped;
            soc = bs.soc;
            let e_real = match connected.as_mut() {
                Some(c) => {
                    let p = e.clamp(0.0, ev_available_power(c.soc, dt_h, ev));
                    c.soc = (c.soc + ev.charge_efficiency * p * dt_h / ev.capacity).clamp(0.0, 1.0);
                    p
                }
                None => 0.0,
            };
            let grid = grid_power(load, e_real, pv, bs.realized);
            tr.imported += (-grid).max(0.0) * dt_h;
            tr.exported += grid.max(0.0) * dt_h;
            let excess = match opts.grid_mode {
                GridMode::Active => grid.abs() - house.grid_limit_active,
                GridMode::Apparent => grid.hypot(q) - house.grid_limit_apparent,
            }
            .max(0.0);
            tr.exceedance = tr.exceedance.max(excess);
            tr.exceedance_wh += excess * dt_h * 1000.0;
            tr.bess += bs.realized / n_inner as f64;
            tr.ev += e_real / n_inner as f64;
            tr.grid += grid / n_inner as f64;
            tau += opts.inner_dt;
        }
        tr.bess_soc = soc;
        tr.ev_soc = connected.as_ref().map(|c| c.soc);
        controller.record(&tr);
        traces.push(tr);
        t += STEP;
    }
    update_session(to, &mut connected, &mut outcomes);
    if let Some(c) = connected {
        let s = &data.sessions[c.idx];
        outcomes.push(SessionOutcome {
            session: s.clone(),
            final_soc: c.soc,
            reached: c.soc >= s.soc_goal - SOC_TOL,
            completed: false,
        });
    }
    Ok(ScenarioRun {
        traces,
        sessions: outcomes,
        final_bess_soc: soc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{ExplorationStub, Rbc};
    use crate::time::parse_local;

    fn t(s: &str) -> Timestamp {
        parse_local(s).unwrap()
    }

    fn flat(load: f64, pv: f64, days: usize) -> ScenarioData {
        let start = t("2024-04-01T00:00");
        let n = 96 * days;
        ScenarioData {
            load: Series::constant(start, STEP, n, load),
            pv: Series::constant(start, STEP, n, pv),
            price: Series::constant(start, TimeDelta::hours(1), 24 * days, 0.1),
            reactive: None,
            sessions: vec![],
        }
    }

    #[test]
    fn idle_house_only_recharges_before_switch() {
        let house = HouseConfig::reference(1);
        let data = flat(0.0, 0.0, 3);
        let opts = ScenarioOptions {
            initial_bess_soc: 0.6,
            ..Default::default()
        };
        let run = run_scenario(&house, &EvParams::default(), &mut Rbc, &data, t("2024-04-01T15:00"), t("2024-04-02T15:00"), &opts).unwrap();
        assert_eq!(run.traces.len(), 96);
        assert!((run.final_bess_soc - 1.0).abs() < 1e-9);
        for tr in &run.traces {
            if tr.enforced {
                assert!(tr.grid < 0.0);
            } else {
                assert_eq!(tr.grid, 0.0);
            }
        }
        let n_forced = run.traces.iter().filter(|t| t.grid < 0.0).count();
        assert!(n_forced > 0 && n_forced < 12);
    }

    #[test]
    fn rbc_charges_ev_at_cc_cv_limit() {
        let house = HouseConfig::reference(2);
        let ev = EvParams::default();
        let mut data = flat(0.5, 0.0, 2);
        data.sessions.push(EvSession {
            arrival: t("2024-04-01T18:00"),
            departure: t("2024-04-02T07:00"),
            soc_start: 0.3,
            soc_goal: 0.9,
        });
        let run = run_scenario(&house, &ev, &mut Rbc, &data, t("2024-04-01T15:00"), t("2024-04-02T15:00"), &ScenarioOptions::default()).unwrap();
        let at = |s: &str| run.traces.iter().find(|x| x.time == t(s)).unwrap();
        assert_eq!(at("2024-04-01T17:45").ev, 0.0);
        assert!((at("2024-04-01T18:00").ev - 7.4).abs() < 1e-12);
        // in the taper region power follows the SOC at the step start
        for w in run.traces.windows(2) {
            if let (Some(s0), Some(_)) = (w[0].ev_soc, w[1].ev_soc) {
                let limit = ev_available_power(s0, 0.25, &ev);
                assert!((w[1].ev - limit).abs() < 1e-9 || w[1].ev == 0.0);
            }
        }
        assert_eq!(run.sessions.len(), 1);
        assert!(run.sessions[0].reached && run.sessions[0].completed);
    }

    #[test]
    fn safety_is_transparent_for_feasible_controllers() {
        let house = HouseConfig::reference(1);
        let mut data = flat(0.8, 1.5, 2);
        data.sessions.push(EvSession {
            arrival: t("2024-04-01T19:00"),
            departure: t("2024-04-02T06:00"),
            soc_start: 0.5,
            soc_goal: 0.8,
        });
        let (from, to) = (t("2024-04-01T15:00"), t("2024-04-02T15:00"));
        let on = run_scenario(&house, &EvParams::default(), &mut Rbc, &data, from, to, &ScenarioOptions::default()).unwrap();
        let off_opts = ScenarioOptions {
            safety: false,
            ..Default::default()
        };
        let off = run_scenario(&house, &EvParams::default(), &mut Rbc, &data, from, to, &off_opts).unwrap();
        for (a, b) in on.traces.iter().zip(&off.traces) {
            assert_eq!(a, b);
        }
        assert_eq!(on, off);
    }

    #[test]
    fn data_gap_names_interval() {
        let house = HouseConfig::reference(1);
        let mut data = flat(0.5, 0.0, 2);
        data.pv.values[70] = f64::NAN;
        data.pv.values[71] = f64::NAN;
        let err = run_scenario(&house, &EvParams::default(), &mut Rbc, &data, t("2024-04-01T15:00"), t("2024-04-02T15:00"), &ScenarioOptions::default()).unwrap_err();
        assert_eq!(
            err,
            SimError::DataGap {
                series: "pv",
                from: t("2024-04-01T17:30"),
                to: t("2024-04-01T18:00")
            }
        );
    }

    #[test]
    fn fine_inner_steps_keep_goals() {
        let house = HouseConfig::reference(3);
        let mut data = flat(1.0, 0.0, 2);
        data.sessions.push(EvSession {
            arrival: t("2024-04-01T18:00"),
            departure: t("2024-04-01T22:00"),
            soc_start: 0.2,
            soc_goal: 0.6,
        });
        let opts = ScenarioOptions {
            inner_dt: TimeDelta::minutes(1),
            initial_bess_soc: 0.2,
            ..Default::default()
        };
        let mut stub = ExplorationStub::new(3);
        let run = run_scenario(&house, &EvParams::default(), &mut stub, &data, t("2024-04-01T15:00"), t("2024-04-02T15:00"), &opts).unwrap();
        assert!((run.final_bess_soc - 1.0).abs() < 1e-6);
        assert!(run.sessions[0].reached);
        assert!(run.traces.iter().all(|tr| tr.exceedance_wh == 0.0));
    }

    #[test]
    fn rejects_bad_inner_step() {
        let house = HouseConfig::reference(1);
        let data = flat(0.5, 0.0, 2);
        let opts = ScenarioOptions {
            inner_dt: TimeDelta::minutes(7),
            ..Default::default()
        };
        assert!(run_scenario(&house, &EvParams::default(), &mut Rbc, &data, t("2024-04-01T15:00"), t("2024-04-02T15:00"), &opts).is_err());
    }
}
