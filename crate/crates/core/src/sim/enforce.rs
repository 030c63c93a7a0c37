//! Enforced charging: guarantees SOC goals (BESS full at the switch time, EV
//! at its goal on departure) by overriding the EMS when the goal would
//! otherwise become unreachable before a buffer-adjusted deadline.

use chrono::TimeDelta;

use super::{bess_available, bess_step, ev_available_power, EvParams, HouseConfig};
use crate::time::{self, Timestamp};

const SOC_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Asset {
    Bess,
    Ev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferTimes {
    pub min: TimeDelta,
    pub max: TimeDelta,
}

impl BufferTimes {
    pub const BESS: Self = Self {
        min: TimeDelta::minutes(3),
        max: TimeDelta::hours(1),
    };
    pub const EV: Self = Self {
        min: TimeDelta::minutes(3),
        max: TimeDelta::hours(4),
    };
}

/// Safety margin before the deadline, growing linearly with the SOC deficit.
/// No deficit (or a negative one) yields `b_min`.
pub fn buffer_time(soc_goal: f64, soc: f64, b_min: TimeDelta, b_max: TimeDelta) -> TimeDelta {
    let deficit = (soc_goal - soc).clamp(0.0, 1.0);
    let span_ms = (b_max - b_min).num_milliseconds() as f64;
    b_min + TimeDelta::milliseconds((deficit * span_ms).round() as i64)
}

/// Charging dynamics of one asset; charge power is positive.
#[derive(Debug, Clone, Copy)]
pub enum ChargeModel<'a> {
    Bess(&'a HouseConfig),
    Ev(&'a EvParams),
}

impl ChargeModel<'_> {
    pub fn asset(&self) -> Asset {
        match self {
            ChargeModel::Bess(_) => Asset::Bess,
            ChargeModel::Ev(_) => Asset::Ev,
        }
    }

    pub fn buffers(&self) -> BufferTimes {
        match self {
            ChargeModel::Bess(_) => BufferTimes::BESS,
            ChargeModel::Ev(_) => BufferTimes::EV,
        }
    }

    pub fn max_charge(&self, soc: f64, dt: f64) -> f64 {
        match self {
            ChargeModel::Bess(h) => bess_available(soc, dt, h).0,
            ChargeModel::Ev(ev) => ev_available_power(soc, dt, ev),
        }
    }

    fn min_charge(&self, soc: f64, dt: f64) -> f64 {
        match self {
            ChargeModel::Bess(h) => -bess_available(soc, dt, h).1,
            ChargeModel::Ev(_) => 0.0,
        }
    }

    /// SOC after charging at `charge` kW (negative discharges a BESS).
    pub fn step(&self, soc: f64, charge: f64, dt: f64) -> f64 {
        match self {
            ChargeModel::Bess(h) => bess_step(soc, -charge, dt, h).soc,
            ChargeModel::Ev(ev) => {
                let p = charge.clamp(0.0, ev_available_power(soc, dt, ev));
                (soc + ev.charge_efficiency * p * dt / ev.capacity).clamp(0.0, 1.0)
            }
        }
    }

    fn reaches(&self, mut soc: f64, goal: f64, steps: usize, dt: f64) -> bool {
        for _ in 0..steps {
            if soc >= goal - SOC_EPS {
                return true;
            }
            soc = self.step(soc, self.max_charge(soc, dt), dt);
        }
        soc >= goal - SOC_EPS
    }
}

fn intermediate_time(model: &ChargeModel, soc: f64, goal: f64, target: Timestamp) -> Timestamp {
    let b = model.buffers();
    target - buffer_time(goal, soc, b.min, b.max)
}

/// Returns the maximum charge power when charging at maximum power from
/// `now` (in steps of `dt`) no longer reaches `soc_goal` by the target time
/// minus the buffer.
pub fn enforced_charge_override(
    model: ChargeModel,
    soc: f64,
    soc_goal: f64,
    now: Timestamp,
    target: Timestamp,
    dt: TimeDelta,
) -> Option<f64> {
    if soc >= soc_goal - SOC_EPS || target <= now {
        return None;
    }
    let inter = intermediate_time(&model, soc, soc_goal, target);
    let steps = time::steps_between(now, inter, dt);
    let dt_h = time::hours(dt);
    if model.reaches(soc, soc_goal, steps, dt_h) {
        None
    } else {
        Some(model.max_charge(soc, dt_h))
    }
}

/// Minimum charge power for the step `[now, now + dt)` that keeps `soc_goal`
/// reachable by the buffer-adjusted deadline. `None` when `proposed` already
/// does. Falls back to maximum power when the goal is out of reach.
pub fn enforced_min_power(
    model: ChargeModel,
    soc: f64,
    soc_goal: f64,
    proposed: f64,
    now: Timestamp,
    target: Timestamp,
    dt: TimeDelta,
) -> Option<f64> {
    if target <= now {
        return None;
    }
    let dt_h = time::hours(dt);
    let inter = intermediate_time(&model, soc, soc_goal, target);
    let steps_after = time::steps_between(now + dt, inter, dt);
    let ok = |p: f64| model.reaches(model.step(soc, p, dt_h), soc_goal, steps_after, dt_h);
    let lo = proposed.max(model.min_charge(soc, dt_h));
    if ok(lo) {
        return None;
    }
    let hi = model.max_charge(soc, dt_h);
    if hi <= lo || !ok(hi) {
        return Some(hi.max(lo));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if ok(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::parse_local;

    fn t(s: &str) -> Timestamp {
        parse_local(s).unwrap()
    }

    #[test]
    fn buffer_examples() {
        let (bmin, bmax) = (TimeDelta::minutes(3), TimeDelta::minutes(60));
        assert_eq!(buffer_time(1.0, 1.0, bmin, bmax), TimeDelta::minutes(3));
        assert_eq!(buffer_time(1.0, 0.0, bmin, bmax), TimeDelta::minutes(60));
        assert_eq!(buffer_time(1.0, 0.5, bmin, bmax), TimeDelta::seconds(31 * 60 + 30));
        assert_eq!(buffer_time(0.5, 0.8, bmin, bmax), bmin);
    }

    #[test]
    fn full_bess_needs_no_override() {
        let h = HouseConfig::reference(1);
        let now = t("2024-04-11T14:00");
        let r = enforced_charge_override(ChargeModel::Bess(&h), 1.0, 1.0, now, now + TimeDelta::hours(1), time::STEP);
        assert_eq!(r, None);
    }

    #[test]
    fn empty_bess_an_hour_out_is_overridden() {
        // 5.12 / (3.2 * 0.95) = 1.684 h of charging needed, deadline is now.
        let h = HouseConfig::reference(1);
        let now = t("2024-04-11T14:00");
        let r = enforced_charge_override(ChargeModel::Bess(&h), 0.0, 1.0, now, now + TimeDelta::hours(1), time::STEP);
        assert_eq!(r, Some(3.2));
    }

    #[test]
    fn ev_with_ample_time_is_left_alone() {
        let ev = EvParams::default();
        let now = t("2024-04-11T20:00");
        let r = enforced_charge_override(ChargeModel::Ev(&ev), 0.9, 0.95, now, now + TimeDelta::hours(6), time::STEP);
        assert_eq!(r, None);
        // forward-simulation oracle: 0.05 of 60 kWh at >= 4.2 kW takes < 1 h
        let mut soc = 0.9;
        let mut steps = 0;
        while soc < 0.95 {
            soc = ChargeModel::Ev(&ev).step(soc, 7.4, 0.25);
            steps += 1;
        }
        assert!(steps <= 4);
    }

    #[test]
    fn min_power_is_just_enough() {
        let h = HouseConfig::reference(1);
        let model = ChargeModel::Bess(&h);
        let now = t("2024-04-11T14:45");
        let target = t("2024-04-11T15:00");
        // half a step of charging is missing; proposal is to discharge
        let p = enforced_min_power(model, 0.95, 1.0, -1.0, now, target, time::STEP).unwrap();
        let soc = model.step(0.95, p, 0.25);
        assert!(soc >= 1.0 - 1e-9);
        assert!(p < 3.2);
        let expected = 0.05 * 5.12 / (0.95 * 0.25);
        assert!((p - expected).abs() < 1e-6);
        // full battery with a discharge proposal is held at zero
        let hold = enforced_min_power(model, 1.0, 1.0, -2.0, now, target, time::STEP).unwrap();
        assert!(hold.abs() < 1e-6);
        assert!(model.step(1.0, hold, 0.25) >= 1.0 - 1e-9);
    }

    #[test]
    fn min_power_none_when_proposal_suffices() {
        let ev = EvParams::default();
        let now = t("2024-04-11T20:00");
        let r = enforced_min_power(ChargeModel::Ev(&ev), 0.5, 0.6, 0.0, now, now + TimeDelta::hours(10), time::STEP);
        assert_eq!(r, None);
    }
}
