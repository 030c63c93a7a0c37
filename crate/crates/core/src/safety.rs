//! Minimal-norm correction of EMS setpoints onto the feasible set.
//!
//! The feasible set for one instant is a box on the BESS and EV setpoints
//! intersected with the grid-limit slab `-L <= pv - load + bess - ev <= L`.
//! The BESS charge/discharge binary splits the box into two halves; each half
//! is a convex polygon and the projection onto it is found exactly by
//! checking the polygon's edges. Distances are reported in W².

use crate::sim::{
    bess_available, ev_available_power, self_consumption_power, ActionPair, BessAction, EvParams,
    HouseConfig,
};

/// Projection tolerance on constraint satisfaction, kW.
pub const FEAS_TOL: f64 = 1e-6;
/// Default fallback threshold on the projection distance, W².
pub const DEFAULT_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// |P| <= active-power limit
    #[default]
    Active,
    /// P² + Q² <= apparent-power limit², Q measured
    Apparent,
}

/// Measurements and limits for one safety-layer evaluation. Powers in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyContext {
    pub load: f64,
    pub pv: f64,
    /// Measured reactive load, kvar. Only used in apparent-power mode.
    pub reactive: f64,
    pub bess_soc: f64,
    /// Charge power the BESS can take right now (>= 0).
    pub bess_charge_avail: f64,
    /// Discharge power the BESS can deliver right now (>= 0).
    pub bess_discharge_avail: f64,
    pub ev_connected: bool,
    /// EV charging cap (CC-CV limited), kW.
    pub ev_avail: f64,
    /// Charge power the BESS has to take (enforced charging), kW.
    pub bess_min_charge: f64,
    /// EV power that has to be delivered (enforced charging), kW.
    pub ev_min: f64,
    /// Active limit in kW or apparent limit in kVA, depending on `mode`.
    pub grid_limit: f64,
    pub mode: GridMode,
}

impl SafetyContext {
    /// Context with availability per the SOC rules: no charging at a full
    /// BESS, no discharging at an empty one, EV capped by CC-CV.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        house: &HouseConfig,
        ev: &EvParams,
        load: f64,
        pv: f64,
        reactive: f64,
        bess_soc: f64,
        ev_soc: Option<f64>,
        mode: GridMode,
    ) -> Self {
        let full = bess_soc >= house.bess_soc_cap;
        let empty = bess_soc <= 0.0;
        let ev_avail = ev_soc
            .map(|s| crate::sim::ev_max_power(s.clamp(0.0, 1.0), ev).unwrap_or(0.0))
            .unwrap_or(0.0);
        Self {
            load,
            pv,
            reactive,
            bess_soc,
            bess_charge_avail: if full { 0.0 } else { house.bess_max_charge },
            bess_discharge_avail: if empty { 0.0 } else { house.bess_max_discharge },
            ev_connected: ev_soc.is_some(),
            ev_avail,
            bess_min_charge: 0.0,
            ev_min: 0.0,
            grid_limit: match mode {
                GridMode::Active => house.grid_limit_active,
                GridMode::Apparent => house.grid_limit_apparent,
            },
            mode,
        }
    }

    /// Context whose availability also accounts for the energy left over a
    /// step of `dt` hours, so that the corrected setpoints are exactly
    /// realizable by the simulator.
    #[allow(clippy::too_many_arguments)]
    pub fn for_step(
        house: &HouseConfig,
        ev: &EvParams,
        load: f64,
        pv: f64,
        reactive: f64,
        bess_soc: f64,
        ev_soc: Option<f64>,
        mode: GridMode,
        dt: f64,
    ) -> Self {
        let (ch, dis) = bess_available(bess_soc, dt, house);
        Self {
            bess_charge_avail: ch,
            bess_discharge_avail: dis,
            ev_avail: ev_soc.map(|s| ev_available_power(s, dt, ev)).unwrap_or(0.0),
            ..Self::new(house, ev, load, pv, reactive, bess_soc, ev_soc, mode)
        }
    }

    /// Largest admissible |active grid power|, or `None` when the reactive
    /// load alone breaks the apparent-power limit.
    pub fn active_limit(&self) -> Option<f64> {
        match self.mode {
            GridMode::Active => Some(self.grid_limit),
            GridMode::Apparent => {
                let rem = self.grid_limit.powi(2) - self.reactive.powi(2);
                (rem >= 0.0).then(|| rem.sqrt())
            }
        }
    }

    pub fn grid_power(&self, bess: f64, ev: f64) -> f64 {
        crate::sim::grid_power(self.load, ev, self.pv, bess)
    }

    fn ev_upper(&self) -> f64 {
        if self.ev_connected {
            self.ev_avail.max(0.0)
        } else {
            0.0
        }
    }

    /// Admissible BESS setpoints.
    pub fn bess_bounds(&self) -> (f64, f64) {
        let lo = -self.bess_charge_avail.max(0.0);
        let hi = self.bess_discharge_avail.max(0.0);
        if self.bess_min_charge > 0.0 {
            (lo, hi.min((-self.bess_min_charge).max(lo)))
        } else {
            (lo, hi)
        }
    }

    /// Admissible EV powers.
    pub fn ev_bounds(&self) -> (f64, f64) {
        let hi = self.ev_upper();
        (self.ev_min.clamp(0.0, hi), hi)
    }

    /// Numeric BESS setpoint for an action; self-consumption tracks the net
    /// demand including the EV.
    pub fn resolve_bess(&self, action: &ActionPair) -> f64 {
        match action.bess {
            BessAction::Power(p) => p,
            BessAction::SelfConsumption => {
                let (lo, hi) = self.bess_bounds();
                self_consumption_power(
                    self.load + action.ev.max(0.0) - self.pv,
                    self.bess_charge_avail,
                    self.bess_discharge_avail,
                )
                .clamp(lo, hi)
            }
        }
    }

    /// Whether any setpoint satisfies every constraint.
    pub fn is_feasible_set(&self) -> bool {
        let Some(lim) = self.active_limit() else {
            return false;
        };
        let (bl, bu) = self.bess_bounds();
        let (el, eu) = self.ev_bounds();
        // grid = pv - load + b - e ranges over an interval
        let c = self.pv - self.load;
        c + bu - el >= -lim && c + bl - eu <= lim
    }

    /// Whether `(bess, ev)` satisfies every constraint within `tol` kW.
    pub fn is_feasible(&self, bess: f64, ev: f64, tol: f64) -> bool {
        let Some(lim) = self.active_limit() else {
            return false;
        };
        let (bl, bu) = self.bess_bounds();
        let (el, eu) = self.ev_bounds();
        bess >= bl - tol
            && bess <= bu + tol
            && ev >= el - tol
            && ev <= eu + tol
            && self.grid_power(bess, ev).abs() <= lim + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyResult {
    /// Setpoints to send to the assets; the BESS entry is always numeric.
    pub safe_actions: ActionPair,
    /// Half the squared correction, W². Infinite when nothing is feasible.
    pub distance: f64,
    pub activated: bool,
    pub fallback_used: bool,
    /// False when no setpoint satisfies the constraints.
    pub feasible: bool,
}

impl SafetyResult {
    pub fn bess(&self) -> f64 {
        self.safe_actions.bess_power().unwrap_or(0.0)
    }

    pub fn ev(&self) -> f64 {
        self.safe_actions.ev
    }
}

fn w2_distance(db: f64, de: f64) -> f64 {
    0.5 * ((db * 1e3).powi(2) + (de * 1e3).powi(2))
}

/// Polygon: rectangle [b0,b1]x[e0,e1] clipped by lo <= b - e <= hi.
fn polygon(b0: f64, b1: f64, e0: f64, e1: f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut poly = vec![(b0, e0), (b1, e0), (b1, e1), (b0, e1)];
    // half-plane s*(b - e) <= r
    for (s, r) in [(1.0, hi), (-1.0, -lo)] {
        let f = |p: (f64, f64)| s * (p.0 - p.1) - r;
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let (fp, fq) = (f(p), f(q));
            if fp <= 0.0 {
                out.push(p);
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                let t = fp / (fp - fq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        poly = out;
        if poly.is_empty() {
            break;
        }
    }
    poly
}

fn nearest_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 <= 0.0 {
        return a;
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (a.0 + t * dx, a.1 + t * dy)
}

fn project_polygon(p: (f64, f64), poly: &[(f64, f64)], lo: f64, hi: f64) -> (f64, f64) {
    let (bmin, bmax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v.0), a.1.max(v.0)));
    let (emin, emax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v.1), a.1.max(v.1)));
    let d = p.0 - p.1;
    if p.0 >= bmin && p.0 <= bmax && p.1 >= emin && p.1 <= emax && d >= lo && d <= hi {
        return p;
    }
    let mut best = poly[0];
    let mut best_d = f64::INFINITY;
    for i in 0..poly.len() {
        let q = nearest_on_segment(p, poly[i], poly[(i + 1) % poly.len()]);
        let dd = (q.0 - p.0).powi(2) + (q.1 - p.1).powi(2);
        if dd < best_d {
            best_d = dd;
            best = q;
        }
    }
    best
}

/// Closest feasible `(bess, ev)` to the proposal.
pub fn correct_actions(proposed: &ActionPair, ctx: &SafetyContext) -> SafetyResult {
    let pb = ctx.resolve_bess(proposed);
    let pe = if ctx.ev_connected { proposed.ev } else { 0.0 };
    if ctx.is_feasible(pb, pe, 1e-9) {
        return SafetyResult {
            safe_actions: ActionPair::power(pb, pe),
            distance: 0.0,
            activated: false,
            fallback_used: false,
            feasible: true,
        };
    }
    let (e0, e1) = ctx.ev_bounds();
    let (bl, bu) = ctx.bess_bounds();
    let c = ctx.pv - ctx.load;
    let point = (pb, pe);

    let mut best: Option<((f64, f64), f64)> = None;
    if let Some(lim) = ctx.active_limit() {
        let (lo, hi) = (-lim - c, lim - c);
        // gamma = 1: charging half, gamma = 0: discharging half
        for (b0, b1) in [(bl, bu.min(0.0)), (bl.max(0.0), bu)] {
            if b0 > b1 {
                continue;
            }
            let poly = polygon(b0, b1, e0, e1, lo, hi);
            if poly.is_empty() {
                continue;
            }
            let q = project_polygon(point, &poly, lo, hi);
            let d = w2_distance(q.0 - point.0, q.1 - point.1);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((q, d));
            }
        }
    }
    match best {
        Some((q, d)) => SafetyResult {
            safe_actions: ActionPair::power(q.0, q.1),
            distance: d,
            activated: d > 0.0,
            fallback_used: false,
            feasible: true,
        },
        None => {
            // Nothing is feasible: push the grid power as far towards the
            // admissible band as the assets allow.
            let g_mid = ctx.grid_power(0.0, 0.0);
            let (b, e) = if g_mid < 0.0 { (bu, e0) } else { (bl, e1) };
            SafetyResult {
                safe_actions: ActionPair::power(b, e),
                distance: f64::INFINITY,
                activated: true,
                fallback_used: false,
                feasible: false,
            }
        }
    }
}

/// A-priori safe policy: self-consumption BESS and the largest EV power the
/// grid limit admits given that self-consumption response.
pub fn fallback_policy(ctx: &SafetyContext) -> ActionPair {
    if !ctx.ev_connected {
        return ActionPair::self_consumption(0.0);
    }
    let (e0, e1) = ctx.ev_bounds();
    let Some(lim) = ctx.active_limit() else {
        return ActionPair::self_consumption(e0);
    };
    let c = ctx.pv - ctx.load;
    let (bl, bu) = ctx.bess_bounds();
    // g(e) = c + clamp(e - c, bl, bu) - e is non-increasing in e.
    let e_hi = e1.min(c + bu + lim);
    let e_lo = e0.max(c + bl - lim);
    let e = if e_hi >= e_lo { e_hi } else { e_hi.clamp(e0, e1) };
    ActionPair::self_consumption(e.clamp(e0, e1))
}

/// Projects the proposal and substitutes the fallback policy when the
/// correction distance exceeds `threshold` (W²) or nothing is feasible.
pub fn apply(proposed: &ActionPair, ctx: &SafetyContext, threshold: f64) -> SafetyResult {
    let first = correct_actions(proposed, ctx);
    if first.feasible && first.distance <= threshold {
        return first;
    }
    let fb = fallback_policy(ctx);
    let fb_numeric = ActionPair::power(ctx.resolve_bess(&fb), fb.ev);
    let second = correct_actions(&fb_numeric, ctx);
    SafetyResult {
        distance: first.distance,
        activated: true,
        fallback_used: true,
        ..second
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(load: f64, pv: f64, soc: f64, ev_soc: Option<f64>, limit: f64) -> SafetyContext {
        let mut house = HouseConfig::reference(1);
        house.grid_limit_active = limit;
        SafetyContext::new(&house, &EvParams::default(), load, pv, 0.0, soc, ev_soc, GridMode::Active)
    }

    #[test]
    fn overloaded_proposal_is_projected_onto_the_grid_limit() {
        let c = ctx(2.0, 0.0, 0.5, Some(0.3), 9.2);
        let r = correct_actions(&ActionPair::power(-3.0, 7.4), &c);
        assert!((r.bess() + 1.4).abs() < 1e-9);
        assert!((r.ev() - 5.8).abs() < 1e-9);
        assert!((r.distance - 2.56e6).abs() < 1e-3);
        assert!(r.activated && r.feasible);
    }

    #[test]
    fn feasible_proposal_is_untouched() {
        let c = ctx(2.0, 1.0, 0.5, Some(0.3), 9.2);
        let p = ActionPair::power(1.0, 3.0);
        let r = correct_actions(&p, &c);
        assert_eq!(r.safe_actions, p);
        assert_eq!(r.distance, 0.0);
        assert!(!r.activated);
    }

    #[test]
    fn empty_battery_cannot_discharge() {
        let c = ctx(1.0, 0.0, 0.0, None, 9.2);
        let r = correct_actions(&ActionPair::power(2.0, 0.0), &c);
        assert!(r.bess() <= 1e-12);
        assert!((r.distance - 2e6).abs() < 1e-6);
    }

    #[test]
    fn infeasible_load_reports_infinite_distance() {
        let c = ctx(12.0, 0.0, 0.0, None, 9.2);
        let r = correct_actions(&ActionPair::power(0.0, 0.0), &c);
        assert!(!r.feasible);
        assert!(r.distance.is_infinite());
        let a = apply(&ActionPair::power(0.0, 0.0), &c, DEFAULT_THRESHOLD);
        assert!(a.fallback_used && a.activated);
    }

    #[test]
    fn fallback_examples() {
        let c = ctx(8.0, 0.0, 0.0, Some(0.2), 9.2);
        let fb = fallback_policy(&c);
        assert_eq!(fb.bess, BessAction::SelfConsumption);
        assert!((fb.ev - 1.2).abs() < 1e-9);
        let c = ctx(0.0, 0.0, 0.0, Some(0.2), 9.2);
        assert!((fallback_policy(&c).ev - 7.4).abs() < 1e-12);
        let c = ctx(3.0, 0.0, 0.5, None, 9.2);
        assert_eq!(fallback_policy(&c), ActionPair::self_consumption(0.0));
    }

    #[test]
    fn threshold_decides_between_correction_and_fallback() {
        let c = ctx(2.0, 0.0, 0.5, Some(0.3), 9.2);
        let p = ActionPair::power(-3.0, 7.4);
        // 2.56 kW² is 2.56e6 W², above the default threshold
        let r = apply(&p, &c, DEFAULT_THRESHOLD);
        assert!(r.fallback_used);
        assert!(c.is_feasible(r.bess(), r.ev(), FEAS_TOL));
        let kept = apply(&p, &c, 1e7);
        assert!(!kept.fallback_used);
        assert!((kept.ev() - 5.8).abs() < 1e-9);
        let pass = apply(&ActionPair::power(0.0, 1.0), &c, DEFAULT_THRESHOLD);
        assert!(!pass.activated);
    }

    #[test]
    fn apparent_mode_tightens_active_limit() {
        let mut house = HouseConfig::reference(1);
        house.grid_limit_apparent = 5.0;
        let c = SafetyContext::new(&house, &EvParams::default(), 4.0, 0.0, 3.0, 0.0, Some(0.2), GridMode::Apparent);
        assert!((c.active_limit().unwrap() - 4.0).abs() < 1e-12);
        let r = correct_actions(&ActionPair::power(0.0, 7.4), &c);
        assert!(r.ev().abs() < 1e-9);
        let c2 = SafetyContext { reactive: 6.0, ..c };
        assert!(!correct_actions(&ActionPair::power(0.0, 0.0), &c2).feasible);
    }

    #[test]
    fn fallback_self_consumption_never_exports_storage() {
        let c = ctx(1.0, 3.0, 0.6, Some(0.5), 9.2);
        let fb = fallback_policy(&c);
        let b = c.resolve_bess(&fb);
        // discharge only serves the house and the EV, never the grid
        let surplus = (c.pv - c.load - fb.ev).max(0.0);
        assert!(c.grid_power(b, fb.ev) <= surplus + 1e-12);
        let idle = ctx(1.0, 3.0, 0.6, None, 9.2);
        let b = idle.resolve_bess(&fallback_policy(&idle));
        assert!(b <= 0.0);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_feasible(
            load in 0.0f64..12.0, pv in 0.0f64..6.0, soc in 0.0f64..=1.0,
            ev_soc in proptest::option::of(0.0f64..=1.0),
            b in -6.0f64..6.0, e in -2.0f64..10.0, limit in 2.0f64..12.0,
        ) {
            let c = ctx(load, pv, soc, ev_soc, limit);
            let r = apply(&ActionPair::power(b, e), &c, DEFAULT_THRESHOLD);
            if r.feasible {
                prop_assert!(c.is_feasible(r.bess(), r.ev(), FEAS_TOL));
                let again = apply(&r.safe_actions, &c, DEFAULT_THRESHOLD);
                prop_assert!((again.bess() - r.bess()).abs() < 1e-9);
                prop_assert!((again.ev() - r.ev()).abs() < 1e-9);
                prop_assert!(!again.activated);
            }
        }

        #[test]
        fn distance_non_increasing_in_grid_limit(
            load in 0.0f64..12.0, pv in 0.0f64..6.0, soc in 0.0f64..=1.0,
            b in -6.0f64..6.0, e in 0.0f64..10.0, limit in 2.0f64..12.0, extra in 0.0f64..5.0,
        ) {
            let d1 = correct_actions(&ActionPair::power(b, e), &ctx(load, pv, soc, Some(0.4), limit)).distance;
            let d2 = correct_actions(&ActionPair::power(b, e), &ctx(load, pv, soc, Some(0.4), limit + extra)).distance;
            prop_assert!(d2 <= d1 + 1e-6);
        }

        #[test]
        fn committed_minimums_hold_when_feasible(
            load in 0.0f64..12.0, pv in 0.0f64..6.0, soc in 0.0f64..=1.0,
            b in -6.0f64..6.0, e in 0.0f64..10.0, limit in 2.0f64..12.0,
            min_b in 0.0f64..4.0, min_e in 0.0f64..8.0,
        ) {
            let mut c = ctx(load, pv, soc, Some(0.3), limit);
            c.bess_min_charge = min_b;
            c.ev_min = min_e;
            let (bl, bu) = c.bess_bounds();
            let (el, eu) = c.ev_bounds();
            prop_assert!(bl <= bu + 1e-12 && el <= eu + 1e-12);
            let r = correct_actions(&ActionPair::power(b, e), &c);
            prop_assert_eq!(r.feasible, c.is_feasible_set());
            if r.feasible {
                prop_assert!(r.bess() <= bu + 1e-9 && r.bess() >= bl - 1e-9);
                prop_assert!(r.ev() >= el - 1e-9 && r.ev() <= eu + 1e-9);
            }
        }
    }
}
