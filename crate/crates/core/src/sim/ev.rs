use super::{EvParams, SimError};

/// CC-CV charging limit: full power up to the transition SOC, then a linear
/// taper to `p_min_at_full` at 100 %.
pub fn ev_max_power(soc: f64, ev: &EvParams) -> Result<f64, SimError> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(SimError::SocOutOfRange(soc));
    }
    if soc <= ev.soc_cc_cv {
        Ok(ev.p_max)
    } else {
        Ok(ev.p_max - (ev.p_max - ev.p_min_at_full) * (soc - ev.soc_cc_cv) / (1.0 - ev.soc_cc_cv))
    }
}

/// Advances EV SOC by charging at `p` kW for `dt` hours.
pub fn ev_soc_step(soc: f64, p: f64, dt: f64, ev: &EvParams) -> Result<f64, SimError> {
    let limit = ev_max_power(soc, ev)?;
    if p > limit + 1e-9 {
        return Err(SimError::EvPowerAboveLimit { requested: p, limit });
    }
    Ok((soc + ev.charge_efficiency * p.max(0.0) * dt / ev.capacity).clamp(0.0, 1.0))
}

/// Power the EV can absorb over the next `dt` hours: the CC-CV limit, reduced
/// so the battery does not overfill.
pub fn ev_available_power(soc: f64, dt: f64, ev: &EvParams) -> f64 {
    let soc = soc.clamp(0.0, 1.0);
    let headroom = (1.0 - soc) * ev.capacity / (ev.charge_efficiency * dt);
    ev_max_power(soc, ev).unwrap_or(0.0).min(headroom).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cc_cv_limit_examples() {
        let ev = EvParams::default();
        assert_eq!(ev_max_power(0.5, &ev).unwrap(), 7.4);
        assert!((ev_max_power(1.0, &ev).unwrap() - 1.0).abs() < 1e-12);
        assert!((ev_max_power(0.9, &ev).unwrap() - 4.2).abs() < 1e-12);
        assert!(matches!(ev_max_power(1.1, &ev), Err(SimError::SocOutOfRange(_))));
        assert!(ev_max_power(-0.1, &ev).is_err());
    }

    #[test]
    fn soc_step_examples() {
        let ev = EvParams::default();
        let s = ev_soc_step(0.5, 7.4, 0.25, &ev).unwrap();
        assert!((s - (0.5 + 0.95 * 7.4 * 0.25 / 60.0)).abs() < 1e-12);
        assert!((s - 0.529292).abs() < 1e-6);
        assert_eq!(ev_soc_step(0.7, 0.0, 0.25, &ev).unwrap(), 0.7);
        assert_eq!(ev_soc_step(0.999, 1.0, 0.25, &ev).unwrap(), 1.0);
        assert!(matches!(
            ev_soc_step(0.95, 7.4, 0.25, &ev),
            Err(SimError::EvPowerAboveLimit { .. })
        ));
    }

    #[test]
    fn available_power_respects_headroom() {
        let ev = EvParams::default();
        assert_eq!(ev_available_power(0.5, 0.25, &ev), 7.4);
        let p = ev_available_power(0.9999, 0.25, &ev);
        let s = ev_soc_step(0.9999, p, 0.25, &ev).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(ev_available_power(1.0, 0.25, &ev), 0.0);
    }

    proptest! {
        #[test]
        fn limit_monotone_and_continuous(a in 0.0f64..=1.0, b in 0.0f64..=1.0, cc in 0.05f64..0.95) {
            let ev = EvParams { soc_cc_cv: cc, ..EvParams::default() };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(ev_max_power(hi, &ev).unwrap() <= ev_max_power(lo, &ev).unwrap() + 1e-12);
            let left = ev_max_power(cc, &ev).unwrap();
            let right = ev_max_power((cc + 1e-9).min(1.0), &ev).unwrap();
            prop_assert!((left - right).abs() < 1e-6);
        }

        #[test]
        fn soc_stays_in_unit_interval(soc in 0.0f64..=1.0, frac in 0.0f64..=1.0, dt in 0.0f64..2.0) {
            let ev = EvParams::default();
            let p = frac * ev_max_power(soc, &ev).unwrap();
            let next = ev_soc_step(soc, p, dt, &ev).unwrap();
            prop_assert!((0.0..=1.0).contains(&next));
            prop_assert!(next >= soc);
        }
    }
}
