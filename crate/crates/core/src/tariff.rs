//! Four-part electricity cost: day-ahead energy, offtake extras, monthly
//! peak and a fixed yearly fee.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::Series;
use crate::sim::StepTrace;
use crate::time::{self, Timestamp, STEPS_PER_DAY, STEP_HOURS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TariffError {
    #[error("no day-ahead price for {0}")]
    MissingPrice(Timestamp),
    #[error("invalid tariff parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TariffParams {
    /// Added to the day-ahead price for offtake, €/kWh.
    pub offtake_adder: f64,
    /// Subtracted from the day-ahead price for injection, €/kWh.
    pub injection_subtractor: f64,
    pub vat: f64,
    /// €/kWh on offtake
    pub offtake_extras: f64,
    /// €/kW per month
    pub peak_price: f64,
    /// kW
    pub peak_floor: f64,
    /// €/year
    pub yearly: f64,
}

impl Default for TariffParams {
    fn default() -> Self {
        Self {
            offtake_adder: 0.011,
            injection_subtractor: 0.009,
            vat: 1.06,
            offtake_extras: 0.114,
            peak_price: 3.5,
            peak_floor: 2.5,
            yearly: 115.84,
        }
    }
}

impl TariffParams {
    pub fn validate(&self) -> Result<(), TariffError> {
        let vals = [
            self.offtake_adder,
            self.injection_subtractor,
            self.vat,
            self.offtake_extras,
            self.peak_price,
            self.peak_floor,
            self.yearly,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(TariffError::InvalidParams("prices must be finite".into()));
        }
        if self.vat < 1.0 {
            return Err(TariffError::InvalidParams("vat must be >= 1".into()));
        }
        if self.offtake_extras < 0.0 || self.peak_price < 0.0 || self.yearly < 0.0 {
            return Err(TariffError::InvalidParams("surcharges and fees must be >= 0".into()));
        }
        if self.peak_floor <= 0.0 {
            return Err(TariffError::InvalidParams("peak_floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub day_ahead: f64,
    pub offtake_extras: f64,
    pub peak: f64,
    pub yearly: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(day_ahead: f64, offtake_extras: f64, peak: f64, yearly: f64) -> Self {
        Self {
            day_ahead,
            offtake_extras,
            peak,
            yearly,
            total: day_ahead + offtake_extras + peak + yearly,
        }
    }

    /// Component-wise sum; the total is recomputed from the parts.
    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.day_ahead + other.day_ahead,
            self.offtake_extras + other.offtake_extras,
            self.peak + other.peak,
            self.yearly + other.yearly,
        )
    }
}

/// Anything with a timestamp and 15-minute offtake/injection energies.
pub trait Metered {
    fn time(&self) -> Timestamp;
    /// kWh
    fn offtake(&self) -> f64;
    /// kWh
    fn injection(&self) -> f64;
}

impl Metered for StepTrace {
    fn time(&self) -> Timestamp {
        self.time
    }
    fn offtake(&self) -> f64 {
        self.imported
    }
    fn injection(&self) -> f64 {
        self.exported
    }
}

impl Metered for (Timestamp, f64, f64) {
    fn time(&self) -> Timestamp {
        self.0
    }
    fn offtake(&self) -> f64 {
        self.1
    }
    fn injection(&self) -> f64 {
        self.2
    }
}

/// Offtake and injection prices for a day-ahead price `vd` (€/kWh). VAT is
/// only charged when the offtake price is non-negative.
pub fn spot_prices(vd: f64, params: &TariffParams) -> (f64, f64) {
    let base = vd + params.offtake_adder;
    let vo = if base >= 0.0 { base * params.vat } else { base };
    (vo, vd - params.injection_subtractor)
}

/// Peak cost of one month from its 15-minute offtake energies (kWh).
pub fn peak_cost(month_steps: &[f64], billed_fraction: f64, params: &TariffParams) -> f64 {
    let max_e = month_steps.iter().copied().fold(0.0f64, f64::max);
    billed_fraction * params.peak_price * (max_e / STEP_HOURS).max(params.peak_floor)
}

fn steps_in_month(t: Timestamp) -> usize {
    time::days_in_month(t.year(), t.month()) as usize * STEPS_PER_DAY
}

fn steps_in_year(year: i32) -> usize {
    time::days_in_year(year) as usize * STEPS_PER_DAY
}

fn cost_with<T: Metered>(
    traces: &[T],
    prices: &Series,
    params: &TariffParams,
    energies: impl Fn(&T) -> (f64, f64),
) -> Result<CostBreakdown, TariffError> {
    let mut day_ahead = 0.0;
    let mut extras = 0.0;
    let mut months: BTreeMap<(i32, u32), (Vec<f64>, usize)> = BTreeMap::new();
    let mut years: BTreeMap<i32, usize> = BTreeMap::new();
    for tr in traces {
        let t = tr.time();
        let vd = prices.value_at(t).ok_or(TariffError::MissingPrice(t))?;
        let (vo, vi) = spot_prices(vd, params);
        let (eo, ei) = energies(tr);
        day_ahead += eo * vo - ei * vi;
        extras += eo * params.offtake_extras;
        let m = months.entry((t.year(), t.month())).or_insert_with(|| (Vec::new(), steps_in_month(t)));
        m.0.push(eo);
        *years.entry(t.year()).or_insert(0) += 1;
    }
    let peak = months
        .values()
        .map(|(e, n)| peak_cost(e, e.len() as f64 / *n as f64, params))
        .sum();
    let yearly = years
        .iter()
        .map(|(&y, &n)| params.yearly * n as f64 / steps_in_year(y) as f64)
        .sum();
    Ok(CostBreakdown::new(day_ahead, extras, peak, yearly))
}

/// Cost with offtake and injection billed separately per step.
pub fn total_cost<T: Metered>(
    traces: &[T],
    prices: &Series,
    params: &TariffParams,
) -> Result<CostBreakdown, TariffError> {
    cost_with(traces, prices, params, |t| (t.offtake(), t.injection()))
}

/// Cost when only the net consumption of each step is metered.
pub fn net_consumption_cost<T: Metered>(
    traces: &[T],
    prices: &Series,
    params: &TariffParams,
) -> Result<CostBreakdown, TariffError> {
    cost_with(traces, prices, params, |t| {
        let net = t.offtake() - t.injection();
        (net.max(0.0), (-net).max(0.0))
    })
}
