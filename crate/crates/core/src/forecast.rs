//! Forecasters feeding the MPC: seasonal-naive persistence for load and PV,
//! kNN for EV sessions, and perfect foresight for the benchmark run.

use chrono::TimeDelta;
use thiserror::Error;

use crate::series::Series;
use crate::sim::{EvParams, EvSession};
use crate::time::{self, Timestamp, STEP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("history does not cover {0}")]
    InsufficientHistory(Timestamp),
    #[error("ground truth missing at {0}")]
    OutOfRange(Timestamp),
    #[error("no historical sessions")]
    EmptyHistory,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Values on the 15-minute grid from `start`, kW.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub start: Timestamp,
    pub values: Vec<f64>,
}

impl Forecast {
    pub fn step(&self) -> TimeDelta {
        STEP
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionForecast {
    pub departure: Timestamp,
    pub soc_final: f64,
}

/// Predicts a series over `horizon` steps from `now`. Implementations decide
/// which part of `data` they may look at.
pub trait SeriesForecaster: Send + Sync {
    fn forecast(&self, data: &Series, now: Timestamp, horizon: usize) -> Result<Forecast, ForecastError>;
}

/// Predicts departure and final SOC of the connected session.
pub trait SessionForecaster: Send + Sync {
    fn forecast(&self, session: &EvSession, now: Timestamp) -> Result<SessionForecast, ForecastError>;
}

/// Seasonal-naive forecast: the value observed one day earlier (or a whole
/// number of days earlier, so that only data before `now` is used).
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

pub fn persistence_forecast(history: &Series, now: Timestamp, horizon: usize) -> Result<Forecast, ForecastError> {
    let values = (0..horizon)
        .map(|k| {
            let t = now + STEP * k as i32;
            let mut src = t - TimeDelta::days(1);
            while src >= now {
                src -= TimeDelta::days(1);
            }
            history
                .value_at(src)
                .map(|v| v.max(0.0))
                .ok_or(ForecastError::InsufficientHistory(src))
        })
        .collect::<Result<_, _>>()?;
    Ok(Forecast { start: now, values })
}

impl SeriesForecaster for Persistence {
    fn forecast(&self, data: &Series, now: Timestamp, horizon: usize) -> Result<Forecast, ForecastError> {
        persistence_forecast(data, now, horizon)
    }
}

/// Returns the realized values.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectSeries;

pub fn perfect_forecast(data: &Series, now: Timestamp, horizon: usize) -> Result<Forecast, ForecastError> {
    let values = (0..horizon)
        .map(|k| {
            let t = now + STEP * k as i32;
            data.value_at(t).ok_or(ForecastError::OutOfRange(t))
        })
        .collect::<Result<_, _>>()?;
    Ok(Forecast { start: now, values })
}

impl SeriesForecaster for PerfectSeries {
    fn forecast(&self, data: &Series, now: Timestamp, horizon: usize) -> Result<Forecast, ForecastError> {
        perfect_forecast(data, now, horizon)
    }
}

/// Returns the true departure and goal of the session.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectSession;

impl SessionForecaster for PerfectSession {
    fn forecast(&self, session: &EvSession, _now: Timestamp) -> Result<SessionForecast, ForecastError> {
        Ok(SessionForecast {
            departure: session.departure,
            soc_final: session.soc_goal,
        })
    }
}

/// A completed session as seen by the kNN model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoricalSession {
    pub soc_start: f64,
    /// Arrival hour of day, fractional.
    pub arrival_hour: f64,
    /// hours
    pub duration: f64,
    /// kWh stored in the EV battery
    pub energy: f64,
}

impl HistoricalSession {
    pub fn from_session(s: &EvSession, ev: &EvParams) -> Self {
        Self {
            soc_start: s.soc_start,
            arrival_hour: time::hour_of_day(s.arrival),
            duration: time::hours(s.duration()),
            energy: (s.soc_goal - s.soc_start) * ev.capacity,
        }
    }
}

fn features(soc: f64, hour: f64) -> [f64; 3] {
    let a = 2.0 * std::f64::consts::PI * hour / 24.0;
    [soc, a.cos(), a.sin()]
}

fn cosine(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mean (duration h, energy kWh) of the `k` sessions most cosine-similar to
/// the query. Ties keep history order.
pub fn knn_ev_forecast(
    history: &[HistoricalSession],
    soc_start: f64,
    arrival_hour: f64,
    k: usize,
) -> Result<(f64, f64), ForecastError> {
    if history.is_empty() {
        return Err(ForecastError::EmptyHistory);
    }
    if k == 0 {
        return Err(ForecastError::InvalidK);
    }
    let q = features(soc_start, arrival_hour);
    let mut ranked: Vec<(usize, f64)> = history
        .iter()
        .enumerate()
        .map(|(i, h)| (i, cosine(&q, &features(h.soc_start, h.arrival_hour))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k = k.min(history.len());
    let (d, e) = ranked[..k]
        .iter()
        .fold((0.0, 0.0), |(d, e), &(i, _)| (d + history[i].duration, e + history[i].energy));
    Ok((d / k as f64, e / k as f64))
}

#[derive(Debug, Clone)]
pub struct KnnSessionForecaster {
    pub history: Vec<HistoricalSession>,
    pub k: usize,
    pub ev: EvParams,
}

impl KnnSessionForecaster {
    pub fn new(history: Vec<HistoricalSession>, k: usize, ev: EvParams) -> Self {
        Self { history, k, ev }
    }
}

impl SessionForecaster for KnnSessionForecaster {
    fn forecast(&self, session: &EvSession, now: Timestamp) -> Result<SessionForecast, ForecastError> {
        let (dur, energy) =
            knn_ev_forecast(&self.history, session.soc_start, time::hour_of_day(session.arrival), self.k)?;
        let departure = time::ceil_to(session.arrival + time::from_hours(dur), STEP).max(now);
        Ok(SessionForecast {
            departure,
            soc_final: (session.soc_start + energy / self.ev.capacity).clamp(session.soc_start, 1.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::parse_local;

    fn t(s: &str) -> Timestamp {
        parse_local(s).unwrap()
    }

    #[test]
    fn constant_history_persists() {
        let s = Series::constant(t("2024-01-01T00:00"), STEP, 96 * 3, 0.5);
        let f = persistence_forecast(&s, t("2024-01-02T15:00"), 96).unwrap();
        assert_eq!(f.values, vec![0.5; 96]);
    }

    #[test]
    fn shifted_sine_returns_yesterday() {
        let start = t("2024-01-01T00:00");
        let vals: Vec<f64> = (0..96 * 3).map(|k| 1.0 + (k as f64 * 0.37).sin()).collect();
        let s = Series::new(start, STEP, vals.clone());
        let now = t("2024-01-02T15:00");
        let i0 = 96 + 60;
        let f = persistence_forecast(&s, now, 96).unwrap();
        for (k, v) in f.values.iter().enumerate() {
            assert_eq!(*v, vals[i0 + k - 96]);
        }
        let periodic = Series::new(start, STEP, (0..96 * 3).map(|k| (k % 96) as f64).collect());
        let f = persistence_forecast(&periodic, now, 96).unwrap();
        let truth = perfect_forecast(&periodic, now, 96).unwrap();
        assert_eq!(f, truth);
    }

    #[test]
    fn persistence_needs_a_day_of_history() {
        let s = Series::constant(t("2024-01-01T00:00"), STEP, 96, 1.0);
        assert!(matches!(
            persistence_forecast(&s, t("2024-01-01T12:00"), 4),
            Err(ForecastError::InsufficientHistory(_))
        ));
    }

    #[test]
    fn perfect_out_of_range() {
        let s = Series::constant(t("2024-01-01T00:00"), STEP, 4, 1.0);
        assert!(perfect_forecast(&s, t("2024-01-01T00:00"), 5).is_err());
    }

    fn hs(soc: f64, hour: f64, d: f64, e: f64) -> HistoricalSession {
        HistoricalSession {
            soc_start: soc,
            arrival_hour: hour,
            duration: d,
            energy: e,
        }
    }

    #[test]
    fn knn_single_and_exact_recall() {
        let h = [hs(0.3, 18.0, 10.0, 20.0)];
        assert_eq!(knn_ev_forecast(&h, 0.9, 3.0, 1).unwrap(), (10.0, 20.0));
        let h = [hs(0.3, 18.0, 10.0, 20.0), hs(0.5, 8.0, 3.0, 5.0), hs(0.2, 22.0, 9.0, 30.0)];
        assert_eq!(knn_ev_forecast(&h, 0.5, 8.0, 1).unwrap(), (3.0, 5.0));
    }

    #[test]
    fn knn_matches_exhaustive_ranking() {
        let h = [
            hs(0.3, 18.0, 10.0, 20.0),
            hs(0.5, 8.0, 3.0, 5.0),
            hs(0.2, 22.0, 9.0, 30.0),
            hs(0.7, 12.5, 2.0, 4.0),
            hs(0.1, 23.5, 11.0, 35.0),
        ];
        let (soc, hour) = (0.25, 21.0);
        // independent ranking via angular distance on the unit-normalized features
        let norm = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        };
        let enc = |s: f64, hr: f64| {
            let a = hr / 24.0 * std::f64::consts::TAU;
            norm([s, a.cos(), a.sin()])
        };
        let q = enc(soc, hour);
        let mut idx: Vec<usize> = (0..5).collect();
        let dist = |i: usize| {
            let p = enc(h[i].soc_start, h[i].arrival_hour);
            (0..3).map(|j| (p[j] - q[j]).powi(2)).sum::<f64>()
        };
        idx.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)));
        let d = idx[..3].iter().map(|&i| h[i].duration).sum::<f64>() / 3.0;
        let e = idx[..3].iter().map(|&i| h[i].energy).sum::<f64>() / 3.0;
        let got = knn_ev_forecast(&h, soc, hour, 3).unwrap();
        assert!((got.0 - d).abs() < 1e-12 && (got.1 - e).abs() < 1e-12);

        // k = |history| gives the global mean, in any order
        let all = knn_ev_forecast(&h, soc, hour, 9).unwrap();
        let mut rev = h;
        rev.reverse();
        let all_rev = knn_ev_forecast(&rev, 0.9, 2.0, 5).unwrap();
        assert!((all.0 - 7.0).abs() < 1e-12 && (all.1 - 18.8).abs() < 1e-12);
        assert!((all.0 - all_rev.0).abs() < 1e-12 && (all.1 - all_rev.1).abs() < 1e-12);
    }

    #[test]
    fn session_forecasters() {
        let s = EvSession {
            arrival: t("2024-01-01T18:00"),
            departure: t("2024-01-02T07:00"),
            soc_start: 0.4,
            soc_goal: 0.9,
        };
        let p = PerfectSession.forecast(&s, s.arrival).unwrap();
        assert_eq!((p.departure, p.soc_final), (s.departure, 0.9));

        let ev = EvParams::default();
        let knn = KnnSessionForecaster::new(vec![hs(0.4, 18.0, 12.0, 12.0)], 5, ev);
        let f = knn.forecast(&s, s.arrival).unwrap();
        assert_eq!(f.departure, t("2024-01-02T06:00"));
        assert!((f.soc_final - 0.6).abs() < 1e-12);
        assert!(knn.forecast(&s, t("2024-01-02T06:30")).unwrap().departure >= t("2024-01-02T06:30"));
    }
}
