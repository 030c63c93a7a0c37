//! CSV ingestion of measured series and EV sessions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, TimeDelta};
use thiserror::Error;

use crate::series::Series;
use crate::sim::EvSession;
use crate::time::{self, Timestamp, STEP};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}:{line}: {msg}")]
    Row { path: PathBuf, line: u64, msg: String },
    #[error("{path}:{line}: timestamp {at} is not after the previous one")]
    NonMonotonic { path: PathBuf, line: u64, at: Timestamp },
    #[error("{path}: no data from {from} to {to}")]
    Gap { path: PathBuf, from: Timestamp, to: Timestamp },
    #[error("{path}: sessions starting {first} and {second} overlap")]
    Overlap {
        path: PathBuf,
        first: Timestamp,
        second: Timestamp,
    },
    #[error("{path}: file has no data rows")]
    Empty { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Household consumption in W.
    Load,
    /// PV generation in W.
    Pv,
    /// Day-ahead price in €/kWh, usually hourly.
    Price,
}

impl SeriesKind {
    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::Load => "load",
            SeriesKind::Pv => "pv",
            SeriesKind::Price => "price",
        }
    }

    /// Largest spacing between consecutive rows.
    fn max_spacing(self) -> TimeDelta {
        match self {
            SeriesKind::Price => TimeDelta::hours(1),
            _ => STEP,
        }
    }
}

/// Ingest settings shared by all files of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// Timestamps with an explicit offset are converted to this offset.
    pub utc_offset: FixedOffset,
    /// Whole days added to every timestamp, to align weekdays between data
    /// sets recorded in different years.
    pub shift_days: i64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            utc_offset: FixedOffset::east_opt(0).expect("zero offset"),
            shift_days: 0,
        }
    }
}

/// Parses an ISO-8601 timestamp into local time. Offset-less timestamps are
/// taken as already local.
pub fn parse_timestamp(s: &str, opts: &IngestOptions) -> Option<Timestamp> {
    let s = s.trim();
    let t = match DateTime::parse_from_rfc3339(s) {
        Ok(dt) => dt.with_timezone(&opts.utc_offset).naive_local(),
        Err(_) => DateTime::parse_from_str(s, "%Y-%m-%dT%H:%M%:z")
            .map(|dt| dt.with_timezone(&opts.utc_offset).naive_local())
            .ok()
            .or_else(|| time::parse_local(s))?,
    };
    Some(t + TimeDelta::days(opts.shift_days))
}

fn open(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let f = File::open(path).map_err(|source| IoError::Open {
        path: path.into(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, path: &Path, expected: &'static str) -> Result<(), IoError> {
    let h = rdr.headers().map_err(|source| IoError::Csv {
        path: path.into(),
        source,
    })?;
    let found = h.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(IoError::Header {
            path: path.into(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Reads a `timestamp,value` file onto the 15-minute grid. Load and PV are
/// averaged per interval and converted to kW; prices are held until the next
/// row (one hour for the last row).
pub fn load_timeseries(path: &Path, kind: SeriesKind, opts: &IngestOptions) -> Result<Series, IoError> {
    let mut rdr = open(path)?;
    check_header(&mut rdr, path, "timestamp,value")?;
    let mut rows: Vec<(Timestamp, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IoError::Csv {
            path: path.into(),
            source,
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |msg: String| IoError::Row {
            path: path.into(),
            line,
            msg,
        };
        let t = parse_timestamp(&rec[0], opts).ok_or_else(|| row_err(format!("bad timestamp `{}`", &rec[0])))?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| row_err(format!("bad value `{}`", &rec[1])))?;
        if !v.is_finite() {
            return Err(row_err(format!("non-finite value `{}`", &rec[1])));
        }
        if let Some(&(prev, _)) = rows.last() {
            if t <= prev {
                return Err(IoError::NonMonotonic {
                    path: path.into(),
                    line,
                    at: t,
                });
            }
            if t - prev > kind.max_spacing() {
                return Err(IoError::Gap {
                    path: path.into(),
                    from: prev,
                    to: t,
                });
            }
        }
        rows.push((t, v));
    }
    if rows.is_empty() {
        return Err(IoError::Empty { path: path.into() });
    }
    Ok(match kind {
        SeriesKind::Price => hold(&rows),
        _ => bucket_means(&rows, 1e3),
    })
}

fn bucket_means(rows: &[(Timestamp, f64)], divisor: f64) -> Series {
    let mut buckets: BTreeMap<Timestamp, (f64, usize)> = BTreeMap::new();
    for &(t, v) in rows {
        let b = buckets.entry(time::floor_to(t, STEP)).or_insert((0.0, 0));
        b.0 += v;
        b.1 += 1;
    }
    let start = *buckets.keys().next().expect("non-empty");
    let last = *buckets.keys().next_back().expect("non-empty");
    let n = time::steps_between(start, last, STEP) + 1;
    let mut values = vec![f64::NAN; n];
    for (t, (sum, count)) in buckets {
        values[time::steps_between(start, t, STEP)] = sum / count as f64 / divisor;
    }
    Series::new(start, STEP, values)
}

fn hold(rows: &[(Timestamp, f64)]) -> Series {
    let start = time::floor_to(rows[0].0, STEP);
    let end = rows.last().map(|r| r.0 + TimeDelta::hours(1)).expect("non-empty");
    let n = time::steps_between(start, time::ceil_to(end, STEP), STEP);
    let mut values = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = start + STEP * k as i32;
        while j + 1 < rows.len() && rows[j + 1].0 <= t {
            j += 1;
        }
        values.push(rows[j].1);
    }
    Series::new(start, STEP, values)
}

/// Reads an `arrival,departure,soc_start,soc_goal` file. Sessions come back
/// sorted by arrival; overlapping sessions are rejected.
pub fn load_sessions(path: &Path, opts: &IngestOptions) -> Result<Vec<EvSession>, IoError> {
    let mut rdr = open(path)?;
    check_header(&mut rdr, path, "arrival,departure,soc_start,soc_goal")?;
    let mut out: Vec<EvSession> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IoError::Csv {
            path: path.into(),
            source,
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |msg: String| IoError::Row {
            path: path.into(),
            line,
            msg,
        };
        let ts = |i: usize| parse_timestamp(&rec[i], opts).ok_or_else(|| row_err(format!("bad timestamp `{}`", &rec[i])));
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| row_err(format!("bad number `{}`", &rec[i])))
        };
        let s = EvSession {
            arrival: ts(0)?,
            departure: ts(1)?,
            soc_start: num(2)?,
            soc_goal: num(3)?,
        };
        s.validate().map_err(row_err)?;
        out.push(s);
    }
    out.sort_by_key(|s| s.arrival);
    for w in out.windows(2) {
        if w[1].arrival < w[0].departure {
            return Err(IoError::Overlap {
                path: path.into(),
                first: w[0].arrival,
                second: w[1].arrival,
            });
        }
    }
    Ok(out)
}

/// Writes a `timestamp,value` file in the same units `load_timeseries`
/// reads (W for load and PV).
pub fn write_timeseries(path: &Path, series: &Series, kind: SeriesKind) -> Result<(), IoError> {
    let scale = if kind == SeriesKind::Price { 1.0 } else { 1e3 };
    let mut w = csv::Writer::from_path(path).map_err(|source| IoError::Csv {
        path: path.into(),
        source,
    })?;
    let wrap = |source: csv::Error| IoError::Csv {
        path: path.into(),
        source,
    };
    w.write_record(["timestamp", "value"]).map_err(wrap)?;
    for (i, v) in series.values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        let t = series.time_at(i).format("%Y-%m-%dT%H:%M:%S").to_string();
        w.write_record([t, format!("{}", v * scale)]).map_err(wrap)?;
    }
    w.flush().map_err(|source| IoError::Open {
        path: path.into(),
        source,
    })
}

pub fn write_sessions(path: &Path, sessions: &[EvSession]) -> Result<(), IoError> {
    let wrap = |source: csv::Error| IoError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(["arrival", "departure", "soc_start", "soc_goal"]).map_err(wrap)?;
    for s in sessions {
        w.write_record([
            s.arrival.format("%Y-%m-%dT%H:%M:%S").to_string(),
            s.departure.format("%Y-%m-%dT%H:%M:%S").to_string(),
            s.soc_start.to_string(),
            s.soc_goal.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| IoError::Open {
        path: path.into(),
        source,
    })
}
