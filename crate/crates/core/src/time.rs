//! Wall-clock helpers on the 15-minute EMS grid.

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, TimeDelta, Timelike};

/// Local wall-clock time. Timestamps are converted to a fixed UTC offset on
/// ingest, so arithmetic here never crosses a DST transition.
pub type Timestamp = NaiveDateTime;

/// EMS decision interval.
pub const STEP: TimeDelta = TimeDelta::minutes(15);
/// EMS decision interval in hours.
pub const STEP_HOURS: f64 = 0.25;
pub const STEPS_PER_DAY: usize = 96;

pub fn hours(d: TimeDelta) -> f64 {
    d.num_milliseconds() as f64 / 3_600_000.0
}

pub fn from_hours(h: f64) -> TimeDelta {
    TimeDelta::milliseconds((h * 3_600_000.0).round() as i64)
}

/// Number of whole `step`s in `[from, to)`; zero when `to <= from`.
pub fn steps_between(from: Timestamp, to: Timestamp, step: TimeDelta) -> usize {
    let span = (to - from).num_milliseconds();
    if span <= 0 {
        0
    } else {
        (span / step.num_milliseconds()) as usize
    }
}

pub fn is_aligned(t: Timestamp, step: TimeDelta) -> bool {
    let since_midnight = (t - t.date().and_time(NaiveTime::MIN)).num_milliseconds();
    since_midnight % step.num_milliseconds() == 0
}

/// Floors `t` to the `step` grid anchored at local midnight.
pub fn floor_to(t: Timestamp, step: TimeDelta) -> Timestamp {
    let midnight = t.date().and_time(NaiveTime::MIN);
    let ms = (t - midnight).num_milliseconds();
    midnight + TimeDelta::milliseconds(ms - ms.rem_euclid(step.num_milliseconds()))
}

/// Ceils `t` to the `step` grid anchored at local midnight.
pub fn ceil_to(t: Timestamp, step: TimeDelta) -> Timestamp {
    let f = floor_to(t, step);
    if f == t {
        t
    } else {
        f + step
    }
}

/// The first switch instant strictly after `t`.
pub fn next_switch(t: Timestamp, switch_hour: u32) -> Timestamp {
    let today = t.date().and_hms_opt(switch_hour, 0, 0).expect("valid switch hour");
    if today > t {
        today
    } else {
        today + TimeDelta::days(1)
    }
}

/// The last switch instant at or before `t`.
pub fn prev_switch(t: Timestamp, switch_hour: u32) -> Timestamp {
    next_switch(t, switch_hour) - TimeDelta::days(1)
}

/// Fractional hour of day, e.g. 15.5 for 15:30.
pub fn hour_of_day(t: Timestamp) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid month");
    (next - first).num_days() as u32
}

pub fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

/// Parses `YYYY-MM-DDTHH:MM[:SS]` local time (no offset).
pub fn parse_local(s: &str) -> Option<Timestamp> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

pub fn weekday_index(t: Timestamp) -> u32 {
    t.weekday().num_days_from_monday()
}
