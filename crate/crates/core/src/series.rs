//! Regularly sampled time series.

use chrono::TimeDelta;

use crate::time::{self, Timestamp};

/// Values on a regular grid starting at `start`. Missing samples are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub start: Timestamp,
    pub step: TimeDelta,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(start: Timestamp, step: TimeDelta, values: Vec<f64>) -> Self {
        Self { start, step, values }
    }

    pub fn constant(start: Timestamp, step: TimeDelta, n: usize, value: f64) -> Self {
        Self::new(start, step, vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Exclusive end of the covered range.
    pub fn end(&self) -> Timestamp {
        self.start + self.step * self.values.len() as i32
    }

    pub fn index_of(&self, t: Timestamp) -> Option<usize> {
        if t < self.start {
            return None;
        }
        let idx = ((t - self.start).num_milliseconds() / self.step.num_milliseconds()) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    /// Sample-and-hold lookup: the value of the interval containing `t`.
    pub fn value_at(&self, t: Timestamp) -> Option<f64> {
        self.index_of(t)
            .map(|i| self.values[i])
            .filter(|v| v.is_finite())
    }

    pub fn time_at(&self, idx: usize) -> Timestamp {
        self.start + self.step * idx as i32
    }

    /// First maximal run of missing samples within `[from, to)`, if any.
    pub fn first_gap(&self, from: Timestamp, to: Timestamp) -> Option<(Timestamp, Timestamp)> {
        let mut t = from;
        let mut gap_start = None;
        while t < to {
            let missing = self.value_at(t).is_none();
            match (missing, gap_start) {
                (true, None) => gap_start = Some(t),
                (false, Some(g)) => return Some((g, t)),
                _ => {}
            }
            t += self.step;
        }
        gap_start.map(|g| (g, to))
    }

    /// Shifts all timestamps by a whole number of days.
    pub fn shifted_days(&self, days: i64) -> Self {
        Self {
            start: self.start + TimeDelta::days(days),
            ..self.clone()
        }
    }

    /// Multiplies every value by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Values on the 15-minute EMS grid over `[from, from + n·15 min)`.
    pub fn window(&self, from: Timestamp, n: usize) -> Option<Vec<f64>> {
        (0..n)
            .map(|k| self.value_at(from + time::STEP * k as i32))
            .collect()
    }
}
