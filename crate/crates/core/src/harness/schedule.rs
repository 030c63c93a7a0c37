//! House-switching protocol: every day each house runs a different EMS, the
//! assignment rotating at the daily switch time.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::EvSession;
use crate::time::{self, Timestamp};

pub const N_HOUSES: usize = 4;
/// Number of distinct EMS-to-house assignments.
pub const N_ASSIGNMENTS: usize = 24;
pub const SCHEDULE_DAYS: usize = 2 * N_ASSIGNMENTS;
pub const MAX_ATTEMPTS: usize = 10_000;
/// Search nodes per attempt before restarting with fresh randomness.
const NODES_PER_ATTEMPT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ems {
    #[serde(rename = "RL-stub")]
    RlStub,
    #[serde(rename = "RBC")]
    Rbc,
    #[serde(rename = "TreeC")]
    TreeC,
    #[serde(rename = "MPC")]
    Mpc,
}

impl Ems {
    pub const ALL: [Ems; 4] = [Ems::RlStub, Ems::Rbc, Ems::TreeC, Ems::Mpc];

    pub fn name(self) -> &'static str {
        match self {
            Ems::RlStub => "RL-stub",
            Ems::Rbc => "RBC",
            Ems::TreeC => "TreeC",
            Ems::Mpc => "MPC",
        }
    }

    /// EMSs that must not run the same house on consecutive days.
    pub fn no_repeat(self) -> bool {
        matches!(self, Ems::RlStub | Ems::Mpc)
    }
}

impl fmt::Display for Ems {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown EMS `{0}`")]
pub struct UnknownEms(pub String);

impl FromStr for Ems {
    type Err = UnknownEms;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ems::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownEms(s.to_string()))
    }
}

/// EMS per house (index 0 is house 1) for one day.
pub type Assignment = [Ems; N_HOUSES];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("no valid schedule found after {0} attempts")]
    AttemptsExhausted(usize),
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub seed: u64,
    pub days: Vec<Assignment>,
}

/// All 24 assignments in lexicographic order of EMS indices.
pub fn all_assignments() -> Vec<Assignment> {
    let mut out = Vec::with_capacity(N_ASSIGNMENTS);
    fn rec(cur: &mut Vec<Ems>, out: &mut Vec<Assignment>) {
        if cur.len() == N_HOUSES {
            out.push([cur[0], cur[1], cur[2], cur[3]]);
            return;
        }
        for e in Ems::ALL {
            if !cur.contains(&e) {
                cur.push(e);
                rec(cur, out);
                cur.pop();
            }
        }
    }
    rec(&mut Vec::new(), &mut out);
    out
}

/// True when `next` may follow `prev` on the next day.
pub fn compatible(prev: &Assignment, next: &Assignment) -> bool {
    prev.iter().zip(next).all(|(a, b)| !(a == b && a.no_repeat()))
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Checks the protocol: two halves that are distinct orderings of all
    /// assignments, and no consecutive-day repeat of a restricted EMS.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::Invalid(m));
        if self.days.len() != SCHEDULE_DAYS {
            return bad(format!("{} days, expected {SCHEDULE_DAYS}", self.days.len()));
        }
        let all = all_assignments();
        for (h, half) in self.days.chunks(N_ASSIGNMENTS).enumerate() {
            let mut sorted = half.to_vec();
            sorted.sort();
            if sorted != all {
                return bad(format!("half {} is not a permutation of all assignments", h + 1));
            }
        }
        if self.days[..N_ASSIGNMENTS] == self.days[N_ASSIGNMENTS..] {
            return bad("both halves are identical".into());
        }
        for (d, w) in self.days.windows(2).enumerate() {
            if !compatible(&w[0], &w[1]) {
                return bad(format!("days {} and {} repeat a restricted EMS", d + 1, d + 2));
            }
        }
        Ok(())
    }

    /// Days on which `house` (1-based) runs `ems`.
    pub fn days_of(&self, house: u8, ems: Ems) -> Vec<usize> {
        (0..self.days.len())
            .filter(|&d| self.days[d][house as usize - 1] == ems)
            .collect()
    }
}

struct Search<'a> {
    all: &'a [Assignment],
    compat: Vec<Vec<bool>>,
    used: [Vec<bool>; 2],
    path: Vec<usize>,
    nodes: usize,
    rng: &'a mut ChaCha8Rng,
}

impl Search<'_> {
    fn dfs(&mut self) -> bool {
        let pos = self.path.len();
        if pos == SCHEDULE_DAYS {
            return self.path[..N_ASSIGNMENTS] != self.path[N_ASSIGNMENTS..];
        }
        self.nodes += 1;
        if self.nodes > NODES_PER_ATTEMPT {
            return false;
        }
        let half = pos / N_ASSIGNMENTS;
        let mut cands: Vec<usize> = (0..self.all.len())
            .filter(|&i| !self.used[half][i])
            .filter(|&i| self.path.last().is_none_or(|&p| self.compat[p][i]))
            .collect();
        cands.shuffle(self.rng);
        for i in cands {
            self.used[half][i] = true;
            self.path.push(i);
            if self.dfs() {
                return true;
            }
            self.path.pop();
            self.used[half][i] = false;
            if self.nodes > NODES_PER_ATTEMPT {
                return false;
            }
        }
        false
    }
}

/// Draws a valid 48-day schedule. Each half is built by a randomized
/// depth-first search over shuffled candidates, restarted when a node budget
/// runs out.
pub fn generate_schedule(seed: u64) -> Result<Schedule, ScheduleError> {
    let all = all_assignments();
    let compat: Vec<Vec<bool>> = all.iter().map(|a| all.iter().map(|b| compatible(a, b)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut s = Search {
            all: &all,
            compat: compat.clone(),
            used: [vec![false; all.len()], vec![false; all.len()]],
            path: Vec::with_capacity(SCHEDULE_DAYS),
            nodes: 0,
            rng: &mut rng,
        };
        if s.dfs() {
            return Ok(Schedule {
                seed,
                days: s.path.iter().map(|&i| all[i]).collect(),
            });
        }
    }
    Err(ScheduleError::AttemptsExhausted(MAX_ATTEMPTS))
}

/// Result of clipping sessions to the switch time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjustedSessions {
    pub sessions: Vec<EvSession>,
    /// Sessions that became empty.
    pub dropped: Vec<EvSession>,
}

/// Shortens every session that spans a switch instant to its longest piece
/// between switch instants; ties keep the earlier piece. SOC start and goal
/// are kept.
pub fn adjust_sessions(sessions: &[EvSession], switch_hour: u32) -> AdjustedSessions {
    let mut out = AdjustedSessions::default();
    for s in sessions {
        let mut cuts: Vec<Timestamp> = vec![s.arrival];
        let mut t = time::next_switch(s.arrival, switch_hour);
        while t < s.departure {
            cuts.push(t);
            t = time::next_switch(t, switch_hour);
        }
        cuts.push(s.departure);
        let (a, b) = cuts
            .windows(2)
            .map(|w| (w[0], w[1]))
            .fold(None::<(Timestamp, Timestamp)>, |best, (a, b)| match best {
                Some((x, y)) if y - x >= b - a => Some((x, y)),
                _ => Some((a, b)),
            })
            .expect("at least one piece");
        let adjusted = EvSession {
            arrival: a,
            departure: b,
            ..s.clone()
        };
        if a < b {
            out.sessions.push(adjusted);
        } else {
            out.dropped.push(s.clone());
        }
    }
    out
}
