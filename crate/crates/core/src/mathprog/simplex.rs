//! Dense bounded-variable primal simplex.
//!
//! Every column `y` lives in `[0, upper]` after shifting structural
//! variables to their lower bound (or mirroring them at the upper bound when
//! the lower bound is infinite; free variables are split). Each constraint
//! row gets a slack column, and rows whose slack cannot start basic get an
//! artificial column for phase one.

use super::{Cmp, LinearProgram, MipSolution, SolverOptions, Status};

const PIV_TOL: f64 = 1e-9;
const DJ_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy)]
enum ColMap {
    Shift { col: usize, lo: f64 },
    Mirror { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    n: usize,
    a: Vec<f64>,
    beta: Vec<f64>,
    d: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    first_art: usize,
    iterations: usize,
    max_iterations: usize,
    pivot_row: Vec<usize>,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    fn reduced_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * self.n..(i + 1) * self.n];
                for (dj, aij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * aij;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.n;
        let piv = self.a[r * n + j];
        self.pivot_row.clear();
        {
            let row = &mut self.a[r * n..(r + 1) * n];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= piv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        self.pivot_row.push(k);
                    }
                }
            }
            row[j] = 1.0;
        }
        let (before, rest) = self.a.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        let apply = |row: &mut [f64], nz: &[usize]| {
            let f = row[j];
            if f != 0.0 {
                for &k in nz {
                    let v = row[k] - f * prow[k];
                    row[k] = if v.abs() < DROP_TOL { 0.0 } else { v };
                }
                row[j] = 0.0;
            }
        };
        for row in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            apply(row, &self.pivot_row);
        }
        apply(&mut self.d, &self.pivot_row);
    }

    /// Runs primal simplex iterations on the current reduced costs.
    fn iterate(&mut self, allow_art: bool) -> Outcome {
        let limit = if allow_art { self.n } else { self.first_art };
        let mut stalled = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            let bland = stalled >= STALL_LIMIT;
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..limit {
                let score = match self.state[j] {
                    State::Basic => continue,
                    State::Lower => -self.d[j],
                    State::Upper => self.d[j],
                };
                if score > DJ_TOL && self.upper[j] > 0.0 {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if score > best {
                        best = score;
                        enter = Some(j);
                    }
                }
            }
            let Some(j) = enter else {
                return Outcome::Optimal;
            };
            let dir = if self.state[j] == State::Lower { 1.0 } else { -1.0 };

            let mut theta = self.upper[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = self.at(i, j);
                let delta = alpha * dir;
                let ratio = if delta > PIV_TOL {
                    self.beta[i] / delta
                } else if delta < -PIV_TOL {
                    let ub = self.upper[self.basis[i]];
                    if !ub.is_finite() {
                        continue;
                    }
                    (ub - self.beta[i]) / -delta
                } else {
                    continue;
                };
                let ratio = ratio.max(0.0);
                let better = match leave {
                    _ if ratio < theta - 1e-12 => true,
                    Some((r, a)) if ratio <= theta + 1e-12 => {
                        if bland {
                            self.basis[i] < self.basis[r]
                        } else {
                            alpha.abs() > a.abs()
                        }
                    }
                    _ => false,
                };
                if better {
                    theta = ratio.min(theta);
                    leave = Some((i, alpha));
                }
            }
            if !theta.is_finite() {
                return Outcome::Unbounded;
            }
            self.iterations += 1;
            if theta <= 1e-12 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            if theta != 0.0 {
                for i in 0..self.m {
                    let aij = self.a[i * self.n + j];
                    if aij != 0.0 {
                        self.beta[i] -= dir * theta * aij;
                    }
                }
            }
            match leave {
                None => {
                    self.state[j] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
                Some((r, alpha)) => {
                    let entering_value = if dir > 0.0 { theta } else { self.upper[j] - theta };
                    let out = self.basis[r];
                    self.state[out] = if alpha * dir > 0.0 { State::Lower } else { State::Upper };
                    if self.state[out] == State::Upper && !self.upper[out].is_finite() {
                        self.state[out] = State::Lower;
                    }
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                    self.basis[r] = j;
                    self.state[j] = State::Basic;
                }
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut y: Vec<f64> = (0..self.n)
            .map(|j| match self.state[j] {
                State::Upper => self.upper[j],
                _ => 0.0,
            })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            y[b] = self.beta[i];
        }
        y
    }
}

/// Solves the LP relaxation (binaries relaxed to `[0, 1]`).
pub fn solve_lp(lp: &LinearProgram) -> MipSolution {
    let bounds: Vec<(f64, f64)> = lp.vars.iter().map(|v| (v.lo, v.hi)).collect();
    solve_with_bounds(lp, &bounds, &SolverOptions::default())
}

pub(crate) fn solve_with_bounds(
    lp: &LinearProgram,
    bounds: &[(f64, f64)],
    opts: &SolverOptions,
) -> MipSolution {
    if let Err(_) = lp.validate() {
        return MipSolution::failed(Status::Infeasible, 0);
    }
    if bounds.iter().any(|(lo, hi)| lo > hi) {
        return MipSolution::failed(Status::Infeasible, 0);
    }

    // Structural columns.
    let mut maps = Vec::with_capacity(lp.vars.len());
    let mut upper = Vec::new();
    let mut cost = Vec::new();
    let mut offset = lp.obj_offset;
    for (v, &(lo, hi)) in lp.vars.iter().zip(bounds) {
        if lo.is_finite() {
            maps.push(ColMap::Shift { col: upper.len(), lo });
            upper.push(hi - lo);
            cost.push(v.obj);
            offset += v.obj * lo;
        } else if hi.is_finite() {
            maps.push(ColMap::Mirror { col: upper.len(), hi });
            upper.push(f64::INFINITY);
            cost.push(-v.obj);
            offset += v.obj * hi;
        } else {
            maps.push(ColMap::Split {
                pos: upper.len(),
                neg: upper.len() + 1,
            });
            upper.extend([f64::INFINITY, f64::INFINITY]);
            cost.extend([v.obj, -v.obj]);
        }
    }
    let n_struct = upper.len();

    // Rows in sparse form over structural columns, with shifted rhs.
    let m = lp.constraints.len();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for c in &lp.constraints {
        let mut r = Vec::with_capacity(c.terms.len() + 1);
        let mut b = c.rhs;
        for &(id, a) in &c.terms {
            match maps[id.0] {
                ColMap::Shift { col, lo } => {
                    r.push((col, a));
                    b -= a * lo;
                }
                ColMap::Mirror { col, hi } => {
                    r.push((col, -a));
                    b -= a * hi;
                }
                ColMap::Split { pos, neg } => {
                    r.push((pos, a));
                    r.push((neg, -a));
                }
            }
        }
        rows.push(r);
        rhs.push(b);
    }
    let n_slack = lp.constraints.iter().filter(|c| c.cmp != Cmp::Eq).count();
    let first_art = n_struct + n_slack;

    // Decide the starting basis per row.
    let mut slack_col = vec![None; m];
    let mut sign = vec![1.0; m];
    let mut needs_art = vec![false; m];
    let mut next_slack = n_struct;
    for (i, c) in lp.constraints.iter().enumerate() {
        let slack_coef = match c.cmp {
            Cmp::Le => Some(1.0),
            Cmp::Ge => Some(-1.0),
            Cmp::Eq => None,
        };
        if let Some(coef) = slack_coef {
            slack_col[i] = Some((next_slack, coef));
            next_slack += 1;
        }
        if rhs[i] < 0.0 {
            sign[i] = -1.0;
        }
        let slack_positive = slack_coef.map(|c| c * sign[i] > 0.0).unwrap_or(false);
        needs_art[i] = !slack_positive;
    }
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let n = first_art + n_art;

    let mut t = Tableau {
        m,
        n,
        a: vec![0.0; m * n],
        beta: vec![0.0; m],
        d: vec![0.0; n],
        upper: {
            let mut u = upper;
            u.extend(std::iter::repeat(f64::INFINITY).take(n_slack + n_art));
            u
        },
        basis: vec![0; m],
        state: vec![State::Lower; n],
        first_art,
        iterations: 0,
        max_iterations: if opts.max_iterations > 0 {
            opts.max_iterations
        } else {
            50 * (m + n) + 1000
        },
        pivot_row: Vec::with_capacity(n),
    };
    let mut next_art = first_art;
    for i in 0..m {
        let s = sign[i];
        for &(col, a) in &rows[i] {
            t.a[i * n + col] += s * a;
        }
        if let Some((col, coef)) = slack_col[i] {
            t.a[i * n + col] = s * coef;
        }
        t.beta[i] = s * rhs[i];
        if needs_art[i] {
            t.a[i * n + next_art] = 1.0;
            t.basis[i] = next_art;
            next_art += 1;
        } else {
            t.basis[i] = slack_col[i].expect("slack").0;
        }
        t.state[t.basis[i]] = State::Basic;
    }

    // Phase one.
    if n_art > 0 {
        let mut c1 = vec![0.0; n];
        for c in c1.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        t.reduced_costs(&c1);
        match t.iterate(true) {
            Outcome::Optimal => {}
            Outcome::IterationLimit => return MipSolution::failed(Status::IterationLimit, t.iterations),
            Outcome::Unbounded => return MipSolution::failed(Status::Infeasible, t.iterations),
        }
        let infeas: f64 = (0..m)
            .filter(|&i| t.basis[i] >= first_art)
            .map(|i| t.beta[i])
            .sum();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > opts.feas_tol * scale {
            return MipSolution::failed(Status::Infeasible, t.iterations);
        }
        for j in first_art..n {
            t.upper[j] = 0.0;
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            if t.basis[i] < first_art {
                continue;
            }
            let cand = (0..first_art)
                .filter(|&j| t.state[j] != State::Basic)
                .max_by(|&x, &y| t.at(i, x).abs().total_cmp(&t.at(i, y).abs()));
            if let Some(j) = cand {
                if t.at(i, j).abs() > 1e-7 {
                    let value = if t.state[j] == State::Upper { t.upper[j] } else { 0.0 };
                    let out = t.basis[i];
                    t.pivot(i, j);
                    t.beta[i] = value;
                    t.basis[i] = j;
                    t.state[j] = State::Basic;
                    t.state[out] = State::Lower;
                }
            }
        }
    }

    // Phase two.
    let mut c2 = cost;
    c2.resize(n, 0.0);
    t.reduced_costs(&c2);
    let outcome = t.iterate(false);
    let status = match outcome {
        Outcome::Optimal => Status::Optimal,
        Outcome::Unbounded => return MipSolution::failed(Status::Unbounded, t.iterations),
        Outcome::IterationLimit => Status::IterationLimit,
    };

    let y = t.column_values();
    let values: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            ColMap::Shift { col, lo } => lo + y[col],
            ColMap::Mirror { col, hi } => hi - y[col],
            ColMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = lp.vars.iter().zip(&values).map(|(v, x)| v.obj * x).sum::<f64>() + lp.obj_offset;
    let _ = offset;
    MipSolution {
        status,
        objective,
        values,
        gap: 0.0,
        nodes: 1,
        iterations: t.iterations,
    }
}
