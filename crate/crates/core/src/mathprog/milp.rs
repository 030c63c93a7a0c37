//! Best-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::solve_with_bounds;
use super::{Cmp, LinearProgram, MipSolution, SolverOptions, Status};

struct Node {
    bound: f64,
    seq: usize,
    bounds: Vec<(f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound, then older node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

fn row_violation(lp: &LinearProgram, r: usize, x: &[f64]) -> f64 {
    let c = &lp.constraints[r];
    let lhs: f64 = c.terms.iter().map(|(id, a)| a * x[id.0]).sum();
    match c.cmp {
        Cmp::Le => (lhs - c.rhs).max(0.0),
        Cmp::Ge => (c.rhs - lhs).max(0.0),
        Cmp::Eq => (lhs - c.rhs).abs(),
    }
}

/// Fixes fractional binaries one at a time to whichever value keeps the
/// rows they appear in satisfied. Returns a feasible point or `None`.
fn round_binaries(
    lp: &LinearProgram,
    binaries: &[usize],
    rows_of: &[Vec<usize>],
    relaxed: &[f64],
    opts: &SolverOptions,
) -> Option<Vec<f64>> {
    let mut x = relaxed.to_vec();
    for &i in binaries {
        let v = x[i];
        if (v - v.round()).abs() <= opts.int_tol {
            x[i] = v.round();
            continue;
        }
        let first = v.round();
        let mut chosen = None;
        for cand in [first, 1.0 - first] {
            x[i] = cand;
            if rows_of[i].iter().all(|&r| row_violation(lp, r, &x) <= opts.feas_tol) {
                chosen = Some(cand);
                break;
            }
        }
        x[i] = chosen?;
    }
    (lp.max_violation(&x) <= opts.feas_tol).then_some(x)
}

/// Solves `lp` with its binary variables enforced, using default options.
pub fn solve_milp(lp: &LinearProgram) -> MipSolution {
    solve_milp_with(lp, &SolverOptions::default())
}

pub fn solve_milp_with(lp: &LinearProgram, opts: &SolverOptions) -> MipSolution {
    if lp.validate().is_err() {
        return MipSolution::failed(Status::Infeasible, 0);
    }
    let binaries: Vec<usize> = (0..lp.vars.len()).filter(|&i| lp.vars[i].binary).collect();
    let root: Vec<(f64, f64)> = lp
        .vars
        .iter()
        .map(|v| if v.binary { (v.lo.max(0.0).ceil(), v.hi.min(1.0).floor()) } else { (v.lo, v.hi) })
        .collect();

    let mut rows_of = vec![Vec::new(); lp.vars.len()];
    for (r, c) in lp.constraints.iter().enumerate() {
        for &(id, _) in &c.terms {
            rows_of[id.0].push(r);
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq: 0,
        bounds: root,
    });
    let mut seq = 1;
    let mut nodes = 0;
    let mut iterations = 0;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut worst_status = Status::Infeasible;

    while let Some(node) = heap.pop() {
        let best_obj = incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o);
        if gap(best_obj, node.bound) <= opts.rel_gap {
            // Every remaining node is at least as bad as this one.
            heap.clear();
            break;
        }
        if nodes >= opts.max_nodes {
            heap.push(node);
            break;
        }
        nodes += 1;
        let relax = solve_with_bounds(lp, &node.bounds, opts);
        iterations += relax.iterations;
        match relax.status {
            Status::Optimal => {}
            Status::Unbounded if incumbent.is_none() => {
                worst_status = Status::Unbounded;
                continue;
            }
            Status::IterationLimit => {
                worst_status = Status::IterationLimit;
                continue;
            }
            _ => continue,
        }
        if gap(best_obj, relax.objective) <= opts.rel_gap {
            continue;
        }
        let branch = binaries
            .iter()
            .map(|&i| (i, relax.values[i]))
            .map(|(i, x)| (i, (x - x.floor()).min(x.ceil() - x)))
            .filter(|&(_, f)| f > opts.int_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        match branch {
            None => {
                let mut x = relax.values;
                for &i in &binaries {
                    x[i] = x[i].round();
                }
                let obj = lp.objective_at(&x);
                if obj < best_obj {
                    incumbent = Some((obj, x));
                }
            }
            Some((i, _)) => {
                if let Some(x) = round_binaries(lp, &binaries, &rows_of, &relax.values, opts) {
                    let obj = lp.objective_at(&x);
                    let best_obj = incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o);
                    if obj < best_obj {
                        incumbent = Some((obj, x));
                    }
                    if gap(obj, relax.objective) <= opts.rel_gap {
                        continue;
                    }
                }
                for fix in [0.0, 1.0] {
                    let mut b = node.bounds.clone();
                    b[i] = (fix, fix);
                    heap.push(Node {
                        bound: relax.objective,
                        seq,
                        bounds: b,
                    });
                    seq += 1;
                }
            }
        }
    }

    match incumbent {
        Some((objective, values)) => {
            let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
            let (status, g) = if heap.is_empty() {
                (Status::Optimal, 0.0)
            } else {
                (Status::NodeLimit, gap(objective, open_bound.min(objective)))
            };
            MipSolution {
                status,
                objective,
                values,
                gap: g,
                nodes,
                iterations,
            }
        }
        None => {
            let status = if heap.is_empty() { worst_status } else { Status::NodeLimit };
            let mut s = MipSolution::failed(status, iterations);
            s.nodes = nodes;
            s
        }
    }
}
