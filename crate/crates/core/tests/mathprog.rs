//! LP and MILP solutions checked against brute-force vertex enumeration on
//! small random problems.

use ems_bench::mathprog::{solve_lp, solve_milp, Cmp, LinearProgram, Status, VarId};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

/// A hyperplane `a . x = b` that may be active at a vertex.
struct Plane {
    a: Vec<f64>,
    b: f64,
}

/// Solves the square system by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of the objective over all vertices of the polytope, with the
/// variables in `fixed` pinned. Bounds must be finite.
fn vertex_minimum(lp: &LinearProgram, fixed: &[(usize, f64)]) -> Option<f64> {
    let n = lp.vars.len();
    let unit = |i: usize| {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        a
    };
    let mut eq: Vec<Plane> = fixed.iter().map(|&(i, v)| Plane { a: unit(i), b: v }).collect();
    let mut cand: Vec<Plane> = Vec::new();
    for (i, v) in lp.vars.iter().enumerate() {
        if fixed.iter().all(|&(j, _)| j != i) {
            cand.push(Plane { a: unit(i), b: v.lo });
            cand.push(Plane { a: unit(i), b: v.hi });
        }
    }
    for c in &lp.constraints {
        let mut a = vec![0.0; n];
        for &(id, coef) in &c.terms {
            a[id.0] += coef;
        }
        let p = Plane { a, b: c.rhs };
        if c.cmp == Cmp::Eq {
            eq.push(p);
        } else {
            cand.push(p);
        }
    }
    if eq.len() > n {
        // Over-determined: pick n of the equalities and let feasibility decide.
        let picked = eq.split_off(n);
        cand.extend(picked);
    }
    let free = n - eq.len();
    let mut best: Option<f64> = None;
    for combo in combinations(cand.len(), free) {
        let rows: Vec<&Plane> = eq.iter().chain(combo.iter().map(|&i| &cand[i])).collect();
        let a = rows.iter().map(|p| p.a.clone()).collect();
        let b = rows.iter().map(|p| p.b).collect();
        let Some(x) = solve_square(a, b) else { continue };
        if lp.max_violation(&x) > TOL {
            continue;
        }
        let obj = lp.objective_at(&x);
        best = Some(best.map_or(obj, |o: f64| o.min(obj)));
    }
    best
}

fn random_lp(rng: &mut ChaCha8Rng, binaries: usize) -> LinearProgram {
    let n = rng.random_range(1..=4usize);
    let m = rng.random_range(0..=3usize);
    let mut lp = LinearProgram::new();
    let mut ids: Vec<VarId> = (0..n)
        .map(|i| {
            let lo = rng.random_range(-5.0..2.0);
            let hi = lo + rng.random_range(0.5..6.0);
            lp.add_var(format!("x{i}"), lo, hi, rng.random_range(-3.0..3.0))
        })
        .collect();
    for i in 0..binaries {
        ids.push(lp.add_binary(format!("b{i}"), rng.random_range(-3.0..3.0)));
    }
    for r in 0..m {
        let mut terms: Vec<(VarId, f64)> = Vec::new();
        for &v in &ids {
            if rng.random_bool(0.7) {
                terms.push((v, rng.random_range(-2.0..2.0)));
            }
        }
        if terms.is_empty() {
            continue;
        }
        let cmp = match rng.random_range(0..5u8) {
            0 => Cmp::Eq,
            1 | 2 => Cmp::Ge,
            _ => Cmp::Le,
        };
        lp.add_constraint(format!("r{r}"), terms, cmp, rng.random_range(-4.0..4.0));
    }
    lp.obj_offset = rng.random_range(-1.0..1.0);
    lp
}

fn assert_matches(lp: &LinearProgram, got: &ems_bench::mathprog::MipSolution, expected: Option<f64>, what: &str) {
    match expected {
        None => assert_eq!(got.status, Status::Infeasible, "{what}: oracle says infeasible\n{}", lp.to_lp_string()),
        Some(best) => {
            assert_eq!(got.status, Status::Optimal, "{what}: oracle optimum {best}\n{}", lp.to_lp_string());
            let scale = 1.0 + best.abs();
            assert!(
                (got.objective - best).abs() <= 1e-6 * scale,
                "{what}: solver {} vs oracle {best}\n{}",
                got.objective,
                lp.to_lp_string()
            );
            assert!(lp.max_violation(&got.values) <= 1e-6);
            assert!((lp.objective_at(&got.values) - got.objective).abs() <= 1e-6 * scale);
        }
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut feasible, mut infeasible) = (0, 0);
    for _ in 0..2000 {
        let lp = random_lp(&mut rng, 0);
        let expected = vertex_minimum(&lp, &[]);
        match expected {
            Some(_) => feasible += 1,
            None => infeasible += 1,
        }
        assert_matches(&lp, &solve_lp(&lp), expected, "lp");
    }
    assert!(feasible > 500 && infeasible > 50, "{feasible} feasible, {infeasible} infeasible");
}

#[test]
fn milp_matches_enumeration_over_binaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..800 {
        let nb = rng.random_range(1..=3usize);
        let lp = random_lp(&mut rng, nb);
        let bins: Vec<usize> = (0..lp.vars.len()).filter(|&i| lp.vars[i].binary).collect();
        let mut expected: Option<f64> = None;
        for mask in 0..(1u32 << nb) {
            let fixed: Vec<(usize, f64)> = bins
                .iter()
                .enumerate()
                .map(|(k, &i)| (i, ((mask >> k) & 1) as f64))
                .collect();
            if let Some(v) = vertex_minimum(&lp, &fixed) {
                expected = Some(expected.map_or(v, |e| e.min(v)));
            }
        }
        let got = solve_milp(&lp);
        assert_matches(&lp, &got, expected, "milp");
        if got.has_solution() {
            for &i in &bins {
                assert!(got.values[i] == 0.0 || got.values[i] == 1.0);
            }
        }
    }
}

#[test]
fn unbounded_lp_is_reported() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
    let y = lp.add_var("y", 0.0, 1.0, 0.0);
    lp.add_constraint("c", vec![(x, 1.0), (y, -1.0)], Cmp::Ge, 0.0);
    assert_eq!(solve_lp(&lp).status, Status::Unbounded);
}
