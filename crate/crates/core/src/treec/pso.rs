//! Canonical particle swarm optimization on the unit hypercube.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub population: usize,
    pub generations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Largest velocity component, as a fraction of the unit range.
    pub velocity_clamp: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            generations: 1000,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            velocity_clamp: 0.5,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.population < 2 {
            return Err("population must be at least 2".into());
        }
        if !(self.inertia > 0.0 && self.cognitive > 0.0 && self.social > 0.0 && self.velocity_clamp > 0.0) {
            return Err("PSO coefficients must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Global-best cost after initialization and after each generation.
    pub history: Vec<f64>,
}

fn evaluate<F>(f: &F, xs: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    xs.par_iter()
        .map(|x| {
            let c = f(x);
            if c.is_nan() {
                f64::INFINITY
            } else {
                c
            }
        })
        .collect()
}

/// Minimizes `f` over `[0, 1]^dim`. Fitness calls of one generation run in
/// parallel; all random draws happen on the calling thread, so the result
/// only depends on the seed.
pub fn pso_optimize<F>(f: &F, dim: usize, cfg: &PsoConfig) -> PsoResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.population.max(1);
    let vmax = cfg.velocity_clamp;
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-vmax..vmax)).collect())
        .collect();
    let mut cost = evaluate(f, &x);
    let mut pbest = x.clone();
    let mut pcost = cost.clone();
    let arg_min = |c: &[f64]| {
        c.iter()
            .enumerate()
            .fold(0, |b, (i, &ci)| if ci < c[b] { i } else { b })
    };
    let g = arg_min(&pcost);
    let mut gbest = pbest[g].clone();
    let mut gcost = pcost[g];
    let mut history = Vec::with_capacity(cfg.generations + 1);
    history.push(gcost);

    for _ in 0..cfg.generations {
        for i in 0..n {
            for d in 0..dim {
                let r1: f64 = rng.random_range(0.0..1.0);
                let r2: f64 = rng.random_range(0.0..1.0);
                let vel = cfg.inertia * v[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - x[i][d])
                    + cfg.social * r2 * (gbest[d] - x[i][d]);
                v[i][d] = vel.clamp(-vmax, vmax);
                x[i][d] = (x[i][d] + v[i][d]).clamp(0.0, 1.0);
            }
        }
        cost = evaluate(f, &x);
        for i in 0..n {
            if cost[i] < pcost[i] {
                pcost[i] = cost[i];
                pbest[i].clone_from(&x[i]);
            }
        }
        let g = arg_min(&pcost);
        if pcost[g] < gcost {
            gcost = pcost[g];
            gbest.clone_from(&pbest[g]);
        }
        history.push(gcost);
    }
    PsoResult {
        best: gbest,
        best_cost: gcost,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.5).powi(2)).sum()
    }

    #[test]
    fn sphere_converges() {
        let cfg = PsoConfig {
            population: 50,
            generations: 200,
            seed: 7,
            ..Default::default()
        };
        let r = pso_optimize(&sphere, 10, &cfg);
        assert!(r.best_cost < 1e-3, "{}", r.best_cost);
        assert_eq!(r.history.len(), 201);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.best_cost, sphere(&r.best));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = PsoConfig {
            population: 20,
            generations: 15,
            seed: 3,
            ..Default::default()
        };
        let a = pso_optimize(&sphere, 6, &cfg);
        let b = pso_optimize(&sphere, 6, &cfg);
        assert_eq!(a, b);
        let c = pso_optimize(&sphere, 6, &PsoConfig { seed: 4, ..cfg });
        assert_ne!(a.best, c.best);
    }

    #[test]
    fn zero_generations_returns_best_initial_particle() {
        let cfg = PsoConfig {
            population: 30,
            generations: 0,
            seed: 1,
            ..Default::default()
        };
        let r = pso_optimize(&sphere, 4, &cfg);
        assert_eq!(r.history, vec![r.best_cost]);
        // replay the initialization
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let best = xs.iter().map(|x| sphere(x)).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_cost, best);
    }
}
