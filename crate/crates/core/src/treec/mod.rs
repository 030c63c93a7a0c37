//! TreeC: decision-tree policies trained with particle swarm optimization
//! against the simulator, then pruned.

mod pso;

pub use pso::{pso_optimize, PsoConfig, PsoResult};

use rayon::prelude::*;
use thiserror::Error;

use crate::controllers::{Feature, FeatureRanges, PolicyTree, TreeController, TreePair};
use crate::sim::{run_scenario, EvParams, HouseConfig, ScenarioData, ScenarioOptions, SimError};
use crate::tariff::{total_cost, TariffError};
use crate::time::{self, Timestamp, STEP};

#[derive(Debug, Error)]
pub enum TreecError {
    #[error("genome has {got} genes, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tariff(#[from] TariffError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

const N_FEATURES: usize = Feature::ALL.len();

/// Genes for one complete tree: two per internal node, one per leaf.
pub fn tree_genes(depth: usize) -> usize {
    let leaves = 1usize << depth;
    2 * (leaves - 1) + leaves
}

/// Genome length for the BESS and EV trees together.
pub fn genome_len(depth: usize) -> usize {
    2 * tree_genes(depth)
}

fn feature_of(gene: f64) -> Feature {
    let idx = ((gene * N_FEATURES as f64).floor() as usize).min(N_FEATURES - 1);
    Feature::ALL[idx]
}

/// Internal nodes are stored breadth-first as (feature, threshold) pairs,
/// followed by the leaves from left to right.
fn decode_tree(genes: &[f64], depth: usize, ranges: &FeatureRanges) -> PolicyTree {
    let internal = (1usize << depth) - 1;
    fn build(genes: &[f64], node: usize, internal: usize, ranges: &FeatureRanges) -> PolicyTree {
        if node >= internal {
            return PolicyTree::Leaf(genes[2 * internal + node - internal].clamp(0.0, 1.0));
        }
        let f = feature_of(genes[2 * node]);
        let th = ranges.denormalize(f, genes[2 * node + 1]);
        PolicyTree::node(
            f,
            th,
            build(genes, 2 * node + 1, internal, ranges),
            build(genes, 2 * node + 2, internal, ranges),
        )
    }
    build(genes, 0, internal, ranges)
}

pub fn decode(genome: &[f64], depth: usize, ranges: &FeatureRanges) -> Result<TreePair, TreecError> {
    let n = tree_genes(depth);
    if genome.len() != 2 * n {
        return Err(TreecError::Dimension {
            got: genome.len(),
            expected: 2 * n,
        });
    }
    Ok(TreePair {
        bess: decode_tree(&genome[..n], depth, ranges),
        ev: decode_tree(&genome[n..], depth, ranges),
    })
}

fn encode_tree(tree: &PolicyTree, depth: usize, ranges: &FeatureRanges, out: &mut [f64]) -> Result<(), TreecError> {
    let internal = (1usize << depth) - 1;
    fn walk(
        t: &PolicyTree,
        node: usize,
        internal: usize,
        ranges: &FeatureRanges,
        out: &mut [f64],
    ) -> Result<(), TreecError> {
        match (t, node < internal) {
            (PolicyTree::Leaf(v), false) => {
                out[2 * internal + node - internal] = *v;
                Ok(())
            }
            (
                PolicyTree::Node {
                    feature,
                    threshold,
                    left,
                    right,
                },
                true,
            ) => {
                out[2 * node] = (feature.index() as f64 + 0.5) / N_FEATURES as f64;
                out[2 * node + 1] = ranges.normalize(*feature, *threshold);
                walk(left, 2 * node + 1, internal, ranges, out)?;
                walk(right, 2 * node + 2, internal, ranges, out)
            }
            _ => Err(TreecError::Config("tree is not complete at the genome depth".into())),
        }
    }
    walk(tree, 0, internal, ranges, out)
}

/// Inverse of [`decode`] for complete trees of the given depth.
pub fn encode(trees: &TreePair, depth: usize, ranges: &FeatureRanges) -> Result<Vec<f64>, TreecError> {
    let n = tree_genes(depth);
    let mut g = vec![0.0; 2 * n];
    encode_tree(&trees.bess, depth, ranges, &mut g[..n])?;
    encode_tree(&trees.ev, depth, ranges, &mut g[n..])?;
    Ok(g)
}

/// Simulation setup a tree policy is scored on.
#[derive(Debug, Clone)]
pub struct TrainingScenario {
    pub house: HouseConfig,
    pub ev: EvParams,
    pub data: ScenarioData,
    pub from: Timestamp,
    pub to: Timestamp,
    pub opts: ScenarioOptions,
    pub depth: usize,
    pub ranges: FeatureRanges,
}

impl TrainingScenario {
    /// Uses feature ranges observed in the training window.
    pub fn new(
        house: HouseConfig,
        ev: EvParams,
        data: ScenarioData,
        from: Timestamp,
        to: Timestamp,
        opts: ScenarioOptions,
        depth: usize,
    ) -> Self {
        let ranges = observed_ranges(&data, from, to, opts.switch_hour);
        Self {
            house,
            ev,
            data,
            from,
            to,
            opts,
            depth,
            ranges,
        }
    }
}

/// Feature ranges over `[from, to)`: data extremes for load, PV and prices,
/// natural ranges for the rest.
pub fn observed_ranges(data: &ScenarioData, from: Timestamp, to: Timestamp, switch_hour: u32) -> FeatureRanges {
    let n = time::steps_between(from, to, STEP);
    let grab = |s: &crate::series::Series| -> Vec<f64> {
        (0..n).filter_map(|k| s.value_at(from + STEP * k as i32)).collect()
    };
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let load = grab(&data.load);
    let pv = grab(&data.pv);
    let price = grab(&data.price);
    let mut shifted = 0.0f64;
    for k in 0..n {
        let t = from + STEP * k as i32;
        let day = time::prev_switch(t, switch_hour);
        if let Some(p) = data.price.value_at(t) {
            let m = (0..time::STEPS_PER_DAY)
                .filter_map(|j| data.price.value_at(day + STEP * j as i32))
                .fold(f64::INFINITY, f64::min);
            shifted = shifted.max(p - m);
        }
    }
    let mut r = FeatureRanges::default();
    let set = |r: &mut FeatureRanges, f: Feature, lo: f64, hi: f64| {
        if lo.is_finite() && hi.is_finite() && hi > lo {
            r.lo[f.index()] = lo;
            r.hi[f.index()] = hi;
        }
    };
    set(&mut r, Feature::Load, 0.0, max(&load));
    set(&mut r, Feature::Pv, 0.0, max(&pv));
    set(&mut r, Feature::Price, min(&price), max(&price));
    set(&mut r, Feature::ShiftedPrice, 0.0, shifted);
    r
}

/// Simulated cost of a tree pair plus its leaf usage counts.
pub fn evaluate_trees(trees: &TreePair, sc: &TrainingScenario) -> Result<(f64, Vec<u64>, Vec<u64>), TreecError> {
    let mut ctrl = TreeController::new(trees.clone());
    let run = run_scenario(&sc.house, &sc.ev, &mut ctrl, &sc.data, sc.from, sc.to, &sc.opts)?;
    let cost = total_cost(&run.traces, &sc.data.price, &sc.opts.tariff)?;
    Ok((cost.total, ctrl.bess_usage, ctrl.ev_usage))
}

/// Total cost of the decoded genome over the training window.
pub fn fitness(genome: &[f64], sc: &TrainingScenario) -> Result<f64, TreecError> {
    let trees = decode(genome, sc.depth, &sc.ranges)?;
    Ok(evaluate_trees(&trees, sc)?.0)
}

/// Greedy pruning: repeatedly collapse the least-used leaf whose removal
/// keeps the cost within `(1 + threshold)` of the unpruned cost.
pub fn prune(trees: &TreePair, sc: &TrainingScenario, threshold: f64) -> Result<(TreePair, f64), TreecError> {
    let (base, _, _) = evaluate_trees(trees, sc)?;
    let limit = base * (1.0 + threshold);
    let limit = if base < 0.0 { base * (1.0 - threshold) } else { limit };
    let mut current = trees.clone();
    let mut current_cost = base;
    loop {
        let (_, bu, eu) = evaluate_trees(&current, sc)?;
        let mut cands: Vec<(u64, usize, usize)> = Vec::new();
        if current.bess.n_leaves() > 1 {
            cands.extend(bu.iter().enumerate().map(|(i, &u)| (u, 0, i)));
        }
        if current.ev.n_leaves() > 1 {
            cands.extend(eu.iter().enumerate().map(|(i, &u)| (u, 1, i)));
        }
        cands.sort();
        let mut accepted = false;
        for (_, which, leaf) in cands {
            let mut next = current.clone();
            let tree = if which == 0 { &mut next.bess } else { &mut next.ev };
            let Some(collapsed) = tree.collapse_leaf(leaf) else {
                continue;
            };
            *tree = collapsed;
            let (c, _, _) = evaluate_trees(&next, sc)?;
            if c <= limit {
                current = next;
                current_cost = c;
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Ok((current, current_cost));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub pso: PsoConfig,
    pub restarts: usize,
    pub prune_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pso: PsoConfig::default(),
            restarts: 5,
            prune_threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartResult {
    pub seed: u64,
    pub pso: PsoResult,
    pub unpruned: TreePair,
    pub pruned: TreePair,
    pub pruned_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub trees: TreePair,
    pub cost: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartResult>,
}

/// PSO per restart (seed, seed + 1, ...), prune each result, keep the
/// cheapest pruned policy.
pub fn train(sc: &TrainingScenario, cfg: &TrainConfig) -> Result<TrainResult, TreecError> {
    cfg.pso.validate().map_err(TreecError::Config)?;
    if cfg.restarts == 0 {
        return Err(TreecError::Config("at least one restart is required".into()));
    }
    // surface configuration and data errors before the swarm starts
    fitness(&vec![0.5; genome_len(sc.depth)], sc)?;
    let f = |g: &[f64]| fitness(g, sc).unwrap_or(f64::INFINITY);
    let mut restarts = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let seed = cfg.pso.seed.wrapping_add(r as u64);
        let pso = pso_optimize(&f, genome_len(sc.depth), &PsoConfig { seed, ..cfg.pso.clone() });
        let unpruned = decode(&pso.best, sc.depth, &sc.ranges)?;
        let (pruned, pruned_cost) = prune(&unpruned, sc, cfg.prune_threshold)?;
        restarts.push(RestartResult {
            seed,
            pso,
            unpruned,
            pruned,
            pruned_cost,
        });
    }
    let best = (0..restarts.len())
        .fold(0, |b, i| if restarts[i].pruned_cost < restarts[b].pruned_cost { i } else { b });
    Ok(TrainResult {
        trees: restarts[best].pruned.clone(),
        cost: restarts[best].pruned_cost,
        best_restart: best,
        restarts,
    })
}

/// Costs of `n` uniformly random genomes, in draw order.
pub fn random_genome_costs(sc: &TrainingScenario, n: usize, seed: u64) -> Vec<f64> {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = genome_len(sc.depth);
    let genomes: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    genomes
        .par_iter()
        .map(|g| fitness(g, sc).unwrap_or(f64::INFINITY))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{synthetic_house, SynthOptions};
    use crate::time::parse_local;

    fn scenario(days: i64) -> TrainingScenario {
        let start = parse_local("2024-06-03T00:00").unwrap();
        let house = HouseConfig::reference(1);
        let data = synthetic_house(&house, start, days as usize + 1, &SynthOptions::default());
        let from = start + chrono::TimeDelta::hours(15);
        TrainingScenario::new(
            house,
            EvParams::default(),
            data,
            from,
            from + chrono::TimeDelta::days(days),
            ScenarioOptions::default(),
            4,
        )
    }

    #[test]
    fn genome_dimensions() {
        assert_eq!(tree_genes(4), 46);
        assert_eq!(genome_len(4), 92);
        assert_eq!(tree_genes(0), 1);
        let r = FeatureRanges::default();
        assert!(matches!(decode(&[0.5; 10], 4, &r), Err(TreecError::Dimension { got: 10, expected: 92 })));
    }

    #[test]
    fn mid_genome_decodes_to_balanced_tree() {
        let r = FeatureRanges::default();
        let t = decode(&vec![0.5; genome_len(2)], 2, &r).unwrap();
        assert_eq!(t.bess.depth(), 2);
        assert_eq!(t.bess.n_leaves(), 4);
        match &t.bess {
            PolicyTree::Node { feature, threshold, .. } => {
                assert_eq!(*feature, Feature::Price);
                assert!((threshold - 0.2).abs() < 1e-12);
            }
            _ => panic!("expected a node"),
        }
        assert_eq!(t.bess.leaves(), vec![0.5; 4]);
    }

    #[test]
    fn encode_decode_round_trip() {
        let r = FeatureRanges::default();
        let hand = TreePair {
            bess: PolicyTree::node(
                Feature::ShiftedPrice,
                0.02,
                PolicyTree::node(Feature::BessSoc, 0.4, PolicyTree::Leaf(0.1), PolicyTree::Leaf(0.0)),
                PolicyTree::node(Feature::Hour, 17.0, PolicyTree::Leaf(0.0), PolicyTree::Leaf(0.9)),
            ),
            ev: PolicyTree::node(
                Feature::Price,
                0.1,
                PolicyTree::node(Feature::EvSoc, 0.5, PolicyTree::Leaf(1.0), PolicyTree::Leaf(0.5)),
                PolicyTree::node(Feature::Load, 3.0, PolicyTree::Leaf(0.3), PolicyTree::Leaf(0.0)),
            ),
        };
        let g = encode(&hand, 2, &r).unwrap();
        let back = decode(&g, 2, &r).unwrap();
        assert_eq!(back.bess.to_string().len() > 0, true);
        let same_structure = |a: &PolicyTree, b: &PolicyTree| a.leaves() == b.leaves() && a.depth() == b.depth();
        assert!(same_structure(&hand.bess, &back.bess) && same_structure(&hand.ev, &back.ev));
        let obs_close = |a: &PolicyTree, b: &PolicyTree| -> bool {
            match (a, b) {
                (
                    PolicyTree::Node { feature: f1, threshold: t1, .. },
                    PolicyTree::Node { feature: f2, threshold: t2, .. },
                ) => f1 == f2 && (t1 - t2).abs() < 1e-12,
                _ => false,
            }
        };
        assert!(obs_close(&hand.bess, &back.bess) && obs_close(&hand.ev, &back.ev));
        assert!(encode(&hand, 3, &r).is_err());
    }

    #[test]
    fn one_leaf_gene_changes_one_leaf() {
        let r = FeatureRanges::default();
        let mut g = vec![0.3; genome_len(3)];
        let a = decode(&g, 3, &r).unwrap();
        g[tree_genes(3) - 2] = 0.9;
        let b = decode(&g, 3, &r).unwrap();
        let (la, lb) = (a.bess.leaves(), b.bess.leaves());
        assert_eq!(la.iter().zip(&lb).filter(|(x, y)| x != y).count(), 1);
        assert_eq!(a.ev, b.ev);
    }

    #[test]
    fn fitness_is_pure_and_matches_a_direct_run() {
        let sc = scenario(2);
        let g = vec![0.37; genome_len(4)];
        let a = fitness(&g, &sc).unwrap();
        assert_eq!(a, fitness(&g, &sc).unwrap());
        let trees = decode(&g, 4, &sc.ranges).unwrap();
        let mut ctrl = TreeController::new(trees);
        let run = run_scenario(&sc.house, &sc.ev, &mut ctrl, &sc.data, sc.from, sc.to, &sc.opts).unwrap();
        let direct = total_cost(&run.traces, &sc.data.price, &sc.opts.tariff).unwrap().total;
        assert_eq!(a, direct);
    }

    #[test]
    fn unused_leaf_is_pruned_without_cost_change() {
        let sc = scenario(2);
        // hour is never negative, so the left leaf is never visited
        let trees = TreePair {
            bess: PolicyTree::node(Feature::Hour, -1.0, PolicyTree::Leaf(0.9), PolicyTree::Leaf(0.0)),
            ev: PolicyTree::Leaf(1.0),
        };
        let (base, usage, _) = evaluate_trees(&trees, &sc).unwrap();
        assert_eq!(usage[0], 0);
        let (pruned, cost) = prune(&trees, &sc, 0.01).unwrap();
        assert_eq!(pruned.bess, PolicyTree::Leaf(0.0));
        assert_eq!(cost, base);
        let single = TreePair {
            bess: PolicyTree::Leaf(0.0),
            ev: PolicyTree::Leaf(1.0),
        };
        assert_eq!(prune(&single, &sc, 0.01).unwrap().0, single);
    }

    #[test]
    fn training_is_reproducible() {
        let sc = scenario(1);
        let cfg = TrainConfig {
            pso: PsoConfig {
                population: 6,
                generations: 3,
                seed: 11,
                ..Default::default()
            },
            restarts: 2,
            prune_threshold: 0.01,
        };
        let a = train(&sc, &cfg).unwrap();
        let b = train(&sc, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.restarts.len(), 2);
        for r in &a.restarts {
            let unpruned = evaluate_trees(&r.unpruned, &sc).unwrap().0;
            assert!(r.pruned_cost <= unpruned * 1.01 + 1e-12);
            assert!(r.pso.history.windows(2).all(|w| w[1] <= w[0]));
        }
        let one = train(&sc, &TrainConfig { restarts: 1, ..cfg.clone() }).unwrap();
        assert_eq!(one.restarts[0], a.restarts[0]);
    }
}
