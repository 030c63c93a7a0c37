//! Decision-tree policies: evaluation, action mapping and text formats.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{Controller, DecisionEnv, Observation};
use crate::sim::{ActionPair, BessAction, EvParams, HouseConfig, StepTrace};

/// Observation features a tree can split on, in genome order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Load,
    Pv,
    BessSoc,
    EvSoc,
    Price,
    Hour,
    Weekday,
    ShiftedPrice,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Load,
        Feature::Pv,
        Feature::BessSoc,
        Feature::EvSoc,
        Feature::Price,
        Feature::Hour,
        Feature::Weekday,
        Feature::ShiftedPrice,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Load => "load",
            Feature::Pv => "pv",
            Feature::BessSoc => "bess_soc",
            Feature::EvSoc => "ev_soc",
            Feature::Price => "price",
            Feature::Hour => "hour",
            Feature::Weekday => "weekday",
            Feature::ShiftedPrice => "shifted_price",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Missing EV SOC reads as 0.
    pub fn value(self, obs: &Observation) -> f64 {
        match self {
            Feature::Load => obs.load,
            Feature::Pv => obs.pv,
            Feature::BessSoc => obs.bess_soc,
            Feature::EvSoc => obs.ev_soc.unwrap_or(0.0),
            Feature::Price => obs.price,
            Feature::Hour => obs.hour,
            Feature::Weekday => obs.weekday as f64,
            Feature::ShiftedPrice => obs.shifted_price,
        }
    }
}

/// Value range per feature, used to denormalize genome thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanges {
    pub lo: [f64; 8],
    pub hi: [f64; 8],
}

impl FeatureRanges {
    pub fn range(&self, f: Feature) -> (f64, f64) {
        (self.lo[f.index()], self.hi[f.index()])
    }

    pub fn denormalize(&self, f: Feature, x: f64) -> f64 {
        let (lo, hi) = self.range(f);
        lo + x * (hi - lo)
    }

    pub fn normalize(&self, f: Feature, v: f64) -> f64 {
        let (lo, hi) = self.range(f);
        if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

impl Default for FeatureRanges {
    fn default() -> Self {
        Self {
            lo: [0.0, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0],
            hi: [10.0, 6.0, 1.0, 1.0, 0.5, 24.0, 7.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyTree {
    Leaf(f64),
    Node {
        feature: Feature,
        threshold: f64,
        left: Box<PolicyTree>,
        right: Box<PolicyTree>,
    },
}

impl PolicyTree {
    pub fn node(feature: Feature, threshold: f64, left: PolicyTree, right: PolicyTree) -> Self {
        PolicyTree::Node {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaf value and its index in depth-first (left before right) order.
    pub fn eval_leaf(&self, obs: &Observation) -> (f64, usize) {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                PolicyTree::Leaf(v) => return (*v, offset),
                PolicyTree::Node {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature.value(obs) < *threshold {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    pub fn eval(&self, obs: &Observation) -> f64 {
        self.eval_leaf(obs).0
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            PolicyTree::Leaf(_) => 1,
            PolicyTree::Node { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PolicyTree::Leaf(_) => 0,
            PolicyTree::Node { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        let mut out = Vec::new();
        fn walk(t: &PolicyTree, out: &mut Vec<f64>) {
            match t {
                PolicyTree::Leaf(v) => out.push(*v),
                PolicyTree::Node { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Removes leaf `idx` by replacing its parent with the sibling subtree.
    /// `None` for a single-leaf tree or an out-of-range index.
    pub fn collapse_leaf(&self, idx: usize) -> Option<PolicyTree> {
        match self {
            PolicyTree::Leaf(_) => None,
            PolicyTree::Node {
                feature,
                threshold,
                left,
                right,
            } => {
                let nl = left.n_leaves();
                if idx < nl {
                    if matches!(**left, PolicyTree::Leaf(_)) {
                        return Some((**right).clone());
                    }
                    let l = left.collapse_leaf(idx)?;
                    Some(PolicyTree::node(*feature, *threshold, l, (**right).clone()))
                } else {
                    if matches!(**right, PolicyTree::Leaf(_)) {
                        return (idx == nl).then(|| (**left).clone());
                    }
                    let r = right.collapse_leaf(idx - nl)?;
                    Some(PolicyTree::node(*feature, *threshold, (**left).clone(), r))
                }
            }
        }
    }

    /// Graph description for plotting with Graphviz.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph {name} {{\n  node [shape=box];\n");
        let mut next = 0usize;
        fn walk(t: &PolicyTree, out: &mut String, next: &mut usize) -> usize {
            let id = *next;
            *next += 1;
            match t {
                PolicyTree::Leaf(v) => {
                    out.push_str(&format!("  n{id} [label=\"{v:.3}\", shape=ellipse];\n"));
                }
                PolicyTree::Node {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push_str(&format!("  n{id} [label=\"{} < {threshold:.4}\"];\n", feature.name()));
                    let l = walk(left, out, next);
                    let r = walk(right, out, next);
                    out.push_str(&format!("  n{id} -> n{l} [label=\"yes\"];\n"));
                    out.push_str(&format!("  n{id} -> n{r} [label=\"no\"];\n"));
                }
            }
            id
        }
        walk(self, &mut out, &mut next);
        out.push_str("}\n");
        out
    }
}

/// `(feature threshold left right)` for nodes, a bare number for leaves.
impl fmt::Display for PolicyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyTree::Leaf(v) => write!(f, "{v:?}"),
            PolicyTree::Node {
                feature,
                threshold,
                left,
                right,
            } => write!(f, "({} {threshold:?} {left} {right})", feature.name()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeParseError {
    #[error("unexpected end of input")]
    Eof,
    #[error("unexpected token `{0}`")]
    Unexpected(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("bad number `{0}`")]
    BadNumber(String),
    #[error("missing line `{0}:`")]
    MissingTree(&'static str),
}

fn tokenize(s: &str) -> Vec<String> {
    s.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn parse_tree(tokens: &[String], pos: &mut usize) -> Result<PolicyTree, TreeParseError> {
    let tok = tokens.get(*pos).ok_or(TreeParseError::Eof)?;
    *pos += 1;
    if tok == "(" {
        let name = tokens.get(*pos).ok_or(TreeParseError::Eof)?;
        let feature = Feature::from_name(name).ok_or_else(|| TreeParseError::UnknownFeature(name.clone()))?;
        *pos += 1;
        let th = tokens.get(*pos).ok_or(TreeParseError::Eof)?;
        let threshold: f64 = th.parse().map_err(|_| TreeParseError::BadNumber(th.clone()))?;
        *pos += 1;
        let left = parse_tree(tokens, pos)?;
        let right = parse_tree(tokens, pos)?;
        match tokens.get(*pos) {
            Some(t) if t == ")" => *pos += 1,
            Some(t) => return Err(TreeParseError::Unexpected(t.clone())),
            None => return Err(TreeParseError::Eof),
        }
        Ok(PolicyTree::node(feature, threshold, left, right))
    } else if tok == ")" {
        Err(TreeParseError::Unexpected(tok.clone()))
    } else {
        tok.parse()
            .map(PolicyTree::Leaf)
            .map_err(|_| TreeParseError::BadNumber(tok.clone()))
    }
}

impl FromStr for PolicyTree {
    type Err = TreeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(s);
        let mut pos = 0;
        let t = parse_tree(&tokens, &mut pos)?;
        match tokens.get(pos) {
            None => Ok(t),
            Some(extra) => Err(TreeParseError::Unexpected(extra.clone())),
        }
    }
}

pub fn tree_eval(tree: &PolicyTree, obs: &Observation) -> f64 {
    tree.eval(obs)
}

/// Below 0.1 the BESS does self-consumption; above, the value spans
/// full charge (0.1) to full discharge (1.0).
pub fn bess_action_map(value: f64, house: &HouseConfig) -> BessAction {
    if value < 0.1 {
        BessAction::SelfConsumption
    } else {
        let x = ((value - 0.1) / 0.9).clamp(0.0, 1.0);
        BessAction::Power(-house.bess_max_charge + x * (house.bess_max_charge + house.bess_max_discharge))
    }
}

pub fn ev_action_map(value: f64, ev: &EvParams) -> f64 {
    value.clamp(0.0, 1.0) * ev.p_max
}

pub fn tree_action_map(bess_value: f64, ev_value: f64, house: &HouseConfig, ev: &EvParams) -> ActionPair {
    ActionPair {
        bess: bess_action_map(bess_value, house),
        ev: ev_action_map(ev_value, ev),
    }
}

/// One tree for the BESS and one for the EV charger.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePair {
    pub bess: PolicyTree,
    pub ev: PolicyTree,
}

impl fmt::Display for TreePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bess: {}", self.bess)?;
        writeln!(f, "ev: {}", self.ev)
    }
}

impl FromStr for TreePair {
    type Err = TreeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let find = |key: &'static str| {
            s.lines()
                .find_map(|l| l.trim().strip_prefix(key).and_then(|r| r.strip_prefix(':')))
                .ok_or(TreeParseError::MissingTree(key))
        };
        Ok(Self {
            bess: find("bess")?.parse()?,
            ev: find("ev")?.parse()?,
        })
    }
}

/// Tree policy; counts how often each leaf is used.
#[derive(Debug, Clone)]
pub struct TreeController {
    pub trees: TreePair,
    pub bess_usage: Vec<u64>,
    pub ev_usage: Vec<u64>,
}

impl TreeController {
    pub fn new(trees: TreePair) -> Self {
        let bess_usage = vec![0; trees.bess.n_leaves()];
        let ev_usage = vec![0; trees.ev.n_leaves()];
        Self {
            trees,
            bess_usage,
            ev_usage,
        }
    }
}

impl Controller for TreeController {
    fn name(&self) -> &str {
        "TreeC"
    }

    fn decide(&mut self, obs: &Observation, env: &DecisionEnv) -> ActionPair {
        let (bv, bi) = self.trees.bess.eval_leaf(obs);
        self.bess_usage[bi] += 1;
        let ev = if obs.session.is_some() {
            let (ev_v, ei) = self.trees.ev.eval_leaf(obs);
            self.ev_usage[ei] += 1;
            ev_action_map(ev_v, env.ev)
        } else {
            0.0
        };
        ActionPair {
            bess: bess_action_map(bv, env.house),
            ev,
        }
    }

    fn record(&mut self, _trace: &StepTrace) {}
}
