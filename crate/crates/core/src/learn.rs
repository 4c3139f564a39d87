//! Recursive structure learning of exchangeability-aware networks.
//!
//! Each call on `(rows, variables)` applies, in order:
//! 1. fewer than `min_instances` rows: fallback leaf;
//! 2. a single variable: Bernoulli leaf;
//! 3. (XSPN variants) exchangeability not rejected: exchangeable leaf;
//! 4. variables split into independent groups: product node;
//! 5. otherwise cluster rows into a sum node, or fall back to a leaf when the
//!    clustering leaves a cluster empty.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::leaves::{BernoulliLeaf, ChowLiuLeaf, ExchangeableLeaf, FactorizedLeaf, LeafDistribution};
use crate::model::{Network, Node, NodeId, NodeKind, Scope, VariableId};
use crate::stats::{self, ClusterOutcome, PairCorrection};

/// Which leaf families the learner may create.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Univariate leaves, factorized fallback.
    Spn,
    /// Univariate leaves, Chow-Liu fallback.
    SpnClt,
    /// Test-driven exchangeable leaves, factorized fallback.
    XspnT,
    /// Test-driven exchangeable leaves, exchangeable fallback.
    XspnTf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Spn, Variant::SpnClt, Variant::XspnT, Variant::XspnTf];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Spn => "SPN",
            Variant::SpnClt => "SPN_CLT",
            Variant::XspnT => "XSPN_T",
            Variant::XspnTf => "XSPN_TF",
        }
    }

    pub fn tests_exchangeability(self) -> bool {
        matches!(self, Variant::XspnT | Variant::XspnTf)
    }
}

impl std::str::FromStr for Variant {
    type Err = XspnError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| XspnError::input(format!("unknown variant {s:?}")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which exchangeability test the learner runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestMode {
    /// Two-variable test on every pair, `O(N n²)`.
    Pairwise,
    /// Test over all `2^n` cells; limited to `full_test_max_vars`.
    Full,
}

impl std::str::FromStr for TestMode {
    type Err = XspnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pairwise" => Ok(TestMode::Pairwise),
            "full" => Ok(TestMode::Full),
            _ => Err(XspnError::input(format!("unknown test mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// g-test threshold on the raw statistic.
    pub rho: f64,
    pub min_instances: usize,
    /// Significance level of the exchangeability test.
    pub exch_significance: f64,
    /// Laplace smoothing for every estimated parameter.
    pub alpha: f64,
    pub variant: Variant,
    pub max_children: usize,
    pub seed: u64,
    pub full_test_max_vars: usize,
    pub test_mode: TestMode,
    pub pair_correction: PairCorrection,
    /// Rows beyond this are subsampled before the exchangeability test.
    pub test_max_rows: usize,
    pub max_depth: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            rho: 5.0,
            min_instances: 200,
            exch_significance: 0.1,
            alpha: 0.1,
            variant: Variant::XspnTf,
            max_children: 2,
            seed: 0,
            full_test_max_vars: stats::exchangeability::DEFAULT_FULL_TEST_MAX_VARS,
            test_mode: TestMode::Pairwise,
            pair_correction: PairCorrection::Bonferroni,
            test_max_rows: 2000,
            max_depth: 200,
        }
    }
}

impl Hyperparams {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(XspnError::input(format!("rho must be positive, got {}", self.rho)));
        }
        if self.min_instances < 1 {
            return Err(XspnError::input("min_instances must be at least 1"));
        }
        if !(self.exch_significance > 0.0 && self.exch_significance < 1.0) {
            return Err(XspnError::input(format!(
                "exchangeability significance must lie in (0,1), got {}",
                self.exch_significance
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(XspnError::input(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.max_children < 2 {
            return Err(XspnError::input("max_children must be at least 2"));
        }
        if self.test_max_rows < 1 {
            return Err(XspnError::input("test_max_rows must be at least 1"));
        }
        Ok(())
    }

    /// The grid of `(rho, min_instances, p)` used for model selection.
    pub fn grid(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for rho in [5.0, 15.0] {
            for m in [20, 200] {
                for p in [0.05, 0.1, 0.2, 0.4] {
                    out.push(Hyperparams {
                        rho,
                        min_instances: m,
                        exch_significance: p,
                        ..self.clone()
                    });
                }
            }
        }
        out
    }
}

/// Counters collected while learning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnStats {
    pub exchangeability_tests: usize,
    /// Cells summed by all exchangeability tests.
    pub test_cells: usize,
    pub test_seconds: f64,
    pub clusterings: usize,
    pub degenerate_clusterings: usize,
}

#[derive(Default)]
struct Counters {
    tests: AtomicUsize,
    cells: AtomicUsize,
    test_nanos: AtomicU64,
    clusterings: AtomicUsize,
    degenerate: AtomicUsize,
}

/// Learned structure before it is laid out in a flat node array.
enum Tree {
    Leaf(LeafDistribution),
    Product(Scope, Vec<Tree>),
    Sum(Scope, Vec<(f64, Tree)>),
}

struct Learner<'a> {
    data: &'a BinaryDataset,
    hp: &'a Hyperparams,
    counters: Counters,
}

/// SplitMix64 finalizer over `(seed, stream)`.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SUBSAMPLE_STREAM: u64 = u64::MAX;
const CLUSTER_STREAM: u64 = u64::MAX - 1;

fn scope_of(vars: &[usize]) -> Scope {
    Scope::from_sorted(vars.iter().copied().map(VariableId).collect()).expect("task variables are sorted")
}

impl<'a> Learner<'a> {
    fn subset(&self, rows: &[usize], vars: &[usize]) -> BinaryDataset {
        let mut values = Vec::with_capacity(rows.len() * vars.len());
        for &r in rows {
            let row = self.data.row(r);
            values.extend(vars.iter().map(|&v| row[v]));
        }
        BinaryDataset::new(rows.len(), vars.len(), values).expect("binary subset")
    }

    fn fallback_leaf(&self, sub: &BinaryDataset, vars: &[usize]) -> LeafDistribution {
        let scope = scope_of(vars);
        let alpha = self.hp.alpha;
        match self.hp.variant {
            Variant::Spn | Variant::XspnT => FactorizedLeaf::fit(&scope, sub, alpha).into(),
            Variant::SpnClt if vars.len() == 1 => FactorizedLeaf::fit(&scope, sub, alpha).into(),
            Variant::SpnClt => ChowLiuLeaf::fit(scope, sub, alpha).into(),
            Variant::XspnTf if vars.len() == 1 => bernoulli(vars[0], sub, alpha).into(),
            Variant::XspnTf => ExchangeableLeaf::fit(scope, sub, alpha).into(),
        }
    }

    fn exchangeable(&self, sub: &BinaryDataset, seed: u64) -> Result<bool> {
        let start = Instant::now();
        let tested;
        let sampled = if sub.rows() > self.hp.test_max_rows {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, SUBSAMPLE_STREAM));
            let mut idx = rand::seq::index::sample(&mut rng, sub.rows(), self.hp.test_max_rows).into_vec();
            idx.sort_unstable();
            Some(sub.select_rows(&idx))
        } else {
            None
        };
        let test_data = sampled.as_ref().unwrap_or(sub);
        let p = self.hp.exch_significance;
        let verdict = match self.hp.test_mode {
            TestMode::Pairwise => {
                let r = stats::chi2_exchangeability_pairwise(test_data, p, self.hp.pair_correction);
                tested = r.cells();
                r.verdict
            }
            TestMode::Full => {
                let r = stats::chi2_exchangeability_full(test_data, p, self.hp.full_test_max_vars)?;
                tested = r.cells;
                r.verdict
            }
        };
        self.counters.tests.fetch_add(1, Ordering::Relaxed);
        self.counters.cells.fetch_add(tested, Ordering::Relaxed);
        self.counters
            .test_nanos
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        Ok(verdict.is_exchangeable())
    }

    fn learn(&self, rows: &[usize], vars: &[usize], depth: usize, seed: u64) -> Result<Tree> {
        if depth > self.hp.max_depth {
            return Err(XspnError::capacity(format!(
                "recursion depth exceeded {}",
                self.hp.max_depth
            )));
        }
        let sub = self.subset(rows, vars);
        let alpha = self.hp.alpha;

        if rows.len() < self.hp.min_instances {
            return Ok(Tree::Leaf(self.fallback_leaf(&sub, vars)));
        }
        if vars.len() == 1 {
            return Ok(Tree::Leaf(bernoulli(vars[0], &sub, alpha).into()));
        }
        if self.hp.variant.tests_exchangeability() && self.exchangeable(&sub, seed)? {
            return Ok(Tree::Leaf(ExchangeableLeaf::fit(scope_of(vars), &sub, alpha).into()));
        }

        let groups = stats::split_variables(&sub, self.hp.rho, alpha);
        if groups.len() >= 2 {
            let groups: Vec<Vec<usize>> = groups
                .into_iter()
                .map(|g| g.into_iter().map(|local| vars[local]).collect())
                .collect();
            let children = groups
                .par_iter()
                .enumerate()
                .map(|(b, g)| self.learn(rows, g, depth + 1, derive_seed(seed, b as u64)))
                .collect::<Result<Vec<_>>>()?;
            return Ok(fold_products(groups, children, self.hp.max_children));
        }

        self.counters.clusterings.fetch_add(1, Ordering::Relaxed);
        match stats::cluster_rows(&sub, self.hp.max_children, derive_seed(seed, CLUSTER_STREAM)) {
            ClusterOutcome::Degenerate => {
                self.counters.degenerate.fetch_add(1, Ordering::Relaxed);
                Ok(Tree::Leaf(self.fallback_leaf(&sub, vars)))
            }
            ClusterOutcome::Partition(partition) => {
                let parts: Vec<Vec<usize>> = partition
                    .groups()
                    .into_iter()
                    .map(|g| g.into_iter().map(|local| rows[local]).collect())
                    .collect();
                let total = rows.len() as f64;
                let children = parts
                    .par_iter()
                    .enumerate()
                    .map(|(b, part)| {
                        let child = self.learn(part, vars, depth + 1, derive_seed(seed, b as u64))?;
                        Ok((part.len() as f64 / total, child))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Tree::Sum(scope_of(vars), children))
            }
        }
    }
}

fn bernoulli(var: usize, sub: &BinaryDataset, alpha: f64) -> BernoulliLeaf {
    BernoulliLeaf::fit(VariableId(var), sub.iter_rows().map(|r| r[0]), alpha)
}

/// Nests groups so no product exceeds `max_children`: the first `max_children − 1`
/// groups become direct children and the rest recurse into the last child.
fn fold_products(groups: Vec<Vec<usize>>, mut children: Vec<Tree>, max_children: usize) -> Tree {
    debug_assert_eq!(groups.len(), children.len());
    if children.len() == 1 {
        return children.pop().expect("one child");
    }
    let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
    all.sort_unstable();
    let scope = scope_of(&all);
    if children.len() <= max_children {
        return Tree::Product(scope, children);
    }
    let head = max_children - 1;
    let rest_children = children.split_off(head);
    let rest_groups = groups[head..].to_vec();
    children.push(fold_products(rest_groups, rest_children, max_children));
    Tree::Product(scope, children)
}

/// Lays the tree out children-first; the root is the last node.
fn flatten(tree: Tree, nodes: &mut Vec<Node>) -> NodeId {
    let node = match tree {
        Tree::Leaf(dist) => Node::leaf(dist),
        Tree::Product(scope, children) => {
            let children = children.into_iter().map(|c| flatten(c, nodes)).collect();
            Node {
                scope,
                kind: NodeKind::Product { children },
            }
        }
        Tree::Sum(scope, children) => {
            let (weights, ids) = children
                .into_iter()
                .map(|(w, c)| (w, flatten(c, nodes)))
                .unzip();
            Node {
                scope,
                kind: NodeKind::Sum {
                    children: ids,
                    weights,
                },
            }
        }
    };
    nodes.push(node);
    NodeId(nodes.len() - 1)
}

/// Learns a network over all columns of `data`.
pub fn learn(data: &BinaryDataset, hp: &Hyperparams) -> Result<Network> {
    learn_with_stats(data, hp).map(|(net, _)| net)
}

pub fn learn_with_stats(data: &BinaryDataset, hp: &Hyperparams) -> Result<(Network, LearnStats)> {
    hp.check()?;
    if data.rows() == 0 {
        return Err(XspnError::input("cannot learn from an empty dataset"));
    }
    if data.cols() == 0 {
        return Err(XspnError::input("cannot learn without variables"));
    }
    if hp.test_mode == TestMode::Full && hp.variant.tests_exchangeability() {
        // fail before doing any work rather than deep inside the recursion
        let cap = hp
            .full_test_max_vars
            .min(stats::exchangeability::FULL_TEST_HARD_MAX_VARS);
        if data.cols() > cap {
            return Err(XspnError::capacity(format!(
                "full exchangeability test supports at most {cap} variables, data has {}",
                data.cols()
            )));
        }
    }
    let learner = Learner {
        data,
        hp,
        counters: Counters::default(),
    };
    let rows: Vec<usize> = (0..data.rows()).collect();
    let vars: Vec<usize> = (0..data.cols()).collect();
    let tree = learner.learn(&rows, &vars, 0, hp.seed)?;
    let mut nodes = Vec::new();
    let root = flatten(tree, &mut nodes);
    let net = Network::new(nodes, root, data.cols());
    let c = &learner.counters;
    let stats = LearnStats {
        exchangeability_tests: c.tests.load(Ordering::Relaxed),
        test_cells: c.cells.load(Ordering::Relaxed),
        test_seconds: c.test_nanos.load(Ordering::Relaxed) as f64 * 1e-9,
        clusterings: c.clusterings.load(Ordering::Relaxed),
        degenerate_clusterings: c.degenerate.load(Ordering::Relaxed),
    };
    Ok((net, stats))
}

/// Sum weights plus leaf parameters.
pub fn count_parameters(network: &Network) -> usize {
    network.parameter_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaves::LeafKind;
    use rand::Rng;

    fn exchangeable_rows(rng: &mut Xoshiro256PlusPlus, n: usize, count: usize) -> Vec<Vec<u8>> {
        // number of ones drawn from a skewed law, then placed uniformly
        (0..count)
            .map(|_| {
                let t = if rng.random_bool(0.6) { rng.random_range(0..=n / 3) } else { n - rng.random_range(0..=1) };
                let mut row = vec![0u8; n];
                for i in rand::seq::index::sample(rng, n, t) {
                    row[i] = 1;
                }
                row
            })
            .collect()
    }

    #[test]
    fn single_variable_dataset() {
        let data = BinaryDataset::from_rows(&vec![[1u8]; 300]).unwrap();
        let net = learn(&data, &Hyperparams::default()).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net.leaf_census().get(&LeafKind::Bernoulli), Some(&1));
        assert!(net.validate().is_empty());
    }

    #[test]
    fn few_rows_give_single_exchangeable_leaf() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(0);
        let data = BinaryDataset::from_rows(&exchangeable_rows(&mut rng, 5, 50)).unwrap();
        let hp = Hyperparams {
            min_instances: 100,
            ..Hyperparams::with_variant(Variant::XspnTf)
        };
        let net = learn(&data, &hp).unwrap();
        assert_eq!(net.len(), 1);
        assert!(matches!(net.root_node().kind, NodeKind::Leaf(LeafDistribution::Exchangeable(_))));
        assert_eq!(count_parameters(&net), 6);
    }

    #[test]
    fn empty_inputs_rejected() {
        let data = BinaryDataset::new(0, 3, vec![]).unwrap();
        assert!(matches!(learn(&data, &Hyperparams::default()), Err(XspnError::Input(_))));
        let data = BinaryDataset::new(3, 0, vec![]).unwrap();
        assert!(matches!(learn(&data, &Hyperparams::default()), Err(XspnError::Input(_))));
        let bad = Hyperparams {
            exch_significance: 1.5,
            ..Hyperparams::default()
        };
        let data = BinaryDataset::from_rows(&[[0u8, 1]]).unwrap();
        assert!(learn(&data, &bad).is_err());
    }

    #[test]
    fn fold_products_respects_fan_out() {
        let leaves: Vec<Tree> = (0..5)
            .map(|v| Tree::Leaf(BernoulliLeaf::new(VariableId(v), 0.5).into()))
            .collect();
        let groups: Vec<Vec<usize>> = (0..5).map(|v| vec![v]).collect();
        let mut nodes = Vec::new();
        let root = flatten(fold_products(groups, leaves, 2), &mut nodes);
        let net = Network::new(nodes, root, 5);
        assert!(net.validate().is_empty());
        assert!(net.nodes().iter().all(|n| n.children().len() <= 2));
        assert_eq!(net.depth().unwrap(), 4);
    }

    #[test]
    fn full_test_capacity_checked_up_front() {
        let data = BinaryDataset::from_rows(&[vec![0u8; 10]]).unwrap();
        let hp = Hyperparams {
            test_mode: TestMode::Full,
            ..Hyperparams::default()
        };
        assert!(matches!(learn(&data, &hp), Err(XspnError::Capacity(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
