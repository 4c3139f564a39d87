#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use xspn_core::leaves::{BernoulliLeaf, ChowLiuLeaf, ExchangeableLeaf, FactorizedLeaf, LeafDistribution};
use xspn_core::model::{Node, NodeId, NodeKind};
use xspn_core::{Network, PartialEvidence, Scope, VariableId};

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Binomial coefficient by multiplication in f64.
pub fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn simplex(rng: &mut Xoshiro256PlusPlus, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn prob(rng: &mut Xoshiro256PlusPlus) -> f64 {
    rng.random_range(0.05..0.95)
}

pub fn random_exchangeable(rng: &mut Xoshiro256PlusPlus, vars: &[usize]) -> ExchangeableLeaf {
    let n = vars.len();
    let weights = simplex(rng, n + 1)
        .into_iter()
        .enumerate()
        .map(|(t, q)| q / choose(n, t))
        .collect();
    ExchangeableLeaf::new(Scope::from_indices(vars.iter().copied()).unwrap(), weights).unwrap()
}

fn random_leaf(rng: &mut Xoshiro256PlusPlus, vars: &[usize]) -> LeafDistribution {
    let scope = Scope::from_indices(vars.iter().copied()).unwrap();
    if vars.len() == 1 {
        return BernoulliLeaf::new(VariableId(vars[0]), prob(rng)).into();
    }
    match rng.random_range(0..3) {
        0 => FactorizedLeaf::new(vars.iter().map(|&v| BernoulliLeaf::new(VariableId(v), prob(rng))).collect()).into(),
        1 => random_exchangeable(rng, vars).into(),
        _ => {
            let n = vars.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            let mut parents = vec![None; n];
            for k in 1..n {
                parents[perm[k]] = Some(perm[rng.random_range(0..k)]);
            }
            let cpt = parents
                .iter()
                .map(|p| {
                    let rows = if p.is_some() { 2 } else { 1 };
                    (0..rows)
                        .map(|_| {
                            let q = prob(rng);
                            [1.0 - q, q]
                        })
                        .collect()
                })
                .collect();
            ChowLiuLeaf::new(scope, parents, cpt).unwrap().into()
        }
    }
}

fn build(rng: &mut Xoshiro256PlusPlus, vars: &[usize], depth: usize, nodes: &mut Vec<Node>) -> NodeId {
    let scope = Scope::from_indices(vars.iter().copied()).unwrap();
    let roll: f64 = rng.random();
    let node = if depth >= 4 || roll < 0.25 {
        Node::leaf(random_leaf(rng, vars))
    } else if roll < 0.6 && vars.len() >= 2 {
        let mut shuffled = vars.to_vec();
        shuffled.shuffle(rng);
        let parts = rng.random_range(2..=vars.len().min(3));
        let mut cuts: Vec<usize> = rand::seq::index::sample(rng, vars.len() - 1, parts - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(vars.len());
        let children = cuts
            .windows(2)
            .map(|w| {
                let mut group = shuffled[w[0]..w[1]].to_vec();
                group.sort_unstable();
                build(rng, &group, depth + 1, nodes)
            })
            .collect();
        Node {
            scope,
            kind: NodeKind::Product { children },
        }
    } else {
        let k = rng.random_range(2..=3);
        let weights = simplex(rng, k);
        let children = (0..k).map(|_| build(rng, vars, depth + 1, nodes)).collect();
        Node {
            scope,
            kind: NodeKind::Sum { children, weights },
        }
    };
    nodes.push(node);
    NodeId(nodes.len() - 1)
}

/// A random valid network over `n` variables mixing all node and leaf kinds.
pub fn random_network(seed: u64, n: usize) -> Network {
    let mut rng = rng(seed);
    let vars: Vec<usize> = (0..n).collect();
    let mut nodes = Vec::new();
    let root = build(&mut rng, &vars, 0, &mut nodes);
    Network::new(nodes, root, n)
}

fn leaf_probability(leaf: &LeafDistribution, x: &[u8]) -> f64 {
    let bern = |b: &BernoulliLeaf| if x[b.variable.0] == 1 { b.p_one } else { 1.0 - b.p_one };
    match leaf {
        LeafDistribution::Bernoulli(b) => bern(b),
        LeafDistribution::Factorized(f) => f.factors().iter().map(bern).product(),
        LeafDistribution::Exchangeable(e) => {
            let t = e.scope().iter().filter(|v| x[v.0] == 1).count();
            e.weights()[t]
        }
        LeafDistribution::ChowLiu(c) => {
            let vars = c.scope().vars();
            (0..vars.len())
                .map(|i| {
                    let row = c.parents()[i].map_or(0, |p| x[vars[p].0] as usize);
                    c.cpt()[i][row][x[vars[i].0] as usize]
                })
                .product()
        }
    }
}

fn node_probability(net: &Network, id: NodeId, x: &[u8]) -> f64 {
    match &net.node(id).kind {
        NodeKind::Leaf(leaf) => leaf_probability(leaf, x),
        NodeKind::Product { children } => children.iter().map(|&c| node_probability(net, c, x)).product(),
        NodeKind::Sum { children, weights } => children
            .iter()
            .zip(weights)
            .map(|(&c, w)| w * node_probability(net, c, x))
            .sum(),
    }
}

/// `P(x)` computed directly from node definitions in linear space.
pub fn brute_probability(net: &Network, x: &[u8]) -> f64 {
    node_probability(net, net.root(), x)
}

pub fn assignment(bits: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((bits >> i) & 1) as u8).collect()
}

/// `P(e)` by summing the brute-force joint over all completions.
pub fn brute_marginal(net: &Network, e: &PartialEvidence) -> f64 {
    let n = net.variable_count();
    (0..1usize << n)
        .map(|bits| assignment(bits, n))
        .filter(|x| (0..n).all(|i| e.values().get(i).copied().flatten().is_none_or(|v| v == x[i])))
        .map(|x| brute_probability(net, &x))
        .sum()
}

pub fn relative_error(actual: f64, expected: f64) -> f64 {
    ((actual - expected) / expected).abs()
}
