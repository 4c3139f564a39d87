//! Seeded synthetic data: constraint datasets, labeled constraint tasks and
//! samples from mixtures of exchangeable blocks (MEVMs).
//!
//! # Random source
//!
//! All generators use xoshiro256++ (`rand_xoshiro::Xoshiro256PlusPlus`). The
//! base generator is seeded with `seed_from_u64(seed)`, which expands the 64-bit
//! seed into the 256-bit state with SplitMix64. Row `i` draws from its own
//! stream: the base state advanced by `i` calls of `jump()` (2^128 steps each), so
//! rows are independent of how generation is scheduled across threads.
//!
//! A uniform candidate over `{0,1}^n` takes `ceil(n/64)` words from `next_u64`;
//! variable `j` is bit `j % 64` (least significant first) of word `j / 64`.
//! Constraint datasets repeat candidates within the row's stream until one is
//! accepted. Labeled datasets take the first candidate and append the label.
//! MEVM rows draw the component, then per block the one-count `t`, using
//! `Rng::random::<f64>()` against cumulative probabilities, and finally place
//! the ones with a partial Fisher-Yates shuffle driven by `Rng::random_range`.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::leaves::ExchangeableLeaf;
use crate::model::{Network, Node, NodeId, NodeKind, Scope};
use crate::special::{binomial, ln_binomial, log_sum_exp};

/// Datasets whose acceptance probability falls below this are refused.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Fewer than `bound` ones.
    Threshold { bound: usize },
    /// Number of ones divisible by `divisor`.
    Exact { divisor: usize },
    /// Even number of ones.
    Parity,
    /// Number of ones congruent to `residue` modulo `divisor`.
    Counting { divisor: usize, residue: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintSpec {
    pub n: usize,
    pub constraint: Constraint,
}

impl ConstraintSpec {
    pub fn threshold(n: usize, bound: usize) -> Self {
        Self {
            n,
            constraint: Constraint::Threshold { bound },
        }
    }

    pub fn exact(n: usize, divisor: usize) -> Self {
        Self {
            n,
            constraint: Constraint::Exact { divisor },
        }
    }

    pub fn parity(n: usize) -> Self {
        Self {
            n,
            constraint: Constraint::Parity,
        }
    }

    pub fn counting(n: usize, divisor: usize, residue: usize) -> Self {
        Self {
            n,
            constraint: Constraint::Counting { divisor, residue },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.constraint {
            Constraint::Threshold { .. } => "threshold",
            Constraint::Exact { .. } => "exact",
            Constraint::Parity => "parity",
            Constraint::Counting { .. } => "counting",
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(XspnError::input("n must be at least 1"));
        }
        match self.constraint {
            Constraint::Threshold { bound } if bound == 0 || bound > self.n => Err(XspnError::input(format!(
                "threshold bound must lie in 1..={}, got {bound}",
                self.n
            ))),
            Constraint::Exact { divisor } if divisor < 2 => {
                Err(XspnError::input(format!("divisor must be at least 2, got {divisor}")))
            }
            Constraint::Counting { divisor, residue } if divisor < 2 || residue >= divisor => {
                Err(XspnError::input(format!(
                    "counting needs divisor >= 2 and residue < divisor, got {divisor} and {residue}"
                )))
            }
            _ if self.satisfying_counts().is_empty() => {
                Err(XspnError::input("constraint cannot be satisfied"))
            }
            _ => Ok(()),
        }
    }

    pub fn accepts_count(&self, ones: usize) -> bool {
        match self.constraint {
            Constraint::Threshold { bound } => ones < bound,
            Constraint::Exact { divisor } => ones.is_multiple_of(divisor),
            Constraint::Parity => ones.is_multiple_of(2),
            Constraint::Counting { divisor, residue } => ones % divisor == residue,
        }
    }

    pub fn accepts(&self, x: &[u8]) -> bool {
        self.accepts_count(x.iter().filter(|&&v| v == 1).count())
    }

    /// One-counts `t ∈ 0..=n` that satisfy the constraint.
    pub fn satisfying_counts(&self) -> Vec<usize> {
        (0..=self.n).filter(|&t| self.accepts_count(t)).collect()
    }

    /// `ln |S|` where `S` is the set of satisfying assignments.
    pub fn ln_satisfying_size(&self) -> f64 {
        if self.n <= 127 {
            let total: u128 = self
                .satisfying_counts()
                .into_iter()
                .map(|t| binomial(self.n as u64, t as u64).expect("fits for n <= 127"))
                .sum();
            return (total as f64).ln();
        }
        let terms: Vec<f64> = self
            .satisfying_counts()
            .into_iter()
            .map(|t| ln_binomial(self.n, t))
            .collect();
        log_sum_exp(&terms)
    }

    /// Probability that a uniform assignment satisfies the constraint.
    pub fn acceptance(&self) -> f64 {
        (self.ln_satisfying_size() - self.n as f64 * std::f64::consts::LN_2).exp()
    }
}

/// Mean log-likelihood per sample (nats) of the uniform law over the satisfying set.
pub fn analytic_loglik(spec: &ConstraintSpec) -> Result<f64> {
    spec.check()?;
    Ok(-spec.ln_satisfying_size())
}

fn row_streams(seed: u64, rows: usize) -> Vec<Xoshiro256PlusPlus> {
    let mut base = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..rows)
        .map(|_| {
            let stream = base.clone();
            base.jump();
            stream
        })
        .collect()
}

fn uniform_candidate(rng: &mut Xoshiro256PlusPlus, out: &mut [u8]) {
    for chunk in out.chunks_mut(64) {
        let word = rng.next_u64();
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = ((word >> j) & 1) as u8;
        }
    }
}

/// `samples` rows drawn uniformly from the assignments satisfying `spec`.
pub fn generate_constraint(spec: &ConstraintSpec, samples: usize, seed: u64) -> Result<BinaryDataset> {
    spec.check()?;
    let acceptance = spec.acceptance();
    if acceptance < MIN_ACCEPTANCE {
        return Err(XspnError::capacity(format!(
            "rejection acceptance {acceptance:.3e} is below {MIN_ACCEPTANCE:e}"
        )));
    }
    let n = spec.n;
    Ok(generate_rows(samples, n, seed, |mut rng, row| loop {
        uniform_candidate(&mut rng, row);
        if spec.accepts(row) {
            break;
        }
    }))
}

/// Uniform rows over `{0,1}^n` with a last column that is 1 when `spec` holds.
pub fn generate_labeled(spec: &ConstraintSpec, samples: usize, seed: u64) -> Result<BinaryDataset> {
    spec.check()?;
    let n = spec.n;
    let data = generate_rows(samples, n + 1, seed, |mut rng, row| {
        let (x, label) = row.split_at_mut(n);
        uniform_candidate(&mut rng, x);
        label[0] = spec.accepts(x) as u8;
    });
    let mut names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    names.push("label".to_string());
    data.with_names(names)
}

fn generate_rows(
    rows: usize,
    cols: usize,
    seed: u64,
    fill: impl Fn(Xoshiro256PlusPlus, &mut [u8]) + Sync,
) -> BinaryDataset {
    let streams = row_streams(seed, rows);
    let mut values = vec![0u8; rows * cols];
    if cols > 0 {
        values
            .par_chunks_mut(cols)
            .zip(streams)
            .for_each(|(row, rng)| fill(rng, row));
    }
    BinaryDataset::new(rows, cols, values).expect("generated values are binary")
}

/// One mixture component: a product of exchangeable blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MevmComponent {
    pub weight: f64,
    pub blocks: Vec<ExchangeableLeaf>,
}

/// Mixture of products of exchangeable blocks over `n` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MevmSpec {
    n: usize,
    components: Vec<MevmComponent>,
}

fn draw_index(rng: &mut Xoshiro256PlusPlus, probabilities: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the total; take the last index with mass
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn random_simplex(rng: &mut Xoshiro256PlusPlus, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + f64::EPSILON).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

impl MevmSpec {
    pub fn new(n: usize, components: Vec<MevmComponent>) -> Result<Self> {
        if n == 0 || components.is_empty() {
            return Err(XspnError::input("an MEVM needs variables and at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| !(c.weight > 0.0)) {
            return Err(XspnError::input(format!("mixture weights must be positive and sum to 1, got {total}")));
        }
        for (ci, c) in components.iter().enumerate() {
            let mut seen = vec![false; n];
            for block in &c.blocks {
                if let Some(problem) = block.check().into_iter().next() {
                    return Err(XspnError::input(format!("component {ci}: {problem}")));
                }
                for v in block.scope().iter() {
                    if v.index() >= n || std::mem::replace(&mut seen[v.index()], true) {
                        return Err(XspnError::input(format!(
                            "component {ci}: blocks do not partition 0..{n}"
                        )));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(XspnError::input(format!("component {ci}: blocks do not cover 0..{n}")));
            }
        }
        Ok(Self { n, components })
    }

    /// One component with a single uniform block.
    pub fn uniform(n: usize) -> Result<Self> {
        let scope = Scope::full(n)?;
        Self::new(
            n,
            vec![MevmComponent {
                weight: 1.0,
                blocks: vec![ExchangeableLeaf::uniform(scope)],
            }],
        )
    }

    /// Random MEVM: per component the variables are shuffled and cut into
    /// `blocks` nearly equal blocks; mixture weights and per-block class
    /// probabilities are normalized uniform draws.
    pub fn random(n: usize, components: usize, blocks: usize, seed: u64) -> Result<Self> {
        if components == 0 || blocks == 0 || blocks > n {
            return Err(XspnError::input(format!(
                "need 1 <= blocks <= n and at least one component, got {components} components, {blocks} blocks, n = {n}"
            )));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let weights = random_simplex(&mut rng, components);
        let mut comps = Vec::with_capacity(components);
        for weight in weights {
            let mut vars: Vec<usize> = (0..n).collect();
            vars.shuffle(&mut rng);
            let mut block_leaves = Vec::with_capacity(blocks);
            let mut start = 0;
            for b in 0..blocks {
                let size = n / blocks + usize::from(b < n % blocks);
                let scope = Scope::from_indices(vars[start..start + size].iter().copied())?;
                start += size;
                let class_probs = random_simplex(&mut rng, size + 1);
                let w = class_probs
                    .iter()
                    .enumerate()
                    .map(|(t, q)| q / (ln_binomial(size, t)).exp())
                    .collect();
                block_leaves.push(ExchangeableLeaf::new(scope, w)?);
            }
            comps.push(MevmComponent {
                weight,
                blocks: block_leaves,
            });
        }
        Self::new(n, comps)
    }

    /// Twenty variables, one component, four exchangeable blocks of five.
    pub fn small(seed: u64) -> Result<Self> {
        Self::random(20, 1, 4, seed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> &[MevmComponent] {
        &self.components
    }

    /// The same density as a network: a sum over products of exchangeable leaves.
    pub fn to_network(&self) -> Network {
        let mut nodes = Vec::new();
        let full = Scope::full(self.n).expect("n >= 1");
        let mut tops = Vec::new();
        for c in &self.components {
            let leaf_ids: Vec<NodeId> = c
                .blocks
                .iter()
                .map(|b| {
                    nodes.push(Node::leaf(b.clone()));
                    NodeId(nodes.len() - 1)
                })
                .collect();
            if leaf_ids.len() == 1 {
                tops.push(leaf_ids[0]);
            } else {
                nodes.push(Node {
                    scope: full.clone(),
                    kind: NodeKind::Product { children: leaf_ids },
                });
                tops.push(NodeId(nodes.len() - 1));
            }
        }
        let root = if tops.len() == 1 {
            tops[0]
        } else {
            nodes.push(Node {
                scope: full,
                kind: NodeKind::Sum {
                    children: tops,
                    weights: self.components.iter().map(|c| c.weight).collect(),
                },
            });
            NodeId(nodes.len() - 1)
        };
        Network::new(nodes, root, self.n)
    }

    fn log_density(&self, x: &[u8]) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.blocks.iter().map(|b| b.log_marginal(x)).sum::<f64>())
            .collect();
        log_sum_exp(&terms)
    }
}

pub fn generate_mevm(spec: &MevmSpec, samples: usize, seed: u64) -> BinaryDataset {
    let weights: Vec<f64> = spec.components.iter().map(|c| c.weight).collect();
    let class_probs: Vec<Vec<Vec<f64>>> = spec
        .components
        .iter()
        .map(|c| c.blocks.iter().map(ExchangeableLeaf::class_probabilities).collect())
        .collect();
    generate_rows(samples, spec.n, seed, |mut rng, row| {
        let c = draw_index(&mut rng, &weights);
        for (block, probs) in spec.components[c].blocks.iter().zip(&class_probs[c]) {
            let t = draw_index(&mut rng, probs);
            let mut positions: Vec<usize> = block.scope().iter().map(|v| v.index()).collect();
            for k in 0..t {
                let j = rng.random_range(k..positions.len());
                positions.swap(k, j);
                row[positions[k]] = 1;
            }
        }
    })
}

/// Mean log-density per sample (nats) of `data` under the MEVM.
pub fn mevm_loglik(spec: &MevmSpec, data: &BinaryDataset) -> Result<f64> {
    if data.cols() != spec.n {
        return Err(XspnError::input(format!(
            "dataset has {} columns, MEVM has {} variables",
            data.cols(),
            spec.n
        )));
    }
    if data.rows() == 0 {
        return Err(XspnError::input("empty dataset"));
    }
    let total: f64 = (0..data.rows())
        .into_par_iter()
        .map(|r| spec.log_density(data.row(r)))
        .sum();
    Ok(total / data.rows() as f64)
}
