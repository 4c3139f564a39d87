//! Leaf distribution families.

mod bernoulli;
mod chow_liu;
pub mod exchangeable;

pub use bernoulli::{BernoulliLeaf, FactorizedLeaf};
pub use chow_liu::{mutual_information, ChowLiuLeaf};
pub use exchangeable::{class_size, consistent_class_size, count_statistic, CountValue, ExchangeableLeaf};

use crate::model::{Query, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeafKind {
    Bernoulli,
    Factorized,
    ExchangeableCounting,
    ChowLiu,
}

impl LeafKind {
    pub const ALL: [LeafKind; 4] = [
        LeafKind::Bernoulli,
        LeafKind::Factorized,
        LeafKind::ExchangeableCounting,
        LeafKind::ChowLiu,
    ];

    /// Name used in model files and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            LeafKind::Bernoulli => "bernoulli",
            LeafKind::Factorized => "factorized",
            LeafKind::ExchangeableCounting => "exchangeable_counting",
            LeafKind::ChowLiu => "chow_liu",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafDistribution {
    Bernoulli(BernoulliLeaf),
    Factorized(FactorizedLeaf),
    Exchangeable(ExchangeableLeaf),
    ChowLiu(ChowLiuLeaf),
}

impl LeafDistribution {
    pub fn kind(&self) -> LeafKind {
        match self {
            LeafDistribution::Bernoulli(_) => LeafKind::Bernoulli,
            LeafDistribution::Factorized(_) => LeafKind::Factorized,
            LeafDistribution::Exchangeable(_) => LeafKind::ExchangeableCounting,
            LeafDistribution::ChowLiu(_) => LeafKind::ChowLiu,
        }
    }

    pub fn scope(&self) -> Scope {
        match self {
            LeafDistribution::Bernoulli(b) => Scope::single(b.variable),
            LeafDistribution::Factorized(f) => f.scope(),
            LeafDistribution::Exchangeable(e) => e.scope().clone(),
            LeafDistribution::ChowLiu(c) => c.scope().clone(),
        }
    }

    /// Log-probability of the evidence restricted to this leaf's scope.
    pub fn log_marginal<Q: Query + ?Sized>(&self, q: &Q) -> f64 {
        match self {
            LeafDistribution::Bernoulli(b) => b.log_marginal(q),
            LeafDistribution::Factorized(f) => f.log_marginal(q),
            LeafDistribution::Exchangeable(e) => e.log_marginal(q),
            LeafDistribution::ChowLiu(c) => c.log_marginal(q),
        }
    }

    /// Number of stored parameters.
    ///
    /// Bernoulli: 1. Factorized: 1 per variable. Exchangeable: `n + 1` weights.
    /// Chow-Liu: 2 for the root and 2 per non-root variable.
    pub fn parameter_count(&self) -> usize {
        match self {
            LeafDistribution::Bernoulli(_) => 1,
            LeafDistribution::Factorized(f) => f.factors().len(),
            LeafDistribution::Exchangeable(e) => e.n() + 1,
            LeafDistribution::ChowLiu(c) => 2 * c.scope().len(),
        }
    }

    pub(crate) fn check(&self) -> Vec<String> {
        match self {
            LeafDistribution::Bernoulli(b) => b.check(),
            LeafDistribution::Factorized(f) => f.check(),
            LeafDistribution::Exchangeable(e) => e.check(),
            LeafDistribution::ChowLiu(c) => c.check(),
        }
    }
}

impl From<BernoulliLeaf> for LeafDistribution {
    fn from(l: BernoulliLeaf) -> Self {
        LeafDistribution::Bernoulli(l)
    }
}

impl From<FactorizedLeaf> for LeafDistribution {
    fn from(l: FactorizedLeaf) -> Self {
        LeafDistribution::Factorized(l)
    }
}

impl From<ExchangeableLeaf> for LeafDistribution {
    fn from(l: ExchangeableLeaf) -> Self {
        LeafDistribution::Exchangeable(l)
    }
}

impl From<ChowLiuLeaf> for LeafDistribution {
    fn from(l: ChowLiuLeaf) -> Self {
        LeafDistribution::ChowLiu(l)
    }
}
