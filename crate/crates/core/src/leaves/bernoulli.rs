use crate::model::{Query, Scope, VariableId};

/// Univariate Bernoulli distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliLeaf {
    pub variable: VariableId,
    pub p_one: f64,
}

impl BernoulliLeaf {
    pub fn new(variable: VariableId, p_one: f64) -> Self {
        Self { variable, p_one }
    }

    /// `p_one = (c_1 + α) / (N + 2α)`.
    pub fn fit(variable: VariableId, column: impl IntoIterator<Item = u8>, alpha: f64) -> Self {
        let (mut n, mut ones) = (0usize, 0usize);
        for v in column {
            n += 1;
            ones += v as usize;
        }
        let p_one = (ones as f64 + alpha) / (n as f64 + 2.0 * alpha);
        Self { variable, p_one }
    }

    pub fn log_value(&self, value: u8) -> f64 {
        if value == 1 {
            self.p_one.ln()
        } else {
            (-self.p_one).ln_1p()
        }
    }

    pub fn log_marginal<Q: Query + ?Sized>(&self, q: &Q) -> f64 {
        match q.value(self.variable) {
            Some(v) => self.log_value(v),
            None => 0.0,
        }
    }

    pub(crate) fn check(&self) -> Vec<String> {
        if (0.0..=1.0).contains(&self.p_one) {
            Vec::new()
        } else {
            vec![format!("bernoulli p_one {} outside [0,1]", self.p_one)]
        }
    }
}

/// Product of independent Bernoullis over a scope.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedLeaf {
    factors: Vec<BernoulliLeaf>,
}

impl FactorizedLeaf {
    /// Factors must cover distinct variables; they are stored in ascending order.
    pub fn new(mut factors: Vec<BernoulliLeaf>) -> Self {
        assert!(!factors.is_empty(), "factorized leaf needs at least one variable");
        factors.sort_by_key(|f| f.variable);
        Self { factors }
    }

    /// Fits one Bernoulli per column; `data` columns follow `scope` order.
    pub fn fit(scope: &Scope, data: &crate::dataset::BinaryDataset, alpha: f64) -> Self {
        debug_assert_eq!(scope.len(), data.cols());
        let factors = scope
            .iter()
            .enumerate()
            .map(|(j, var)| BernoulliLeaf::fit(var, data.iter_rows().map(|r| r[j]), alpha))
            .collect();
        Self { factors }
    }

    pub fn factors(&self) -> &[BernoulliLeaf] {
        &self.factors
    }

    pub fn scope(&self) -> Scope {
        Scope::new(self.factors.iter().map(|f| f.variable).collect()).expect("distinct variables")
    }

    pub fn log_marginal<Q: Query + ?Sized>(&self, q: &Q) -> f64 {
        self.factors.iter().map(|f| f.log_marginal(q)).sum()
    }

    pub(crate) fn check(&self) -> Vec<String> {
        self.factors.iter().flat_map(BernoulliLeaf::check).collect()
    }
}
