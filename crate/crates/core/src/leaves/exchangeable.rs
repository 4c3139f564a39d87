//! Distributions over binary variables that are partially exchangeable with
//! respect to the counting statistic (number of ones).
//!
//! Every assignment with `t` ones has the same probability `weights[t]`, so the
//! `n + 1` weights fully describe the distribution and the class of assignments
//! with `t` ones has `C(n, t)` members. Marginals only need the number of
//! observed variables and the number of observed ones.

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::model::{Query, Scope};
use crate::special::{binomial, ln_binomial, log_sum_exp};

/// Tolerance on `Σ_t weights[t]·C(n,t) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Value of the counting statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountValue(pub usize);

/// Number of ones in `x`.
pub fn count_statistic(x: &[u8]) -> CountValue {
    CountValue(x.iter().map(|&v| v as usize).sum())
}

/// `|S_t| = C(n, t)`, exact.
pub fn class_size(n: usize, t: CountValue) -> Result<u128> {
    if t.0 > n {
        return Err(XspnError::input(format!("count {} exceeds n = {n}", t.0)));
    }
    binomial(n as u64, t.0 as u64)
        .ok_or_else(|| XspnError::capacity(format!("C({n},{}) overflows 128 bits", t.0)))
}

/// `|S_{e,t}| = C(n - n_e, t - t_e)`, zero when no completion reaches `t` ones.
pub fn consistent_class_size(n: usize, n_e: usize, t_e: usize, t: CountValue) -> Result<u128> {
    if n_e > n || t_e > n_e {
        return Err(XspnError::input(format!(
            "inconsistent evidence summary n={n}, n_e={n_e}, t_e={t_e}"
        )));
    }
    if t.0 < t_e || t.0 - t_e > n - n_e {
        return Ok(0);
    }
    class_size(n - n_e, CountValue(t.0 - t_e))
}

/// `C(n, t)` as a float, used when dividing class mass among class members.
fn class_size_f64(n: usize, t: usize) -> f64 {
    match binomial(n as u64, t as u64) {
        Some(c) => c as f64,
        None => ln_binomial(n, t).exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeableLeaf {
    scope: Scope,
    weights: Vec<f64>,
    ln_weights: Vec<f64>,
}

impl ExchangeableLeaf {
    /// Builds a leaf from per-assignment weights; checks length, sign and normalization.
    pub fn new(scope: Scope, weights: Vec<f64>) -> Result<Self> {
        let leaf = Self::new_unchecked(scope, weights);
        let problems = leaf.check();
        if let Some(p) = problems.into_iter().next() {
            return Err(XspnError::input(p));
        }
        Ok(leaf)
    }

    pub(crate) fn new_unchecked(scope: Scope, weights: Vec<f64>) -> Self {
        let ln_weights = weights.iter().map(|w| w.ln()).collect();
        Self {
            scope,
            weights,
            ln_weights,
        }
    }

    /// Uniform distribution over `{0,1}^n`.
    pub fn uniform(scope: Scope) -> Self {
        let n = scope.len();
        let w = 0.5f64.powi(n as i32);
        Self::new_unchecked(scope, vec![w; n + 1])
    }

    /// Smoothed maximum-likelihood fit. `data` columns follow `scope` order.
    ///
    /// With class counts `c_t`, `weights[t] = (c_t + α) / (N + α(n+1)) / C(n,t)`;
    /// `α = 0` is the plain ML estimate.
    pub fn fit(scope: Scope, data: &BinaryDataset, alpha: f64) -> Self {
        assert_eq!(scope.len(), data.cols(), "data columns must match scope");
        let n = scope.len();
        let mut counts = vec![0usize; n + 1];
        for row in data.iter_rows() {
            counts[count_statistic(row).0] += 1;
        }
        Self::from_class_counts(scope, &counts, alpha)
    }

    pub fn from_class_counts(scope: Scope, counts: &[usize], alpha: f64) -> Self {
        let n = scope.len();
        assert_eq!(counts.len(), n + 1);
        let total: usize = counts.iter().sum();
        let denom = total as f64 + alpha * (n + 1) as f64;
        let weights = counts
            .iter()
            .enumerate()
            .map(|(t, &c)| (c as f64 + alpha) / denom / class_size_f64(n, t))
            .collect();
        Self::new_unchecked(scope, weights)
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn n(&self) -> usize {
        self.scope.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Probability mass of each class, `weights[t]·C(n,t)`.
    pub fn class_probabilities(&self) -> Vec<f64> {
        let n = self.n();
        self.weights
            .iter()
            .enumerate()
            .map(|(t, w)| w * class_size_f64(n, t))
            .collect()
    }

    /// `ln weights[T(x)]` for a full assignment over the scope, in scope order.
    pub fn log_prob(&self, x: &[u8]) -> f64 {
        debug_assert_eq!(x.len(), self.n());
        self.ln_weights[count_statistic(x).0]
    }

    /// `ln Σ_t |S_{e,t}| · weights[t]` for evidence restricted to the scope.
    pub fn log_marginal<Q: Query + ?Sized>(&self, q: &Q) -> f64 {
        let (mut n_e, mut t_e) = (0usize, 0usize);
        for var in self.scope.iter() {
            if let Some(v) = q.value(var) {
                n_e += 1;
                t_e += v as usize;
            }
        }
        self.log_marginal_counts(n_e, t_e)
    }

    /// Marginal from the evidence summary alone: `n_e` observed, `t_e` of them ones.
    pub fn log_marginal_counts(&self, n_e: usize, t_e: usize) -> f64 {
        let n = self.n();
        if n_e == n {
            return self.ln_weights[t_e];
        }
        let free = n - n_e;
        let terms: Vec<f64> = (0..=free)
            .map(|k| ln_binomial(free, k) + self.ln_weights[t_e + k])
            .collect();
        log_sum_exp(&terms)
    }

    pub(crate) fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.n();
        if self.weights.len() != n + 1 {
            out.push(format!(
                "exchangeable leaf over {n} variables needs {} weights, has {}",
                n + 1,
                self.weights.len()
            ));
            return out;
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            out.push(format!("exchangeable weight {w} is negative or not finite"));
        }
        let total: f64 = self.class_probabilities().iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            out.push(format!("exchangeable class mass sums to {total}, expected 1"));
        }
        out
    }
}
