//! Statistical machinery of the learner: independence testing, exchangeability
//! testing and row clustering.

pub mod exchangeability;
pub mod gmm;
pub mod gtest;

pub use exchangeability::{
    chi2_exchangeability_full, chi2_exchangeability_pairwise, fit_exchangeable_null, Chi2Report,
    PairCorrection, PairwiseReport, Verdict,
};
pub use gmm::{cluster_rows, ClusterOutcome, RowPartition};
pub use gtest::{g_statistic, pairwise_g, split_variables};

use crate::dataset::BinaryDataset;

/// One-counts and pairwise co-occurrence counts of all columns.
pub(crate) struct PairTables {
    rows: usize,
    ones: Vec<usize>,
    n: usize,
    /// `both[i * n + j]` for `i < j`.
    both: Vec<usize>,
}

impl PairTables {
    /// `table[a][b] = #{x_i = a, x_j = b}`.
    pub(crate) fn table(&self, i: usize, j: usize) -> [[usize; 2]; 2] {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let n11 = self.both[lo * self.n + hi];
        let n10 = self.ones[i] - n11;
        let n01 = self.ones[j] - n11;
        let n00 = self.rows - n11 - n10 - n01;
        [[n00, n01], [n10, n11]]
    }
}

pub(crate) fn pair_tables(data: &BinaryDataset) -> PairTables {
    let n = data.cols();
    let mut ones = vec![0usize; n];
    let mut both = vec![0usize; n * n];
    let mut active = Vec::with_capacity(n);
    for row in data.iter_rows() {
        active.clear();
        active.extend(row.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i));
        for (a, &i) in active.iter().enumerate() {
            ones[i] += 1;
            for &j in &active[a + 1..] {
                both[i * n + j] += 1;
            }
        }
    }
    PairTables {
        rows: data.rows(),
        ones,
        n,
        both,
    }
}
