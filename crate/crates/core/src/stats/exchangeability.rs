//! Pearson χ² goodness-of-fit tests of partial exchangeability under the
//! counting statistic.
//!
//! The null distribution is the ML exchangeable fit `P(x) = c_{T(x)} / (N·C(n,T(x)))`.
//! Cells are indexed by `Σ_i x_i 2^i`.

use rayon::prelude::*;

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::special::{binomial, chi2_sf};

/// Default capacity of the full test (it enumerates `2^n` cells).
pub const DEFAULT_FULL_TEST_MAX_VARS: usize = 8;
/// Hard cap regardless of configuration.
pub const FULL_TEST_HARD_MAX_VARS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Exchangeable,
    NotExchangeable,
}

impl Verdict {
    pub fn is_exchangeable(self) -> bool {
        self == Verdict::Exchangeable
    }
}

/// Outcome of one χ² goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Report {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Level the p-value was compared against.
    pub level: f64,
    pub cells: usize,
    pub verdict: Verdict,
}

/// How the pairwise test spends its significance budget across pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairCorrection {
    /// Each of the `m` pairs is tested at level `p / m`.
    Bonferroni,
    /// Each pair is tested at level `p`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseReport {
    pub pairs: Vec<(usize, usize, Chi2Report)>,
    pub verdict: Verdict,
}

impl PairwiseReport {
    pub fn cells(&self) -> usize {
        self.pairs.iter().map(|(_, _, r)| r.cells).sum()
    }
}

fn check_capacity(n: usize, max_vars: usize) -> Result<()> {
    let cap = max_vars.min(FULL_TEST_HARD_MAX_VARS);
    if n > cap {
        return Err(XspnError::capacity(format!(
            "full exchangeability test enumerates 2^{n} cells; limit is {cap} variables"
        )));
    }
    Ok(())
}

/// Histogram of the `2^n` assignments.
pub fn cell_histogram(data: &BinaryDataset) -> Vec<usize> {
    let n = data.cols();
    let mut hist = vec![0usize; 1 << n];
    for row in data.iter_rows() {
        let idx = row.iter().enumerate().fold(0usize, |acc, (i, &v)| acc | ((v as usize) << i));
        hist[idx] += 1;
    }
    hist
}

fn class_counts(hist: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n + 1];
    for (cell, &o) in hist.iter().enumerate() {
        counts[cell.count_ones() as usize] += o;
    }
    counts
}

/// Null cell probabilities from the unsmoothed exchangeable fit.
pub fn fit_exchangeable_null(data: &BinaryDataset, max_vars: usize) -> Result<Vec<f64>> {
    let n = data.cols();
    check_capacity(n, max_vars)?;
    if data.is_empty() {
        return Err(XspnError::input("exchangeable null needs at least one sample"));
    }
    let counts = class_counts(&cell_histogram(data), n);
    let total = data.rows() as f64;
    Ok((0..1usize << n)
        .map(|cell| {
            let t = cell.count_ones() as usize;
            counts[t] as f64 / total / binomial(n as u64, t as u64).expect("n ≤ 24") as f64
        })
        .collect())
}

/// χ² test of a `2^n`-cell histogram against its exchangeable ML fit.
///
/// `df = 2^n − 1 − n`. Cells with `E = 0` and `O = 0` are skipped; `E = 0` with
/// `O > 0` forces rejection.
pub fn chi2_from_histogram(hist: &[usize], n: usize, level: f64) -> Chi2Report {
    debug_assert_eq!(hist.len(), 1 << n);
    let total: usize = hist.iter().sum();
    let df = (1usize << n) - 1 - n;
    if total == 0 || df == 0 {
        return Chi2Report {
            statistic: 0.0,
            df,
            p_value: 1.0,
            level,
            cells: hist.len(),
            verdict: Verdict::Exchangeable,
        };
    }
    let counts = class_counts(hist, n);
    let class_sizes: Vec<f64> = (0..=n)
        .map(|t| binomial(n as u64, t as u64).expect("n ≤ 24") as f64)
        .collect();
    let mut statistic = 0.0;
    for (cell, &o) in hist.iter().enumerate() {
        let t = cell.count_ones() as usize;
        // E = N · c_t / (N · C(n,t))
        let e = counts[t] as f64 / class_sizes[t];
        if e == 0.0 {
            if o > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        let d = o as f64 - e;
        statistic += d * d / e;
    }
    let p_value = chi2_sf(statistic, df as f64);
    Chi2Report {
        statistic,
        df,
        p_value,
        level,
        cells: hist.len(),
        verdict: if p_value < level {
            Verdict::NotExchangeable
        } else {
            Verdict::Exchangeable
        },
    }
}

/// Full χ² exchangeability test over all columns of `data`.
pub fn chi2_exchangeability_full(data: &BinaryDataset, p: f64, max_vars: usize) -> Result<Chi2Report> {
    let n = data.cols();
    check_capacity(n, max_vars)?;
    Ok(chi2_from_histogram(&cell_histogram(data), n, p))
}

/// Runs the two-variable test on every column pair; exchangeable iff no pair rejects.
pub fn chi2_exchangeability_pairwise(data: &BinaryDataset, p: f64, correction: PairCorrection) -> PairwiseReport {
    let n = data.cols();
    let tables = super::pair_tables(data);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let level = match correction {
        PairCorrection::Bonferroni if !pairs.is_empty() => p / pairs.len() as f64,
        _ => p,
    };
    let pairs: Vec<(usize, usize, Chi2Report)> = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let t = tables.table(i, j);
            // cell index = x_i + 2·x_j
            let hist = [t[0][0], t[1][0], t[0][1], t[1][1]];
            (i, j, chi2_from_histogram(&hist, 2, level))
        })
        .collect();
    let verdict = if pairs.iter().all(|(_, _, r)| r.verdict.is_exchangeable()) {
        Verdict::Exchangeable
    } else {
        Verdict::NotExchangeable
    };
    PairwiseReport { pairs, verdict }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn null_uniform_data() {
        let rows: Vec<Vec<u8>> = (0..8u8).map(|b| (0..3).map(|i| (b >> i) & 1).collect()).collect();
        let data = BinaryDataset::from_rows(&rows).unwrap();
        let cells = fit_exchangeable_null(&data, 8).unwrap();
        assert!(cells.iter().all(|&c| (c - 0.125).abs() < 1e-15));
    }

    #[test]
    fn null_point_mass_at_all_ones() {
        let data = BinaryDataset::from_rows(&[[1u8, 1, 1]; 4]).unwrap();
        let cells = fit_exchangeable_null(&data, 8).unwrap();
        assert_eq!(cells[7], 1.0);
        assert!(cells[..7].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn null_hand_computed() {
        // class counts: t=0:1, t=1:3, t=2:0, t=3:1 ; N=5
        let data = BinaryDataset::from_rows(&[[0u8, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1]]).unwrap();
        let cells = fit_exchangeable_null(&data, 8).unwrap();
        let expect = |cell: usize| match cell.count_ones() {
            0 => 1.0 / 5.0,
            1 => 3.0 / 5.0 / 3.0,
            2 => 0.0,
            _ => 1.0 / 5.0,
        };
        for (i, c) in cells.iter().enumerate() {
            assert!((c - expect(i)).abs() < 1e-15);
        }
        assert!((cells.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_error_for_large_n() {
        let data = BinaryDataset::from_rows(&[vec![0u8; 9]]).unwrap();
        assert!(matches!(fit_exchangeable_null(&data, 8), Err(XspnError::Capacity(_))));
        assert!(matches!(chi2_exchangeability_full(&data, 0.05, 8), Err(XspnError::Capacity(_))));
    }

    #[test]
    fn identical_samples_are_exchangeable() {
        let data = BinaryDataset::from_rows(&[[1u8, 0, 1, 1]; 50]).unwrap();
        let r = chi2_exchangeability_full(&data, 0.05, 8).unwrap();
        // the class t=3 spreads over 4 cells, only one is observed
        assert!(r.statistic > 0.0);
        let same = BinaryDataset::from_rows(&[[1u8, 1, 1, 1]; 50]).unwrap();
        let r = chi2_exchangeability_full(&same, 0.05, 8).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.verdict.is_exchangeable());
        assert_eq!(r.df, 16 - 1 - 4);
    }

    #[test]
    fn pairwise_equals_full_at_two_variables() {
        for seed in 0..30 {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let bias = rng.random_range(0.0..0.2);
            let rows: Vec<[u8; 2]> = (0..300)
                .map(|_| [rng.random_bool(0.5 + bias) as u8, rng.random_bool(0.5) as u8])
                .collect();
            let data = BinaryDataset::from_rows(&rows).unwrap();
            let full = chi2_exchangeability_full(&data, 0.1, 8).unwrap();
            for corr in [PairCorrection::Bonferroni, PairCorrection::None] {
                let pw = chi2_exchangeability_pairwise(&data, 0.1, corr);
                assert_eq!(pw.verdict, full.verdict);
                assert!((pw.pairs[0].2.statistic - full.statistic).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn planted_asymmetric_pair_is_rejected() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
        let rows: Vec<Vec<u8>> = (0..2000)
            .map(|_| {
                let mut r: Vec<u8> = (0..6).map(|_| rng.random_bool(0.5) as u8).collect();
                // P(1,0) = 0.4, P(0,1) = 0.1 on columns 2, 4
                let u: f64 = rng.random();
                let (a, b) = if u < 0.4 { (1, 0) } else if u < 0.5 { (0, 1) } else if u < 0.75 { (0, 0) } else { (1, 1) };
                r[2] = a;
                r[4] = b;
                r
            })
            .collect();
        let data = BinaryDataset::from_rows(&rows).unwrap();
        let r = chi2_exchangeability_pairwise(&data, 0.05, PairCorrection::Bonferroni);
        assert_eq!(r.verdict, Verdict::NotExchangeable);
        let rejected: Vec<(usize, usize)> = r
            .pairs
            .iter()
            .filter(|(_, _, x)| !x.verdict.is_exchangeable())
            .map(|(i, j, _)| (*i, *j))
            .collect();
        assert!(rejected.contains(&(2, 4)));
    }

    #[test]
    fn exact_expected_counts_never_reject() {
        // every assignment of 5 variables weighted by an exchangeable law, no noise
        let weights = [3usize, 1, 2, 2, 1, 4];
        let mut rows = Vec::new();
        for cell in 0..32u32 {
            for _ in 0..weights[cell.count_ones() as usize] {
                rows.push((0..5).map(|i| ((cell >> i) & 1) as u8).collect::<Vec<u8>>());
            }
        }
        let data = BinaryDataset::from_rows(&rows).unwrap();
        for corr in [PairCorrection::Bonferroni, PairCorrection::None] {
            let r = chi2_exchangeability_pairwise(&data, 0.4, corr);
            assert!(r.verdict.is_exchangeable());
            assert!(r.pairs.iter().all(|(_, _, x)| x.statistic.abs() < 1e-12));
        }
        let full = chi2_exchangeability_full(&data, 0.4, 8).unwrap();
        assert!(full.statistic.abs() < 1e-9);
    }
}
