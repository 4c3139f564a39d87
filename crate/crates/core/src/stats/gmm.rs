//! Row clustering with a diagonal-covariance Gaussian mixture fitted by EM.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::dataset::BinaryDataset;
use crate::special::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-3;
pub const MAX_ITERATIONS: usize = 100;
/// Convergence threshold on the mean per-row log-likelihood.
pub const TOLERANCE: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hard assignment of rows to `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPartition {
    assignments: Vec<usize>,
    k: usize,
}

impl RowPartition {
    pub fn new(assignments: Vec<usize>, k: usize) -> Self {
        assert!(assignments.iter().all(|&a| a < k));
        Self { assignments, k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Row indices per cluster, ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (row, &c) in self.assignments.iter().enumerate() {
            groups[c].push(row);
        }
        groups
    }

    /// `|D_i| / |D|` per cluster.
    pub fn weights(&self) -> Vec<f64> {
        let total = self.assignments.len() as f64;
        self.groups().iter().map(|g| g.len() as f64 / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterOutcome {
    Partition(RowPartition),
    /// EM left at least one cluster without rows.
    Degenerate,
}

struct Mixture {
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl Mixture {
    fn log_joint(&self, row: &[u8], out: &mut [f64]) {
        for (c, slot) in out.iter_mut().enumerate() {
            let mut ll = self.log_weights[c];
            for ((&x, &mu), &var) in row.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let d = x as f64 - mu;
                ll -= 0.5 * (LN_2PI + var.ln() + d * d / var);
            }
            *slot = ll;
        }
    }

    fn from_responsibilities(data: &BinaryDataset, resp: &[f64], k: usize) -> Self {
        let d = data.cols();
        let n = data.rows() as f64;
        let mut mass = vec![0.0f64; k];
        let mut means = vec![vec![0.0f64; d]; k];
        for (i, row) in data.iter_rows().enumerate() {
            for c in 0..k {
                let r = resp[i * k + c];
                mass[c] += r;
                if r != 0.0 {
                    for (m, &x) in means[c].iter_mut().zip(row) {
                        *m += r * x as f64;
                    }
                }
            }
        }
        for c in 0..k {
            let denom = mass[c].max(f64::MIN_POSITIVE);
            means[c].iter_mut().for_each(|m| *m /= denom);
        }
        let mut variances = vec![vec![0.0f64; d]; k];
        for (i, row) in data.iter_rows().enumerate() {
            for c in 0..k {
                let r = resp[i * k + c];
                if r != 0.0 {
                    for ((v, &x), &mu) in variances[c].iter_mut().zip(row).zip(&means[c]) {
                        let diff = x as f64 - mu;
                        *v += r * diff * diff;
                    }
                }
            }
        }
        for c in 0..k {
            let denom = mass[c].max(f64::MIN_POSITIVE);
            variances[c]
                .iter_mut()
                .for_each(|v| *v = (*v / denom).max(VARIANCE_FLOOR));
        }
        let log_weights = mass.iter().map(|m| (m / n).ln()).collect();
        Self {
            log_weights,
            means,
            variances,
        }
    }
}

/// Clusters rows into `k` groups with EM on a diagonal Gaussian mixture.
///
/// Responsibilities start from seeded random values. EM stops when the mean
/// per-row log-likelihood changes by less than [`TOLERANCE`] or after
/// [`MAX_ITERATIONS`]; rows go to their most responsible component (ties to the
/// lower index).
pub fn cluster_rows(data: &BinaryDataset, k: usize, seed: u64) -> ClusterOutcome {
    assert!(k >= 2, "need at least two clusters");
    let n = data.rows();
    if n < k {
        return ClusterOutcome::Degenerate;
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut resp = vec![0.0f64; n * k];
    for chunk in resp.chunks_mut(k) {
        let mut total = 0.0;
        for r in chunk.iter_mut() {
            *r = rng.random::<f64>() + 1e-3;
            total += *r;
        }
        chunk.iter_mut().for_each(|r| *r /= total);
    }

    let mut previous = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mixture = Mixture::from_responsibilities(data, &resp, k);
        let row_ll: Vec<f64> = resp
            .par_chunks_mut(k)
            .enumerate()
            .map(|(i, chunk)| {
                mixture.log_joint(data.row(i), chunk);
                let norm = log_sum_exp(chunk);
                chunk.iter_mut().for_each(|r| *r = (*r - norm).exp());
                norm
            })
            .collect();
        let mean_ll = row_ll.iter().sum::<f64>() / n as f64;
        if (mean_ll - previous).abs() < TOLERANCE {
            break;
        }
        previous = mean_ll;
    }

    let assignments: Vec<usize> = resp
        .chunks(k)
        .map(|chunk| {
            let mut best = 0;
            for c in 1..k {
                if chunk[c] > chunk[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let mut used = vec![false; k];
    assignments.iter().for_each(|&a| used[a] = true);
    if used.iter().all(|&u| u) {
        ClusterOutcome::Partition(RowPartition::new(assignments, k))
    } else {
        ClusterOutcome::Degenerate
    }
}
