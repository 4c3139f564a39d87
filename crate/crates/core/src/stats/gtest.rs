use rayon::prelude::*;

use crate::dataset::BinaryDataset;

/// 2×2 contingency counts `table[a][b] = #{x_i = a, x_j = b}`.
pub fn contingency(data: &BinaryDataset, i: usize, j: usize) -> [[usize; 2]; 2] {
    let mut t = [[0usize; 2]; 2];
    for row in data.iter_rows() {
        t[row[i] as usize][row[j] as usize] += 1;
    }
    t
}

/// G statistic `2 Σ O ln(O/E)` of the α-smoothed 2×2 table of columns `i`, `j`,
/// with expected counts taken from the smoothed marginals and `0·ln 0 = 0`.
pub fn g_statistic(data: &BinaryDataset, i: usize, j: usize, alpha: f64) -> f64 {
    g_from_table(contingency(data, i, j), alpha)
}

pub fn g_from_table(table: [[usize; 2]; 2], alpha: f64) -> f64 {
    let obs = [
        [table[0][0] as f64 + alpha, table[0][1] as f64 + alpha],
        [table[1][0] as f64 + alpha, table[1][1] as f64 + alpha],
    ];
    let total = obs[0][0] + obs[0][1] + obs[1][0] + obs[1][1];
    if total <= 0.0 {
        return 0.0;
    }
    let row = [obs[0][0] + obs[0][1], obs[1][0] + obs[1][1]];
    let col = [obs[0][0] + obs[1][0], obs[0][1] + obs[1][1]];
    let mut g = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let o = obs[a][b];
            if o > 0.0 {
                let e = row[a] * col[b] / total;
                g += o * (o / e).ln();
            }
        }
    }
    (2.0 * g).max(0.0)
}

/// G statistic for every column pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pairwise_g(data: &BinaryDataset, alpha: f64) -> Vec<(usize, usize, f64)> {
    let n = data.cols();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let tables = super::pair_tables(data);
    pairs
        .into_par_iter()
        .map(|(i, j)| (i, j, g_from_table(tables.table(i, j), alpha)))
        .collect()
}

/// Connected components of the graph with an edge wherever `G > rho`.
///
/// Groups hold column indices, each group ascending, groups ordered by their
/// smallest column. A single group means the columns cannot be split.
pub fn split_variables(data: &BinaryDataset, rho: f64, alpha: f64) -> Vec<Vec<usize>> {
    let n = data.cols();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j, g) in pairwise_g(data, alpha) {
        if g > rho {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(v);
    }
    groups
}
