//! Chow-Liu tree leaves: a maximum mutual-information spanning tree over the
//! scope with one conditional probability table per variable.

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::model::{Query, Scope, VariableId};
use crate::special::log_add_exp;

const CPT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ChowLiuLeaf {
    scope: Scope,
    /// Parent of each scope position (as a scope position), `None` for the root.
    parents: Vec<Option<usize>>,
    /// `cpt[i][parent_value] = [P(x_i = 0 | ·), P(x_i = 1 | ·)]`; the root has one row.
    cpt: Vec<Vec<[f64; 2]>>,
    children: Vec<Vec<usize>>,
    /// Root first; every parent precedes its children.
    order: Vec<usize>,
}

impl ChowLiuLeaf {
    /// Builds a leaf from a parent map and tables, checking tree shape and table sizes.
    pub fn new(scope: Scope, parents: Vec<Option<usize>>, cpt: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let n = scope.len();
        if parents.len() != n || cpt.len() != n {
            return Err(XspnError::input(format!(
                "chow-liu leaf over {n} variables has {} parents and {} tables",
                parents.len(),
                cpt.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(XspnError::input(format!(
                "chow-liu tree needs exactly one root, found {}",
                roots.len()
            )));
        }
        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == i {
                    return Err(XspnError::input(format!("invalid parent {p} for position {i}")));
                }
                children[p].push(i);
            }
        }
        let mut order = Vec::with_capacity(n);
        order.push(roots[0]);
        let mut head = 0;
        while head < order.len() {
            let node = order[head];
            head += 1;
            order.extend(children[node].iter().copied());
        }
        if order.len() != n {
            return Err(XspnError::input("chow-liu parent map is not a connected tree"));
        }
        for (i, rows) in cpt.iter().enumerate() {
            let expected = if parents[i].is_some() { 2 } else { 1 };
            if rows.len() != expected {
                return Err(XspnError::input(format!(
                    "chow-liu table for position {i} has {} rows, expected {expected}",
                    rows.len()
                )));
            }
        }
        Ok(Self {
            scope,
            parents,
            cpt,
            children,
            order,
        })
    }

    /// Fits the tree structure and tables; `data` columns follow `scope` order.
    ///
    /// Mutual information uses α-smoothed pairwise joint counts. The spanning tree
    /// is built greedily over edges sorted by `(-MI, i, j)` and rooted at the
    /// lowest variable.
    pub fn fit(scope: Scope, data: &BinaryDataset, alpha: f64) -> Self {
        let n = scope.len();
        assert_eq!(n, data.cols(), "data columns must match scope");
        let rows = data.rows() as f64;

        let mut ones = vec![0usize; n];
        // joint[i][j] = #rows with x_i = 1 and x_j = 1, i < j
        let mut joint = vec![vec![0usize; n]; n];
        for row in data.iter_rows() {
            for i in 0..n {
                if row[i] == 1 {
                    ones[i] += 1;
                    for j in i + 1..n {
                        joint[i][j] += row[j] as usize;
                    }
                }
            }
        }
        let pair_table = |i: usize, j: usize| -> [[f64; 2]; 2] {
            let n11 = joint[i.min(j)][i.max(j)] as f64;
            let n10 = ones[i] as f64 - n11;
            let n01 = ones[j] as f64 - n11;
            let n00 = rows - n11 - n10 - n01;
            [[n00, n01], [n10, n11]]
        };

        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push((mutual_information(pair_table(i, j), alpha), i, j));
            }
        }
        edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut uf = UnionFind::new(n);
        let mut adjacency = vec![Vec::new(); n];
        for &(_, i, j) in &edges {
            if uf.union(i, j) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }

        let mut parents = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            let mut next: Vec<usize> = adjacency[u].iter().copied().filter(|&v| !seen[v]).collect();
            next.sort_unstable();
            for v in next {
                seen[v] = true;
                parents[v] = Some(u);
                queue.push_back(v);
            }
        }

        let mut cpt = Vec::with_capacity(n);
        for i in 0..n {
            match parents[i] {
                None => {
                    let p1 = (ones[i] as f64 + alpha) / (rows + 2.0 * alpha);
                    cpt.push(vec![[1.0 - p1, p1]]);
                }
                Some(p) => {
                    let t = pair_table(p, i);
                    let rows_for = |pv: usize| {
                        let total = t[pv][0] + t[pv][1];
                        let p1 = (t[pv][1] + alpha) / (total + 2.0 * alpha);
                        // a parent value never seen with α = 0 gets a uniform row
                        let p1 = if p1.is_nan() { 0.5 } else { p1 };
                        [1.0 - p1, p1]
                    };
                    cpt.push(vec![rows_for(0), rows_for(1)]);
                }
            }
        }
        Self::new(scope, parents, cpt).expect("spanning tree is valid")
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent_variable(&self, pos: usize) -> Option<VariableId> {
        self.parents[pos].map(|p| self.scope.vars()[p])
    }

    pub fn cpt(&self) -> &[Vec<[f64; 2]>] {
        &self.cpt
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }

    /// Exact marginal by one upward pass that sums out unobserved variables.
    pub fn log_marginal<Q: Query + ?Sized>(&self, q: &Q) -> f64 {
        let n = self.scope.len();
        // below[i][v]: log-mass of the subtree under i given x_i = v
        let mut below = vec![[0.0f64; 2]; n];
        // msg[i][pv]: log-mass of the subtree rooted at i given parent value pv
        let mut msg = vec![[0.0f64; 2]; n];
        for &i in self.order.iter().rev() {
            let mut b = [0.0f64; 2];
            for &c in &self.children[i] {
                b[0] += msg[c][0];
                b[1] += msg[c][1];
            }
            below[i] = b;
            let observed = q.value(self.scope.vars()[i]);
            for (pv, row) in self.cpt[i].iter().enumerate() {
                msg[i][pv] = match observed {
                    Some(v) => row[v as usize].ln() + b[v as usize],
                    None => log_add_exp(row[0].ln() + b[0], row[1].ln() + b[1]),
                };
            }
        }
        msg[self.root()][0]
    }

    pub(crate) fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, rows) in self.cpt.iter().enumerate() {
            for row in rows {
                if row.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) || (row[0] + row[1] - 1.0).abs() > CPT_TOL
                {
                    out.push(format!("chow-liu table row {row:?} at position {i} is not a distribution"));
                }
            }
        }
        out
    }
}

/// Mutual information (nats) of a 2×2 count table after adding `alpha` to every cell.
pub fn mutual_information(table: [[f64; 2]; 2], alpha: f64) -> f64 {
    let cells = [
        [table[0][0] + alpha, table[0][1] + alpha],
        [table[1][0] + alpha, table[1][1] + alpha],
    ];
    let total: f64 = cells.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let row = [cells[0][0] + cells[0][1], cells[1][0] + cells[1][1]];
    let col = [cells[0][0] + cells[1][0], cells[0][1] + cells[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let c = cells[a][b];
            if c > 0.0 {
                mi += c / total * (c * total / (row[a] * col[b])).ln();
            }
        }
    }
    mi.max(0.0)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}
