use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::leaves::{LeafDistribution, LeafKind};
use crate::model::{PartialEvidence, Query, Scope, VariableId};
use crate::special::log_sum_exp;

/// Tolerance on sum-node weight normalization.
pub const WEIGHT_TOL: f64 = 1e-9;

/// Index of a node in [`Network::nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Mixture; `weights[i]` belongs to `children[i]`.
    Sum { children: Vec<NodeId>, weights: Vec<f64> },
    Product { children: Vec<NodeId> },
    Leaf(LeafDistribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub scope: Scope,
    pub kind: NodeKind,
}

impl Node {
    pub fn leaf(dist: impl Into<LeafDistribution>) -> Self {
        let dist = dist.into();
        Self {
            scope: dist.scope(),
            kind: NodeKind::Leaf(dist),
        }
    }

    pub fn children(&self) -> &[NodeId] {
        match &self.kind {
            NodeKind::Sum { children, .. } | NodeKind::Product { children } => children,
            NodeKind::Leaf(_) => &[],
        }
    }
}

/// A structural problem found by [`Network::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    RootOutOfRange,
    DanglingChild(NodeId),
    Cycle,
    Unreachable,
    TooFewChildren(usize),
    WeightCountMismatch { children: usize, weights: usize },
    NonPositiveWeight(f64),
    WeightNormalization(f64),
    /// Sum child scope differs from the sum node's scope.
    Incomplete(NodeId),
    /// Product children share variables.
    NotDecomposable(NodeId, NodeId),
    ScopeUnionMismatch,
    LeafScopeMismatch,
    InvalidLeaf(String),
    RootScope,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = self.node {
            write!(f, "node {n}: ")?;
        }
        match &self.kind {
            ViolationKind::RootOutOfRange => write!(f, "root id out of range"),
            ViolationKind::DanglingChild(c) => write!(f, "child {c} does not exist"),
            ViolationKind::Cycle => write!(f, "node lies on a cycle"),
            ViolationKind::Unreachable => write!(f, "node is not reachable from the root"),
            ViolationKind::TooFewChildren(k) => write!(f, "internal node has {k} children, needs at least 2"),
            ViolationKind::WeightCountMismatch { children, weights } => {
                write!(f, "{children} children but {weights} weights")
            }
            ViolationKind::NonPositiveWeight(w) => write!(f, "weight {w} is not strictly positive"),
            ViolationKind::WeightNormalization(s) => write!(f, "weights sum to {s}, expected 1"),
            ViolationKind::Incomplete(c) => write!(f, "completeness: child {c} has a different scope"),
            ViolationKind::NotDecomposable(a, b) => {
                write!(f, "decomposability: children {a} and {b} share variables")
            }
            ViolationKind::ScopeUnionMismatch => write!(f, "children scopes do not cover the product scope"),
            ViolationKind::LeafScopeMismatch => write!(f, "leaf distribution scope differs from node scope"),
            ViolationKind::InvalidLeaf(m) => write!(f, "invalid leaf: {m}"),
            ViolationKind::RootScope => write!(f, "root scope does not cover all modeled variables"),
        }
    }
}

/// Counters gathered during one evaluation pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub node_visits: usize,
    pub leaf_queries: usize,
}

/// A rooted DAG of sum, product and leaf nodes over `variable_count` binary variables.
///
/// Immutable after construction. Construction accepts structurally broken input so
/// that [`Network::validate`] can report it; evaluation refuses networks whose node
/// references do not form a DAG.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    root: NodeId,
    variable_count: usize,
    /// Children-first order of the nodes reachable from the root, `None` if the
    /// references are dangling or cyclic.
    order: Option<Vec<usize>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.root == other.root && self.variable_count == other.variable_count
    }
}

impl Network {
    pub fn new(nodes: Vec<Node>, root: NodeId, variable_count: usize) -> Self {
        let order = evaluation_order(&nodes, root);
        Self {
            nodes,
            root,
            variable_count,
            order,
        }
    }

    /// Single-leaf network.
    pub fn from_leaf(dist: impl Into<LeafDistribution>, variable_count: usize) -> Self {
        Self::new(vec![Node::leaf(dist)], NodeId(0), variable_count)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn root_node(&self) -> &Node {
        &self.nodes[self.root.0]
    }

    pub fn variable_count(&self) -> usize {
        self.variable_count
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every violated structural invariant; empty iff the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        let at = |id: usize, kind| Violation {
            node: Some(NodeId(id)),
            kind,
        };
        if self.root.0 >= n {
            out.push(Violation {
                node: None,
                kind: ViolationKind::RootOutOfRange,
            });
        }
        for (i, node) in self.nodes.iter().enumerate() {
            for c in node.children() {
                if c.0 >= n {
                    out.push(at(i, ViolationKind::DanglingChild(*c)));
                }
            }
        }
        for i in nodes_on_cycles(&self.nodes) {
            out.push(at(i, ViolationKind::Cycle));
        }
        if self.root.0 < n {
            let reachable = reachable_from(&self.nodes, self.root.0);
            for (i, r) in reachable.iter().enumerate() {
                if !r {
                    out.push(at(i, ViolationKind::Unreachable));
                }
            }
            let expected = Scope::full(self.variable_count).ok();
            if expected.as_ref() != Some(&self.nodes[self.root.0].scope) {
                out.push(at(self.root.0, ViolationKind::RootScope));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let child_scope = |c: &NodeId| self.nodes.get(c.0).map(|ch| &ch.scope);
            match &node.kind {
                NodeKind::Sum { children, weights } => {
                    if children.len() < 2 {
                        out.push(at(i, ViolationKind::TooFewChildren(children.len())));
                    }
                    if children.len() != weights.len() {
                        out.push(at(
                            i,
                            ViolationKind::WeightCountMismatch {
                                children: children.len(),
                                weights: weights.len(),
                            },
                        ));
                    }
                    for &w in weights {
                        if !(w > 0.0) {
                            out.push(at(i, ViolationKind::NonPositiveWeight(w)));
                        }
                    }
                    let total: f64 = weights.iter().sum();
                    if !((total - 1.0).abs() <= WEIGHT_TOL) {
                        out.push(at(i, ViolationKind::WeightNormalization(total)));
                    }
                    for c in children {
                        if let Some(s) = child_scope(c) {
                            if s != &node.scope {
                                out.push(at(i, ViolationKind::Incomplete(*c)));
                            }
                        }
                    }
                }
                NodeKind::Product { children } => {
                    if children.len() < 2 {
                        out.push(at(i, ViolationKind::TooFewChildren(children.len())));
                    }
                    let mut owner: BTreeMap<VariableId, NodeId> = BTreeMap::new();
                    let mut union_ok = true;
                    for c in children {
                        let Some(s) = child_scope(c) else { continue };
                        for v in s.iter() {
                            if let Some(prev) = owner.insert(v, *c) {
                                out.push(at(i, ViolationKind::NotDecomposable(prev, *c)));
                            }
                            union_ok &= node.scope.contains(v);
                        }
                    }
                    if !union_ok || owner.len() != node.scope.len() {
                        out.push(at(i, ViolationKind::ScopeUnionMismatch));
                    }
                }
                NodeKind::Leaf(dist) => {
                    if dist.scope() != node.scope {
                        out.push(at(i, ViolationKind::LeafScopeMismatch));
                    }
                    for m in dist.check() {
                        out.push(at(i, ViolationKind::InvalidLeaf(m)));
                    }
                }
            }
        }
        out
    }

    fn order(&self) -> Result<&[usize]> {
        self.order.as_deref().ok_or_else(|| {
            XspnError::Structure("node references are dangling or cyclic".to_string())
        })
    }

    /// Bottom-up log-space pass. Leaves answer marginal queries over their scope.
    fn pass<Q: Query + ?Sized>(&self, q: &Q, stats: &mut EvalStats) -> Result<f64> {
        let order = self.order()?;
        let mut values = vec![f64::NEG_INFINITY; self.nodes.len()];
        let mut scratch = Vec::new();
        for &i in order {
            stats.node_visits += 1;
            values[i] = match &self.nodes[i].kind {
                NodeKind::Leaf(dist) => {
                    stats.leaf_queries += 1;
                    dist.log_marginal(q)
                }
                NodeKind::Product { children } => children.iter().map(|c| values[c.0]).sum(),
                NodeKind::Sum { children, weights } => {
                    scratch.clear();
                    scratch.extend(children.iter().zip(weights).map(|(c, w)| w.ln() + values[c.0]));
                    log_sum_exp(&scratch)
                }
            };
        }
        Ok(values[self.root.0])
    }

    /// `ln P(x)` for a full assignment indexed by variable id.
    pub fn log_evaluate(&self, x: &[u8]) -> Result<f64> {
        self.check_assignment(x)?;
        self.pass(x, &mut EvalStats::default())
    }

    /// `ln P(e)`, summing out unobserved variables.
    pub fn log_marginal(&self, e: &PartialEvidence) -> Result<f64> {
        self.log_marginal_with_stats(e).map(|(v, _)| v)
    }

    pub fn log_marginal_with_stats(&self, e: &PartialEvidence) -> Result<(f64, EvalStats)> {
        if let Some(pos) = e.values()[self.variable_count.min(e.len())..]
            .iter()
            .position(Option::is_some)
        {
            return Err(XspnError::input(format!(
                "evidence observes X{} outside the {} modeled variables",
                self.variable_count + pos,
                self.variable_count
            )));
        }
        let mut stats = EvalStats::default();
        let v = self.pass(e, &mut stats)?;
        Ok((v, stats))
    }

    fn check_assignment(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.variable_count {
            return Err(XspnError::input(format!(
                "assignment has {} values, network models {} variables",
                x.len(),
                self.variable_count
            )));
        }
        if let Some(i) = x.iter().position(|&v| v > 1) {
            return Err(XspnError::input(format!("X{i} = {} is not binary", x[i])));
        }
        Ok(())
    }

    /// Per-row `ln P(x)`, evaluated in parallel.
    pub fn log_likelihoods(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        if data.cols() != self.variable_count {
            return Err(XspnError::input(format!(
                "dataset has {} columns, network models {} variables",
                data.cols(),
                self.variable_count
            )));
        }
        self.order()?;
        Ok((0..data.rows())
            .into_par_iter()
            .map(|i| {
                self.pass(data.row(i), &mut EvalStats::default())
                    .expect("order checked above")
            })
            .collect())
    }

    /// Mean per-sample log-likelihood in nats.
    pub fn mean_log_likelihood(&self, data: &BinaryDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(XspnError::input("cannot average over an empty dataset"));
        }
        let lls = self.log_likelihoods(data)?;
        Ok(lls.iter().sum::<f64>() / lls.len() as f64)
    }

    /// Number of leaves of each kind reachable from the root.
    pub fn leaf_census(&self) -> BTreeMap<LeafKind, usize> {
        let mut census = BTreeMap::new();
        for node in self.reachable_nodes() {
            if let NodeKind::Leaf(d) = &node.kind {
                *census.entry(d.kind()).or_insert(0) += 1;
            }
        }
        census
    }

    /// Sum weights plus leaf parameters over reachable nodes.
    pub fn parameter_count(&self) -> usize {
        self.reachable_nodes()
            .map(|node| match &node.kind {
                NodeKind::Sum { weights, .. } => weights.len(),
                NodeKind::Product { .. } => 0,
                NodeKind::Leaf(d) => d.parameter_count(),
            })
            .sum()
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> Result<usize> {
        let order = self.order()?;
        let mut depth = vec![0usize; self.nodes.len()];
        for &i in order {
            depth[i] = self.nodes[i]
                .children()
                .iter()
                .map(|c| depth[c.0] + 1)
                .max()
                .unwrap_or(0);
        }
        Ok(depth[self.root.0])
    }

    fn reachable_nodes(&self) -> impl Iterator<Item = &Node> {
        let reach = if self.root.0 < self.nodes.len() {
            reachable_from(&self.nodes, self.root.0)
        } else {
            vec![false; self.nodes.len()]
        };
        self.nodes.iter().zip(reach).filter(|(_, r)| *r).map(|(n, _)| n)
    }
}

fn reachable_from(nodes: &[Node], root: usize) -> Vec<bool> {
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(i) = stack.pop() {
        for c in nodes[i].children() {
            if c.0 < nodes.len() && !seen[c.0] {
                seen[c.0] = true;
                stack.push(c.0);
            }
        }
    }
    seen
}

/// Iterative DFS post-order from the root; `None` on dangling or cyclic references.
fn evaluation_order(nodes: &[Node], root: NodeId) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    if root.0 >= nodes.len() {
        return None;
    }
    let mut mark = vec![Mark::New; nodes.len()];
    let mut order = Vec::new();
    let mut stack: Vec<(usize, usize)> = vec![(root.0, 0)];
    mark[root.0] = Mark::Open;
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        let children = nodes[node].children();
        if *next < children.len() {
            let c = children[*next].0;
            *next += 1;
            if c >= nodes.len() {
                return None;
            }
            match mark[c] {
                Mark::Open => return None,
                Mark::Done => {}
                Mark::New => {
                    mark[c] = Mark::Open;
                    stack.push((c, 0));
                }
            }
        } else {
            mark[node] = Mark::Done;
            order.push(node);
            stack.pop();
        }
    }
    Some(order)
}

/// Nodes that belong to a directed cycle (Tarjan's strongly connected components).
fn nodes_on_cycles(nodes: &[Node]) -> Vec<usize> {
    let n = nodes.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut result = Vec::new();
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(start, 0)];
        index[start] = counter;
        low[start] = counter;
        counter += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            let children = nodes[v].children();
            if *next < children.len() {
                let w = children[*next].0;
                *next += 1;
                if w >= n {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    let self_loop = nodes[v].children().iter().any(|c| c.0 == v);
                    if component.len() > 1 || self_loop {
                        result.extend(component);
                    }
                }
            }
        }
    }
    result.sort_unstable();
    result
}
