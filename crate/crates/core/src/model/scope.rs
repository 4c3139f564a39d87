use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, XspnError};

/// Column index of a binary random variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableId(pub usize);

impl VariableId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}", self.0)
    }
}

/// Non-empty, strictly ascending set of variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scope(Vec<VariableId>);

impl Scope {
    pub fn new(mut vars: Vec<VariableId>) -> Result<Self> {
        if vars.is_empty() {
            return Err(XspnError::input("scope must not be empty"));
        }
        vars.sort_unstable();
        if vars.windows(2).any(|w| w[0] == w[1]) {
            return Err(XspnError::input("scope contains duplicate variables"));
        }
        Ok(Scope(vars))
    }

    /// Like [`Scope::new`] but rejects unsorted input instead of sorting it.
    pub fn from_sorted(vars: Vec<VariableId>) -> Result<Self> {
        if vars.is_empty() {
            return Err(XspnError::input("scope must not be empty"));
        }
        if vars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(XspnError::input("scope must be strictly ascending"));
        }
        Ok(Scope(vars))
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(indices.into_iter().map(VariableId).collect())
    }

    /// `{X_0, …, X_{n-1}}`.
    pub fn full(n: usize) -> Result<Self> {
        Self::from_indices(0..n)
    }

    pub fn single(var: VariableId) -> Self {
        Scope(vec![var])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vars(&self) -> &[VariableId] {
        &self.0
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = VariableId> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, var: VariableId) -> bool {
        self.0.binary_search(&var).is_ok()
    }

    pub fn max(&self) -> VariableId {
        *self.0.last().expect("scope is non-empty")
    }

    pub fn is_disjoint(&self, other: &Scope) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v.0)?;
        }
        write!(f, "}}")
    }
}

/// Per-variable observation: `Some(0|1)` observed, `None` marginalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialEvidence(Vec<Option<u8>>);

impl PartialEvidence {
    pub fn unobserved(n: usize) -> Self {
        PartialEvidence(vec![None; n])
    }

    pub fn from_assignment(x: &[u8]) -> Self {
        PartialEvidence(x.iter().map(|&v| Some(v)).collect())
    }

    pub fn from_options(values: Vec<Option<u8>>) -> Result<Self> {
        if values.iter().flatten().any(|&v| v > 1) {
            return Err(XspnError::input("evidence values must be 0 or 1"));
        }
        Ok(PartialEvidence(values))
    }

    /// Observes `x[i]` where `mask[i]` is true.
    pub fn masked(x: &[u8], mask: &[bool]) -> Self {
        PartialEvidence(
            x.iter()
                .zip(mask)
                .map(|(&v, &m)| if m { Some(v) } else { None })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn set(&mut self, var: VariableId, value: Option<u8>) {
        if var.0 >= self.0.len() {
            self.0.resize(var.0 + 1, None);
        }
        self.0[var.0] = value;
    }

    pub fn values(&self) -> &[Option<u8>] {
        &self.0
    }

    pub fn observed_count(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }
}

/// Read access to (possibly partial) variable values.
pub trait Query: Sync {
    fn value(&self, var: VariableId) -> Option<u8>;
}

impl Query for [u8] {
    fn value(&self, var: VariableId) -> Option<u8> {
        self.get(var.0).copied()
    }
}

impl Query for PartialEvidence {
    fn value(&self, var: VariableId) -> Option<u8> {
        self.0.get(var.0).copied().flatten()
    }
}
