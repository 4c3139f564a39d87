//! Network representation, structural validation and exact log-space inference.

mod io;
mod network;
mod scope;

pub use io::{EXCHANGEABLE_SMOOTHING, MODEL_FORMAT};
pub(crate) use io::{decode_network, Decimal, Field};
pub use network::{EvalStats, Network, Node, NodeId, NodeKind, Violation, ViolationKind, WEIGHT_TOL};
pub use scope::{PartialEvidence, Query, Scope, VariableId};
