//! Exchangeability-aware sum-product networks over binary variables.
//!
//! Networks mix sum, product and leaf nodes; besides univariate, factorized and
//! Chow-Liu leaves they support leaves over variables that are exchangeable with
//! respect to the number of ones. [`learn::learn`] grows such networks from data,
//! testing each sub-problem for exchangeability before recursing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod leaves;
pub mod learn;
pub mod model;
pub mod special;
pub mod stats;

pub use dataset::BinaryDataset;
pub use error::{Result, XspnError};
pub use learn::{learn, Hyperparams, TestMode, Variant};
pub use model::{Network, PartialEvidence, Scope, VariableId};
