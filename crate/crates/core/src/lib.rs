//! Set-valued dynamic programming for multi-period mean-risk portfolio
//! selection on finite scenario trees.
//!
//! The backward pass computes, for every node, the upper image of attainable
//! `(−E, ρ)` pairs for unit wealth, where `ρ` is recursive CVaR. The forward
//! pass turns a chosen point of the root frontier into positions along a
//! realized path that stay efficient at every later node.

// index loops mirror the matrix algebra; `!(a > b)` also rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod error;
pub mod lp;
pub mod report;
pub mod risk;
pub mod strategy;
pub mod tree;

pub use error::{Error, Result};
