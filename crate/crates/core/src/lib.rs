//! Synthetic web-navigation environments and a dual-system agent: a fast
//! learned reranker, a slow budgeted planner with memory, and a switch that
//! picks which one acts at each step.

// NaN-rejecting validation reads best as `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agentcore;
pub mod error;
pub mod harness;
pub mod hash;
pub mod system1;
pub mod switch;
pub mod system2;
pub mod tensorfile;
pub mod webenv;

pub use error::{Error, Result};
