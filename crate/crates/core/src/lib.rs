//! Policy learning for decentralized POMDPs from batch episode data.
//!
//! Each agent is represented by a stochastic finite-state controller whose
//! node transitions carry a truncated stick-breaking prior, so the number of
//! controller nodes is inferred from the data. Learning is variational Bayes
//! on an importance-weighted value estimate computed from logged episodes.

// Index loops mirror the recursions they implement; negated comparisons
// reject NaN along with out-of-range values.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod explore;
pub mod fsc;
pub mod inference;
pub mod model;
pub mod sbprior;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
