//! Chamber simulator and DQN mobility controller for a mobile gNB that keeps
//! line of sight to a user terminal past a moving obstacle.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod chamber;
pub mod config;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod metrics;
pub mod scenarios;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
