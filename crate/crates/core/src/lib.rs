#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alternating;
pub mod channel;
pub mod config;
pub mod covariance;
pub mod error;
pub mod experiment;
pub mod large_system;
pub mod linalg;
pub mod phase;
pub mod rate;
