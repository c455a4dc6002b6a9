//! Simulation core for straggler-tolerant, communication-efficient
//! parameter-server SGD.
//!
//! The crate models a parameter server that trains a quadratic-loss linear
//! regression with `M` simulated workers. Four schemes share one engine:
//!
//! * `d-sgd` and `d-adam`: every worker computes and uploads every iteration.
//! * `cada`: the server lazily selects individual workers whose gradients are
//!   predicted to have drifted, reusing stale gradients for the rest.
//! * `g-cada`: workers are partitioned into groups that replicate one data
//!   shard; the server selects groups and only waits for the fastest member of
//!   each selected group.
//!
//! Everything here is pure computation on in-memory data and builds without
//! `std`. File formats, CSV output and the command-line driver live in the
//! `psgd-sim` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod data;
mod error;
pub mod harness;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod straggler;

pub use crate::data::{Dataset, Shard, ShardingMode, ShardingPlan};
pub use crate::error::Error;
pub use crate::harness::{compare, run, Comparison, ExperimentConfig, MetricsRecord, RunSummary, Scheme, Simulation};
pub use crate::loss::ModelVector;
pub use crate::optim::OptimizerState;

pub type Result<T, E = Error> = core::result::Result<T, E>;
