//! Host-side companion to `psgd-core`: MNIST-style IDX ingestion, CSV
//! metrics output, `key=value` config files and the pieces of the
//! `psgd-sim` command-line driver.

pub mod analyze;
pub mod config;
pub mod csv;
mod error;
pub mod idx;

pub use crate::error::SimError;
