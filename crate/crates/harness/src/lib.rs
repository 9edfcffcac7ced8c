//! Experiment runners and command-line front end for `ckascope`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod invmap;
pub mod manifest;
pub mod manipulation;
pub mod sweep;

pub use error::{HarnessError, Result};
