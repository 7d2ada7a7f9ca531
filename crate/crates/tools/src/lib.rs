//! File formats, experiment configuration, the rerun harness and the
//! command-line interface around `softirl-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiment;
pub mod formats;
