//! Softmax inverse reinforcement learning by classification and fitted
//! fixed-point regression.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command-line harness live in the `softirl-tools` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod features;
pub mod gridworld;
pub mod math;
pub mod maxent;
pub mod mdp;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod solver;

pub use data::{DatasetMeta, SamplingRegime, Transition, TransitionDataset};
pub use error::{Error, Result};
pub use features::FeatureMap;
pub use mdp::{PolicyTable, SaDistribution, StateActionFn, StateDistribution, StateFn, TabularMdp};
