//! Dynamic algorithm configuration for a memetic algorithm on the
//! carbon-aware permutation flow-shop scheduling problem.
//!
//! * [`cas`]: instances, the dual random-key decoder and the emissions evaluator.
//! * [`evolve`]: the memetic algorithm with per-generation parameter injection.
//! * [`env`]: the algorithm wrapped as a sequential decision environment.
//! * [`ppo`]: a from-scratch actor-critic trainer and policy files.
//! * [`tuner`]: budget-matched static tuning with a Parzen-estimator sampler.
//! * [`instgen`]: dataset generation.
//! * [`bench`]: experiment harness, statistics and reports.
//! * [`config`]: the configuration file.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cas;
pub mod fsutil;
pub mod seeding;
pub mod evolve;
pub mod instgen;
pub mod env;
pub mod ppo;
pub mod tuner;
pub mod bench;
pub mod config;
