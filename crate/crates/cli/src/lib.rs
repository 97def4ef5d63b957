//! Batch front end for the sparse coding-and-counting tracker: run
//! configuration, tracking-quality metrics, synthetic sequence generation,
//! the end-to-end tracking runner, and the solver check suites.

pub mod checks;
pub mod config;
pub mod metrics;
pub mod runner;
pub mod synth;
