//! Experiment harness for randomized-rounding heatmap codecs: config-driven
//! sweeps, offline evaluation of landmark files, and the oracle suite.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod landmarks;
pub mod report;
pub mod sweep;
pub mod verify;
