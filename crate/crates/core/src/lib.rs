//! Device fingerprinting from probe-response latency on a shared wireless
//! channel.
//!
//! The pipeline: [`simulator`] produces traces with ground truth,
//! [`extractor`] pairs probes with responses and measures device latency,
//! [`accumulation`] scores how busy the channel was around each exchange,
//! [`dataset`] turns probe rounds into labelled feature rows, and [`models`]
//! trains and evaluates tree classifiers on them.

pub mod accumulation;
pub mod cli;
pub mod dataset;
pub mod exec;
pub mod extractor;
pub mod models;
pub mod pipeline;
pub mod simulator;
pub mod trace;
