//! Wrist accelerometer pipeline for detecting medication-taking gestures.
//!
//! The stages, in order: [`ingest`] reads session archives, [`annotate`]
//! turns self-reported marks into refined gesture spans, [`window`] flattens
//! spans into fixed-width vectors, [`mlp`] trains a one-hidden-layer network,
//! and [`experiments`] runs the evaluation protocols. [`synth`] generates
//! stores with known ground truth. [`pipeline`] chains the stages from a
//! store to a vectorized dataset, and [`cli`] backs the `medsensor` binary.

pub mod annotate;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod ingest;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod plot;
pub mod seed;
pub mod synth;
pub mod window;
