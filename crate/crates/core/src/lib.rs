//! Linkage-rate estimation for partially observed grouped networks.
//!
//! A linkage rate θ_rs is the probability that a node of group `r` has at
//! least one edge into group `s` (excluding itself when `r == s`). When only
//! a simple random sample of nodes is observed, the naive fraction of sampled
//! `r` nodes with an observed link into the sampled `s` nodes is biased low by
//! a factor π_rs, the chance that a truly linked node shows a link in the
//! sample. This crate estimates π_rs by repeating the sampling one level down
//! (a subsample of the sample), corrects the naive rate, and attaches a
//! U-statistic projection variance with a delta-method interval.
//!
//! Layout:
//! - [`graph`]: immutable grouped network with restricted degree queries.
//! - [`netgen`]: zero-inflated truncated power-law block generator.
//! - [`sampling`]: MCAR samples, nested subsamples, subsample-pair streams.
//! - [`estimators`]: θ̃, the γ̂ kernel, π̂ and θ̂.
//! - [`variance`]: projections, Σ̂_γ, delta method, intervals.
//! - [`experiments`]: coverage simulation and the sampling-fraction sweep.
//! - [`io`], [`config`], [`cli`]: ingestion, configuration and commands.

#![forbid(unsafe_code)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod netgen;
pub mod rng;
pub mod sampling;
pub mod variance;

pub use error::{Error, Result};
pub use estimators::{
    adjusted_theta, estimate_pair, gamma_hat, pi_hat, pi_limit, unadjusted_theta, Backend,
    EstimateOptions, GammaEstimate, PointEstimate, ThetaReport,
};
pub use graph::{GroupId, GroupedNetwork, NodeId, NodeSubsetView, Within};
pub use netgen::{BlockDegreeMatrix, DegreeLawSpec};
pub use sampling::SampleIndex;
