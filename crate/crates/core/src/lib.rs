//! Spatial point-process identification for cellular base-station layouts.
//!
//! The crate covers the whole pipeline: ingesting BS records and projecting
//! them onto planar windows, simulating the six candidate processes (Poisson,
//! hardcore, Strauss, Geyer saturation, Matérn cluster, Thomas cluster),
//! estimating Ripley's K and Besag's L, fitting models by maximum
//! pseudolikelihood and second-order minimum contrast, running simultaneous
//! Monte-Carlo envelope tests on L or on SIR coverage, and aggregating
//! per-region test outcomes into outage and clustering probabilities.
//!
//! All distances are in kilometres, intensities in points per km².

pub mod cli;
pub mod coverage;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod hypothesis;
pub mod mcmc;
pub mod models;
pub mod neighbors;
pub mod optimize;
pub mod rng;
pub mod summaries;

pub use error::{Error, Result};
pub use geometry::{BsRecord, Mark, Point, PointPattern, Window};
pub use models::ProcessModel;
pub use summaries::{DistanceGrid, SummaryCurve};
