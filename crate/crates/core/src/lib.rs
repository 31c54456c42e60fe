//! Numerical and parsing core of the news-exposure audit toolkit.
//!
//! The crate is `no_std` (it only needs `alloc`) so the algorithms can be
//! embedded anywhere; everything touching files, sockets, clocks or threads
//! lives in the `newsaudit` companion crate.
//!
//! Layout follows the audit pipeline:
//!
//! * [`probe`]: personas, prompt templates and probe plans.
//! * [`attribution`]: answer text to ordered outlet domains.
//! * [`enrichment`]: MBFC / PSL / IAB scales and outlet profiles.
//! * [`exposure`]: the long-format observation table.
//! * [`metrics`]: diversity, Gini/Lorenz, composition, rank-turbulence divergence.
//! * [`stats`]: ANOVA, Tukey HSD, REML mixed models, marginal means.
//! * [`analysis`]: per-question orchestration of the statistics.
//! * [`report`]: assembly of the audit report from persisted results.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod attribution;
pub mod enrichment;
mod error;
pub mod exposure;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
