//! Collection, IO and command-line front end of the news-exposure audit.
//!
//! The numerical and parsing work lives in [`newsaudit_core`]; this crate
//! adds the pieces that need an operating system: configuration files,
//! HTTP transports for search agents, redirect resolution, dataset
//! loaders, the on-disk run layout and report rendering.

pub mod agents;
pub mod collect;
pub mod config;
pub mod datasets;
pub mod emit;
mod error;
pub mod iab;
pub mod pipeline;
pub mod resolve;
pub mod store;

pub use error::{Error, Result};
pub use newsaudit_core as core;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Current UTC time, RFC 3339 with second precision.
pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
