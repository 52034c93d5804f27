//! Flow-level datacenter traffic trace generation.
//!
//! Generation runs in two stages. Stage one ([`shaping`]) samples flow sizes
//! and inter-arrival times that match target distributions. Stage two
//! ([`packers`]) assigns each flow a source-destination pair so the packed
//! per-pair load follows a target traffic matrix ([`targets`]) without
//! exceeding any node's port capacity.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod error;
pub mod packers;
pub mod pipeline;
pub mod shaping;
pub mod targets;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
