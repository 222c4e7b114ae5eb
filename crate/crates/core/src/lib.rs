//! Deterministic discrete-event simulation of BitTorrent swarms.
//!
//! The crate models a private torrent with one initial seed and a flash crowd
//! of rate-limited leechers. Peers run the leecher-state choking algorithm
//! (regular and optimistic unchokes with snub detection), one of two
//! seed-state algorithms, and rarest-first piece selection. A fluid bandwidth
//! model turns unchoke decisions into block transfers, and every decision is
//! logged so the metrics module can derive clustering indices, peer
//! availability, upload utilization, completion times and seed overhead.
//!
//! The usual entry point is a [`scenario::ScenarioConfig`], either from a
//! named [`scenario::Preset`] or parsed from a TOML document, executed with
//! [`scenario::run_batch`].

pub mod choking;
pub mod engine;
mod error;
pub mod metrics;
pub mod pieces;
pub mod scenario;
pub mod sim;
pub mod swarm;
pub mod tracker;

pub use error::{Error, Result};
pub use swarm::PeerId;

/// Virtual time in seconds.
pub type Seconds = f64;

/// Data volume in kilobytes (1 kB = 1024 bytes, as in the client's rate limits).
pub type Kb = f64;
