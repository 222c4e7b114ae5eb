//! Event log of a run and every quantity derived from it.
//!
//! A run appends closed intervals and block transfers to an [`EventLog`].
//! [`RunSummary::from_log`] derives the unchoke and byte matrices, clustering
//! indices, peer availability, upload utilization, completion statistics and
//! seed statistics from the log alone, so a stored log re-derives the same
//! summary bit for bit.

mod compute;
mod io;
mod summary;

pub use compute::{
    availability_table, build_matrices, class_random_baseline, clustering_index, coefficient_of_variation,
    completion_stats, download_speed_series, peer_availability, seed_stats, similar_peer_discovery,
    utilization_series, CompletionStats, Matrix, SeedStats,
};
pub use io::{read_log, write_aggregate, write_log, write_run_files, RUN_FILES};
pub use summary::{aggregate_runs, AggregateReport, RunScalars, RunSummary, SeedPieceRow};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::choking::UnchokeKind;
use crate::{Kb, PeerId, Seconds};

/// Bucket length of per-minute series.
pub const MINUTE: Seconds = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerRecord {
    pub id: PeerId,
    pub class_label: String,
    pub upload_cap: Kb,
    pub initial_seed: bool,
    pub joined_at: Seconds,
    pub departed_at: Option<Seconds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnchokeInterval {
    pub uploader: PeerId,
    pub downloader: PeerId,
    pub kind: UnchokeKind,
    pub start: Seconds,
    pub end: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestInterval {
    /// The interested peer.
    pub peer: PeerId,
    pub target: PeerId,
    pub start: Seconds,
    pub end: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipInterval {
    pub peer: PeerId,
    pub neighbor: PeerId,
    pub start: Seconds,
    pub end: Seconds,
}

/// One delivered block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub uploader: PeerId,
    pub downloader: PeerId,
    pub piece: usize,
    pub kb: Kb,
    pub time: Seconds,
}

/// A piece completed by a leecher with at least one block served by the
/// initial seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPieceUpload {
    pub piece: usize,
    pub time: Seconds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub run: usize,
    pub rng_seed: u64,
    pub seed: PeerId,
    pub piece_count: usize,
    pub end_time: Seconds,
    pub complete: bool,
}

/// Append-only record of one run. Every interval is closed by departure or
/// by the end of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub meta: LogMeta,
    pub peers: Vec<PeerRecord>,
    pub unchoke_intervals: Vec<UnchokeInterval>,
    pub interest_intervals: Vec<InterestInterval>,
    pub membership_intervals: Vec<MembershipInterval>,
    pub transfers: Vec<Transfer>,
    pub seed_piece_uploads: Vec<SeedPieceUpload>,
    pub completions: BTreeMap<PeerId, Seconds>,
}

impl EventLog {
    pub fn new(meta: LogMeta, peers: Vec<PeerRecord>) -> Self {
        Self {
            meta,
            peers,
            unchoke_intervals: Vec::new(),
            interest_intervals: Vec::new(),
            membership_intervals: Vec::new(),
            transfers: Vec::new(),
            seed_piece_uploads: Vec::new(),
            completions: BTreeMap::new(),
        }
    }

    pub fn peer(&self, id: PeerId) -> &PeerRecord {
        &self.peers[id.index()]
    }

    pub fn class_of(&self, id: PeerId) -> &str {
        &self.peer(id).class_label
    }

    pub fn seed(&self) -> PeerId {
        self.meta.seed
    }

    /// Leecher ids in id order.
    pub fn leechers(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.peers.iter().filter(|p| !p.initial_seed).map(|p| p.id)
    }
}
