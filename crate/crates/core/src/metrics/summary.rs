use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::compute::{
    availability_table, build_matrices, clustering_index, coefficient_of_variation, completion_stats,
    download_speed_series, seed_stats, similar_peer_discovery, utilization_series, CompletionStats, Matrix,
    SeedStats,
};
use super::{EventLog, PeerRecord};
use crate::{Error, Kb, PeerId, Result, Seconds};

/// Relative capacity distance under which two peers count as similar.
pub const SIMILAR_CAP_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPieceRow {
    pub time: Seconds,
    pub piece: usize,
    pub cumulative_total: usize,
    pub cumulative_unique: usize,
}

/// Everything derived from one run's [`EventLog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub rng_seed: u64,
    pub complete: bool,
    pub end_time: Seconds,
    pub piece_count: usize,
    pub seed: PeerId,
    pub peers: Vec<PeerRecord>,
    pub unchoke_matrix: Matrix,
    pub bytes_matrix: Matrix,
    pub clustering: BTreeMap<PeerId, Option<f64>>,
    pub availability: Vec<(PeerId, PeerId, f64)>,
    pub utilization: Vec<(usize, f64)>,
    pub completions: BTreeMap<PeerId, Seconds>,
    pub completion: CompletionStats,
    pub seed_stats: SeedStats,
    pub seed_pieces: Vec<SeedPieceRow>,
    pub download_speed: BTreeMap<PeerId, Vec<Kb>>,
    pub discovery: BTreeMap<PeerId, Option<Seconds>>,
}

/// Headline numbers of a run, as written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScalars {
    pub run: usize,
    pub rng_seed: u64,
    pub complete: bool,
    pub end_time: Seconds,
    pub piece_count: usize,
    pub optimal_completion_time: Option<Seconds>,
    pub pieces_at_full_copy: Option<usize>,
    pub duplicate_overhead: Option<f64>,
    pub class_mean_completion: BTreeMap<String, Seconds>,
    pub class_mean_clustering: BTreeMap<String, f64>,
    pub mean_utilization: Option<f64>,
    pub mid_session_utilization: Option<f64>,
    pub seed_service_cv: Option<f64>,
    pub mean_discovery_time: Option<Seconds>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl RunSummary {
    pub fn from_log(log: &EventLog) -> Self {
        let (unchoke_matrix, bytes_matrix) = build_matrices(log);
        let clustering = log.leechers().map(|p| (p, clustering_index(p, log))).collect();
        let mut seen = BTreeSet::new();
        let seed_pieces = log
            .seed_piece_uploads
            .iter()
            .enumerate()
            .map(|(i, u)| {
                seen.insert(u.piece);
                SeedPieceRow {
                    time: u.time,
                    piece: u.piece,
                    cumulative_total: i + 1,
                    cumulative_unique: seen.len(),
                }
            })
            .collect();
        Self {
            run: log.meta.run,
            rng_seed: log.meta.rng_seed,
            complete: log.meta.complete,
            end_time: log.meta.end_time,
            piece_count: log.meta.piece_count,
            seed: log.seed(),
            peers: log.peers.clone(),
            unchoke_matrix,
            bytes_matrix,
            clustering,
            availability: availability_table(log),
            utilization: utilization_series(log),
            completions: log.completions.clone(),
            completion: completion_stats(log),
            seed_stats: seed_stats(log),
            seed_pieces,
            download_speed: download_speed_series(log),
            discovery: similar_peer_discovery(log, SIMILAR_CAP_TOLERANCE),
        }
    }

    pub fn class_of(&self, id: PeerId) -> &str {
        &self.peers[id.index()].class_label
    }

    /// Leecher class labels in order of first appearance by id.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in self.peers.iter().filter(|p| !p.initial_seed) {
            if !out.contains(&p.class_label) {
                out.push(p.class_label.clone());
            }
        }
        out
    }

    pub fn class_members(&self, class: &str) -> Vec<PeerId> {
        self.peers
            .iter()
            .filter(|p| !p.initial_seed && p.class_label == class)
            .map(|p| p.id)
            .collect()
    }

    pub fn class_mean_completion(&self) -> BTreeMap<String, Seconds> {
        self.completion
            .per_class
            .iter()
            .filter_map(|(c, v)| mean(v.iter().copied()).map(|m| (c.clone(), m)))
            .collect()
    }

    /// Mean clustering index over the class members that have one.
    pub fn class_mean_clustering(&self) -> BTreeMap<String, f64> {
        self.classes()
            .into_iter()
            .filter_map(|c| {
                let m = mean(self.class_members(&c).iter().filter_map(|p| self.clustering[p]));
                m.map(|m| (c, m))
            })
            .collect()
    }

    pub fn mean_utilization(&self) -> Option<f64> {
        mean(self.utilization.iter().map(|&(_, r)| r))
    }

    /// Mean utilization over minutes lying inside `[lo, hi]` fractions of
    /// the run duration.
    pub fn utilization_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let (a, b) = (lo * self.end_time, hi * self.end_time);
        mean(
            self.utilization
                .iter()
                .filter(|&&(m, _)| m as f64 * 60.0 >= a && (m + 1) as f64 * 60.0 <= b)
                .map(|&(_, r)| r),
        )
    }

    pub fn seed_service_cv(&self) -> Option<f64> {
        let v: Vec<f64> = self.seed_stats.service.values().copied().collect();
        coefficient_of_variation(&v)
    }

    pub fn mean_discovery_time(&self) -> Option<Seconds> {
        mean(self.discovery.values().flatten().copied())
    }

    pub fn scalars(&self) -> RunScalars {
        RunScalars {
            run: self.run,
            rng_seed: self.rng_seed,
            complete: self.complete,
            end_time: self.end_time,
            piece_count: self.piece_count,
            optimal_completion_time: self.completion.optimal_completion_time,
            pieces_at_full_copy: self.seed_stats.pieces_at_full_copy,
            duplicate_overhead: self.seed_stats.duplicate_overhead,
            class_mean_completion: self.class_mean_completion(),
            class_mean_clustering: self.class_mean_clustering(),
            mean_utilization: self.mean_utilization(),
            mid_session_utilization: self.utilization_between(0.2, 0.8),
            seed_service_cv: self.seed_service_cv(),
            mean_discovery_time: self.mean_discovery_time(),
        }
    }
}

/// Cross-run view of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Runs included in the aggregate.
    pub runs: Vec<usize>,
    /// Incomplete runs left out.
    pub excluded: Vec<usize>,
    pub peers: Vec<PeerRecord>,
    pub unchoke_matrix: Matrix,
    pub bytes_matrix: Matrix,
    /// Per-peer clustering index averaged over the runs defining it.
    pub clustering: BTreeMap<PeerId, Option<f64>>,
    /// Completion times of all runs pooled per class, ascending.
    pub pooled_completions: BTreeMap<String, Vec<Seconds>>,
    /// (run, minute, ratio) of every run.
    pub utilization: Vec<(usize, usize, f64)>,
    pub mean_optimal_completion_time: Option<Seconds>,
    pub mean_duplicate_overhead: Option<f64>,
    pub class_mean_completion: BTreeMap<String, Seconds>,
    pub class_mean_clustering: BTreeMap<String, f64>,
    pub mean_mid_session_utilization: Option<f64>,
}

/// Averages complete runs. Incomplete runs are listed in `excluded`.
pub fn aggregate_runs(summaries: &[RunSummary]) -> Result<AggregateReport> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::logic("aggregate of no runs"))?;
    if let Some(bad) = summaries.iter().find(|s| s.peers.len() != first.peers.len()) {
        return Err(Error::logic(format!(
            "run {} has {} peers, run {} has {}",
            bad.run,
            bad.peers.len(),
            first.run,
            first.peers.len()
        )));
    }
    let (done, skipped): (Vec<&RunSummary>, Vec<&RunSummary>) = summaries.iter().partition(|s| s.complete);
    if done.is_empty() {
        return Err(Error::logic("no complete run to aggregate"));
    }
    let unchoke_matrix = Matrix::mean(&done.iter().map(|s| &s.unchoke_matrix).collect::<Vec<_>>())?;
    let bytes_matrix = Matrix::mean(&done.iter().map(|s| &s.bytes_matrix).collect::<Vec<_>>())?;
    let clustering = first
        .clustering
        .keys()
        .map(|&p| (p, mean(done.iter().filter_map(|s| s.clustering.get(&p).copied().flatten()))))
        .collect();
    let mut pooled_completions: BTreeMap<String, Vec<Seconds>> = BTreeMap::new();
    for s in &done {
        for (c, v) in &s.completion.per_class {
            pooled_completions.entry(c.clone()).or_default().extend(v);
        }
    }
    for v in pooled_completions.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    let utilization = done
        .iter()
        .flat_map(|s| s.utilization.iter().map(move |&(m, r)| (s.run, m, r)))
        .collect();
    let class_mean_completion = pooled_completions
        .iter()
        .filter_map(|(c, v)| mean(v.iter().copied()).map(|m| (c.clone(), m)))
        .collect();
    let mut class_mean_clustering = BTreeMap::new();
    for c in first.classes() {
        if let Some(m) = mean(done.iter().filter_map(|s| s.class_mean_clustering().get(&c).copied())) {
            class_mean_clustering.insert(c, m);
        }
    }
    Ok(AggregateReport {
        runs: done.iter().map(|s| s.run).collect(),
        excluded: skipped.iter().map(|s| s.run).collect(),
        peers: first.peers.clone(),
        unchoke_matrix,
        bytes_matrix,
        clustering,
        pooled_completions,
        utilization,
        mean_optimal_completion_time: mean(done.iter().filter_map(|s| s.completion.optimal_completion_time)),
        mean_duplicate_overhead: mean(done.iter().filter_map(|s| s.seed_stats.duplicate_overhead)),
        class_mean_completion,
        class_mean_clustering,
        mean_mid_session_utilization: mean(done.iter().filter_map(|s| s.utilization_between(0.2, 0.8))),
    })
}
