use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EventLog, MINUTE};
use crate::choking::UnchokeKind;
use crate::{Error, Kb, PeerId, Result, Seconds};

/// Square matrix indexed by peer id; row = uploader, column = downloader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: PeerId, col: PeerId) -> f64 {
        self.data[row.index() * self.n + col.index()]
    }

    pub fn add(&mut self, row: PeerId, col: PeerId, v: f64) {
        self.data[row.index() * self.n + col.index()] += v;
    }

    pub fn row(&self, row: PeerId) -> &[f64] {
        let i = row.index() * self.n;
        &self.data[i..i + self.n]
    }

    pub fn row_sum(&self, row: PeerId) -> f64 {
        self.row(row).iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Element-wise mean; all matrices must have the same size.
    pub fn mean(ms: &[&Matrix]) -> Result<Matrix> {
        let first = ms.first().ok_or_else(|| Error::logic("mean of no matrices"))?;
        let mut out = Matrix::zeros(first.n);
        for m in ms {
            if m.n != first.n {
                return Err(Error::logic(format!("matrix sizes {} and {} differ", m.n, first.n)));
            }
            for (o, v) in out.data.iter_mut().zip(&m.data) {
                *o += v;
            }
        }
        let k = ms.len() as f64;
        out.data.iter_mut().for_each(|v| *v /= k);
        Ok(out)
    }
}

/// Regular-unchoke seconds and uploaded bytes between every pair of peers.
pub fn build_matrices(log: &EventLog) -> (Matrix, Matrix) {
    let n = log.peers.len();
    let mut unchoke = Matrix::zeros(n);
    for iv in &log.unchoke_intervals {
        if iv.kind == UnchokeKind::Regular {
            unchoke.add(iv.uploader, iv.downloader, iv.end - iv.start);
        }
    }
    let mut bytes = Matrix::zeros(n);
    for t in &log.transfers {
        bytes.add(t.uploader, t.downloader, t.kb * 1024.0);
    }
    (unchoke, bytes)
}

/// Share of `peer`'s regular-unchoke time that went to peers of its own
/// class. Unchokes of the initial seed are ignored; `None` when nothing is
/// left to divide by or when `peer` is the initial seed.
pub fn clustering_index(peer: PeerId, log: &EventLog) -> Option<f64> {
    if peer == log.seed() {
        return None;
    }
    let own = log.class_of(peer);
    let (mut same, mut all) = (0.0, 0.0);
    for iv in &log.unchoke_intervals {
        if iv.uploader != peer || iv.kind != UnchokeKind::Regular || iv.downloader == log.seed() {
            continue;
        }
        let d = iv.end - iv.start;
        all += d;
        if log.class_of(iv.downloader) == own {
            same += d;
        }
    }
    (all > 0.0).then(|| same / all)
}

/// Clustering index expected when unchokes ignore class: the share of the
/// other leechers that belong to the same class.
pub fn class_random_baseline(class_size: usize, leechers: usize) -> f64 {
    (class_size as f64 - 1.0) / (leechers as f64 - 1.0)
}

fn total_overlap(a: &[(Seconds, Seconds)], b: &[(Seconds, Seconds)]) -> Seconds {
    let mut sum = 0.0;
    for &(s1, e1) in a {
        for &(s2, e2) in b {
            let d = e1.min(e2) - s1.max(s2);
            if d > 0.0 {
                sum += d;
            }
        }
    }
    sum
}

/// Time `x` was interested in `y` divided by the time `y` spent in `x`'s
/// peer set. `None` when they never shared a peer set.
pub fn peer_availability(x: PeerId, y: PeerId, log: &EventLog) -> Option<f64> {
    let member: Vec<_> = log
        .membership_intervals
        .iter()
        .filter(|m| m.peer == x && m.neighbor == y)
        .map(|m| (m.start, m.end))
        .collect();
    let interest: Vec<_> = log
        .interest_intervals
        .iter()
        .filter(|i| i.peer == x && i.target == y)
        .map(|i| (i.start, i.end))
        .collect();
    availability_ratio(&member, &interest)
}

fn availability_ratio(member: &[(Seconds, Seconds)], interest: &[(Seconds, Seconds)]) -> Option<f64> {
    let m: Seconds = member.iter().map(|(s, e)| e - s).sum();
    if m <= 0.0 {
        return None;
    }
    Some((total_overlap(member, interest) / m).min(1.0))
}

/// Availability for every ordered pair that shared a peer set, in (x, y) order.
pub fn availability_table(log: &EventLog) -> Vec<(PeerId, PeerId, f64)> {
    type Spans = BTreeMap<(PeerId, PeerId), Vec<(Seconds, Seconds)>>;
    let mut member: Spans = BTreeMap::new();
    for m in &log.membership_intervals {
        member.entry((m.peer, m.neighbor)).or_default().push((m.start, m.end));
    }
    let mut interest: Spans = BTreeMap::new();
    for i in &log.interest_intervals {
        interest.entry((i.peer, i.target)).or_default().push((i.start, i.end));
    }
    member
        .iter()
        .filter_map(|(&(x, y), spans)| {
            let int = interest.get(&(x, y)).map_or(&[][..], Vec::as_slice);
            availability_ratio(spans, int).map(|r| (x, y, r))
        })
        .collect()
}

/// Upload utilization of every complete minute of the run.
///
/// A minute's bytes are those of blocks finished inside it; the capacity is
/// that of the peers still connected when the minute ends.
pub fn utilization_series(log: &EventLog) -> Vec<(usize, f64)> {
    let minutes = (log.meta.end_time / MINUTE).floor() as usize;
    let mut uploaded = vec![0.0; minutes];
    for t in &log.transfers {
        let m = (t.time / MINUTE).floor() as usize;
        if m < minutes {
            uploaded[m] += t.kb;
        }
    }
    (0..minutes)
        .map(|m| {
            let end = (m + 1) as f64 * MINUTE;
            let cap: Kb = log
                .peers
                .iter()
                .filter(|p| p.joined_at <= end && p.departed_at.map_or(true, |d| d > end))
                .map(|p| p.upload_cap)
                .sum();
            let ratio = if cap > 0.0 { uploaded[m] / (cap * MINUTE) } else { 0.0 };
            (m, ratio)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionStats {
    /// Download durations per class, ascending.
    pub per_class: BTreeMap<String, Vec<Seconds>>,
    /// First instant at which the initial seed has served every piece.
    pub optimal_completion_time: Option<Seconds>,
}

pub fn completion_stats(log: &EventLog) -> CompletionStats {
    let mut per_class: BTreeMap<String, Vec<Seconds>> = BTreeMap::new();
    for (&peer, &t) in &log.completions {
        let p = log.peer(peer);
        per_class.entry(p.class_label.clone()).or_default().push(t - p.joined_at);
    }
    for v in per_class.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    let optimal_completion_time = full_copy_index(log).map(|i| log.seed_piece_uploads[i].time);
    if optimal_completion_time.is_none() {
        log::warn!("run {}: the seed never served a full copy", log.meta.run);
    }
    CompletionStats {
        per_class,
        optimal_completion_time,
    }
}

/// Index into the seed-upload log of the upload that completes the first
/// full copy.
fn full_copy_index(log: &EventLog) -> Option<usize> {
    let mut seen = BTreeSet::new();
    for (i, u) in log.seed_piece_uploads.iter().enumerate() {
        seen.insert(u.piece);
        if seen.len() == log.meta.piece_count {
            return Some(i);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    /// Pieces uploaded by the seed up to and including the optimal instant.
    pub pieces_at_full_copy: Option<usize>,
    pub duplicate_overhead: Option<f64>,
    /// Unchoke seconds (regular and optimistic) from the seed per leecher.
    pub service: BTreeMap<PeerId, Seconds>,
}

pub fn seed_stats(log: &EventLog) -> SeedStats {
    let pieces_at_full_copy = full_copy_index(log).map(|i| {
        let t = log.seed_piece_uploads[i].time;
        log.seed_piece_uploads.iter().take_while(|u| u.time <= t).count()
    });
    let pc = log.meta.piece_count as f64;
    let duplicate_overhead = pieces_at_full_copy.map(|k| (k as f64 - pc) / pc);
    let mut service: BTreeMap<PeerId, Seconds> = log.leechers().map(|p| (p, 0.0)).collect();
    for iv in &log.unchoke_intervals {
        if iv.uploader == log.seed() && iv.kind != UnchokeKind::None {
            *service.entry(iv.downloader).or_insert(0.0) += iv.end - iv.start;
        }
    }
    SeedStats {
        pieces_at_full_copy,
        duplicate_overhead,
        service,
    }
}

/// Population standard deviation over mean; `None` for an empty or
/// zero-mean sample.
pub fn coefficient_of_variation(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

/// Mean download speed (kB/s) of each leecher over every minute from its
/// join to its completion or the end of the run.
pub fn download_speed_series(log: &EventLog) -> BTreeMap<PeerId, Vec<Kb>> {
    let mut out = BTreeMap::new();
    for p in log.leechers() {
        let rec = log.peer(p);
        let end = log
            .completions
            .get(&p)
            .copied()
            .or(rec.departed_at)
            .unwrap_or(log.meta.end_time);
        let buckets = ((end - rec.joined_at) / MINUTE).ceil().max(1.0) as usize;
        out.insert(p, vec![0.0; buckets]);
    }
    for t in &log.transfers {
        if let Some(series) = out.get_mut(&t.downloader) {
            let m = ((t.time - log.peer(t.downloader).joined_at) / MINUTE).floor() as usize;
            let last = series.len() - 1;
            series[m.min(last)] += t.kb / MINUTE;
        }
    }
    out
}

/// Per leecher, the first time it gave a regular unchoke to another leecher
/// whose capacity is within `tolerance` (relative) of its own. Leechers with
/// no such neighbor in the swarm are omitted; those that never found one map
/// to `None`.
pub fn similar_peer_discovery(log: &EventLog, tolerance: f64) -> BTreeMap<PeerId, Option<Seconds>> {
    let leechers: Vec<PeerId> = log.leechers().collect();
    let similar = |a: PeerId, b: PeerId| {
        let (ca, cb) = (log.peer(a).upload_cap, log.peer(b).upload_cap);
        (ca - cb).abs() <= tolerance * ca + 1e-9
    };
    let mut out = BTreeMap::new();
    for &p in &leechers {
        if !leechers.iter().any(|&q| q != p && similar(p, q)) {
            continue;
        }
        let first = log
            .unchoke_intervals
            .iter()
            .filter(|iv| {
                iv.uploader == p
                    && iv.kind == UnchokeKind::Regular
                    && iv.downloader != log.seed()
                    && similar(p, iv.downloader)
            })
            .map(|iv| iv.start - log.peer(p).joined_at)
            .min_by(f64::total_cmp);
        out.insert(p, first);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{
        InterestInterval, LogMeta, MembershipInterval, PeerRecord, SeedPieceUpload, Transfer, UnchokeInterval,
    };

    fn peer(id: u32, class: &str, cap: Kb) -> PeerRecord {
        PeerRecord {
            id: PeerId(id),
            class_label: class.into(),
            upload_cap: cap,
            initial_seed: class == "seed",
            joined_at: 0.0,
            departed_at: None,
        }
    }

    fn log(peers: Vec<PeerRecord>, piece_count: usize, end_time: Seconds) -> EventLog {
        let seed = peers.iter().find(|p| p.initial_seed).map_or(PeerId(99), |p| p.id);
        EventLog::new(
            LogMeta {
                run: 0,
                rng_seed: 0,
                seed,
                piece_count,
                end_time,
                complete: true,
            },
            peers,
        )
    }

    fn unchoke(u: u32, d: u32, kind: UnchokeKind, start: Seconds, end: Seconds) -> UnchokeInterval {
        UnchokeInterval {
            uploader: PeerId(u),
            downloader: PeerId(d),
            kind,
            start,
            end,
        }
    }

    fn three_peers() -> EventLog {
        log(vec![peer(1, "a", 20.0), peer(2, "a", 20.0), peer(3, "b", 50.0), peer(4, "seed", 200.0)], 3, 1000.0)
    }

    #[test]
    fn clustering_ratio_and_identity() {
        let mut l = three_peers();
        l.unchoke_intervals.push(unchoke(1, 2, UnchokeKind::Regular, 0.0, 300.0));
        l.unchoke_intervals.push(unchoke(1, 3, UnchokeKind::Regular, 300.0, 400.0));
        l.unchoke_intervals.push(unchoke(1, 3, UnchokeKind::Optimistic, 500.0, 900.0));
        assert_eq!(clustering_index(PeerId(1), &l), Some(0.75));
        l.unchoke_intervals.push(unchoke(2, 1, UnchokeKind::Regular, 0.0, 10.0));
        l.unchoke_intervals.push(unchoke(2, 4, UnchokeKind::Regular, 0.0, 500.0));
        assert_eq!(clustering_index(PeerId(2), &l), Some(1.0));
        assert_eq!(clustering_index(PeerId(3), &l), None);
        assert_eq!(clustering_index(PeerId(4), &l), None);
    }

    #[test]
    fn random_baseline() {
        assert!((class_random_baseline(13, 40) - 12.0 / 39.0).abs() < 1e-15);
    }

    #[test]
    fn availability_examples() {
        let mut l = three_peers();
        let m = |s, e| MembershipInterval {
            peer: PeerId(1),
            neighbor: PeerId(2),
            start: s,
            end: e,
        };
        let i = |s, e| InterestInterval {
            peer: PeerId(1),
            target: PeerId(2),
            start: s,
            end: e,
        };
        l.membership_intervals.push(m(0.0, 800.0));
        assert_eq!(peer_availability(PeerId(1), PeerId(2), &l), Some(0.0));
        l.interest_intervals.push(i(100.0, 300.0));
        assert_eq!(peer_availability(PeerId(1), PeerId(2), &l), Some(0.25));
        // Interest outside the co-membership is clipped away.
        l.interest_intervals.push(i(900.0, 950.0));
        assert_eq!(peer_availability(PeerId(1), PeerId(2), &l), Some(0.25));
        l.interest_intervals.clear();
        l.interest_intervals.push(i(0.0, 800.0));
        assert_eq!(peer_availability(PeerId(1), PeerId(2), &l), Some(1.0));
        assert_eq!(peer_availability(PeerId(2), PeerId(1), &l), None);
        assert_eq!(availability_table(&l), vec![(PeerId(1), PeerId(2), 1.0)]);
    }

    fn transfer(u: u32, d: u32, kb: Kb, time: Seconds) -> Transfer {
        Transfer {
            uploader: PeerId(u),
            downloader: PeerId(d),
            piece: 0,
            kb,
            time,
        }
    }

    #[test]
    fn utilization_full_pipe_and_idle_minute() {
        let mut l = log(vec![peer(1, "a", 20.0), peer(2, "seed", 0.0)], 1, 120.0);
        for k in 0..75 {
            l.transfers.push(transfer(1, 2, 16.0, 0.8 * k as f64 + 0.5));
        }
        assert_eq!(utilization_series(&l), vec![(0, 1.0), (1, 0.0)]);
    }

    #[test]
    fn utilization_counts_only_survivors_capacity() {
        let mut peers = vec![peer(1, "a", 50.0), peer(2, "a", 60.0), peer(3, "a", 40.0)];
        peers[0].departed_at = Some(30.0);
        let mut l = log(peers, 1, 60.0);
        l.transfers.push(transfer(1, 2, 600.0, 29.0));
        let got = utilization_series(&l);
        // Interval oracle: 600 kB over survivors' 100 kB/s for 60 s.
        assert_eq!(got, vec![(0, 600.0 / (100.0 * 60.0))]);
    }

    #[test]
    fn optimal_time_and_overhead() {
        let mut l = three_peers();
        for (piece, time) in [(0, 1.0), (1, 2.0), (0, 3.0), (1, 4.0), (2, 5.0), (2, 6.0)] {
            l.seed_piece_uploads.push(SeedPieceUpload { piece, time });
        }
        let c = completion_stats(&l);
        assert_eq!(c.optimal_completion_time, Some(5.0));
        let s = seed_stats(&l);
        assert_eq!(s.pieces_at_full_copy, Some(5));
        assert!((s.duplicate_overhead.unwrap() - 2.0 / 3.0).abs() < 1e-12);

        // 527 pieces out when the last of 453 goes out.
        let mut l = log(vec![peer(1, "a", 20.0), peer(2, "seed", 200.0)], 453, 1000.0);
        let mut t = 0.0;
        for p in 0..452 {
            l.seed_piece_uploads.push(SeedPieceUpload { piece: p, time: t });
            t += 1.0;
        }
        for p in 0..74 {
            l.seed_piece_uploads.push(SeedPieceUpload { piece: p, time: t });
            t += 1.0;
        }
        l.seed_piece_uploads.push(SeedPieceUpload { piece: 452, time: t });
        let s = seed_stats(&l);
        assert_eq!(s.pieces_at_full_copy, Some(527));
        assert!((s.duplicate_overhead.unwrap() - 74.0 / 453.0).abs() < 1e-12);
    }

    #[test]
    fn no_duplicates_no_overhead() {
        let mut l = three_peers();
        for piece in 0..3 {
            l.seed_piece_uploads.push(SeedPieceUpload { piece, time: piece as f64 });
        }
        assert_eq!(seed_stats(&l).duplicate_overhead, Some(0.0));
        l.seed_piece_uploads.pop();
        assert_eq!(completion_stats(&l).optimal_completion_time, None);
        assert_eq!(seed_stats(&l).duplicate_overhead, None);
    }

    #[test]
    fn seed_service_sums_both_kinds() {
        let mut l = three_peers();
        l.unchoke_intervals.push(unchoke(4, 1, UnchokeKind::Regular, 0.0, 10.0));
        l.unchoke_intervals.push(unchoke(4, 1, UnchokeKind::Optimistic, 20.0, 50.0));
        let s = seed_stats(&l).service;
        assert_eq!(s[&PeerId(1)], 40.0);
        assert_eq!(s[&PeerId(2)], 0.0);
        assert!(!s.contains_key(&PeerId(4)));
    }

    #[test]
    fn matrices_conserve_bytes() {
        let mut l = three_peers();
        l.transfers.push(transfer(1, 2, 16.0, 1.0));
        l.transfers.push(transfer(1, 3, 16.0, 2.0));
        l.transfers.push(transfer(4, 1, 16.0, 3.0));
        l.unchoke_intervals.push(unchoke(1, 2, UnchokeKind::Regular, 0.0, 30.0));
        let (u, b) = build_matrices(&l);
        assert_eq!(b.row_sum(PeerId(1)), 32.0 * 1024.0);
        assert_eq!(b.total(), 48.0 * 1024.0);
        assert_eq!(u.get(PeerId(1), PeerId(2)), 30.0);
        assert!(u.row(PeerId(3)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[5.0, 5.0, 5.0]), Some(0.0));
        assert_eq!(coefficient_of_variation(&[0.0, 2.0]), Some(1.0));
        assert_eq!(coefficient_of_variation(&[]), None);
    }

    #[test]
    fn discovery_needs_similar_regular_unchoke() {
        let mut l = log(
            vec![peer(1, "a", 50.0), peer(2, "a", 55.0), peer(3, "a", 100.0), peer(4, "a", 20.0), peer(5, "seed", 200.0)],
            1,
            500.0,
        );
        l.unchoke_intervals.push(unchoke(1, 3, UnchokeKind::Regular, 5.0, 40.0));
        l.unchoke_intervals.push(unchoke(1, 2, UnchokeKind::Optimistic, 10.0, 40.0));
        l.unchoke_intervals.push(unchoke(1, 2, UnchokeKind::Regular, 40.0, 70.0));
        let d = similar_peer_discovery(&l, 0.1);
        assert_eq!(d[&PeerId(1)], Some(40.0));
        assert_eq!(d[&PeerId(2)], None);
        assert!(!d.contains_key(&PeerId(3)));
        assert!(!d.contains_key(&PeerId(4)));
    }

    #[test]
    fn speed_series_buckets_by_minute() {
        let mut l = three_peers();
        l.completions.insert(PeerId(1), 90.0);
        l.transfers.push(transfer(4, 1, 600.0, 30.0));
        l.transfers.push(transfer(4, 1, 1200.0, 90.0));
        let s = download_speed_series(&l);
        assert_eq!(s[&PeerId(1)], vec![10.0, 20.0]);
    }
}
