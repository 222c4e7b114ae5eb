//! Brute-force oracles shared by the integration tests and the acceptance
//! suite. They restate each rule in the most literal form available
//! (counting, enumeration, progressive filling) instead of reusing the
//! library's sort-based code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use swarmsim::choking::Candidate;
use swarmsim::swarm::Bitfield;
use swarmsim::sim::Flow;
use swarmsim::{PeerId, Seconds};

/// True when `a` outranks `b`: higher rate, then lower id.
fn outranks_by_rate(a: &Candidate, b: &Candidate) -> bool {
    a.rate > b.rate || (a.rate == b.rate && a.id < b.id)
}

/// Peers that would get a regular unchoke from a leecher: a candidate is in
/// when fewer than `n - 1` eligible candidates outrank it.
pub fn leecher_regular(n: usize, candidates: &[Candidate]) -> Vec<PeerId> {
    let eligible: Vec<&Candidate> = candidates.iter().filter(|c| c.interested && !c.snubbed).collect();
    let mut picked: Vec<(usize, PeerId)> = eligible
        .iter()
        .map(|c| (eligible.iter().filter(|o| outranks_by_rate(o, c)).count(), c.id))
        .filter(|&(better, _)| better < n.saturating_sub(1))
        .collect();
    picked.sort();
    picked.into_iter().map(|(_, id)| id).collect()
}

/// Expected optimistic part of a leecher round: `(optimistic, extra, new memory)`.
pub fn leecher_optimistic(
    regular: &[PeerId],
    memory: Option<PeerId>,
    candidates: &[Candidate],
    rotate: bool,
    draw_order: &[PeerId],
) -> (Vec<PeerId>, Vec<PeerId>, Option<PeerId>) {
    let interested = |id: PeerId| candidates.iter().any(|c| c.id == id && c.interested);
    if let Some(o) = memory {
        if !rotate && !regular.contains(&o) && interested(o) {
            return (vec![o], vec![], Some(o));
        }
    }
    let mut extra = Vec::new();
    for &id in draw_order {
        if regular.contains(&id) || extra.contains(&id) || !candidates.iter().any(|c| c.id == id) {
            continue;
        }
        if interested(id) {
            return (vec![id], extra, Some(id));
        }
        extra.push(id);
    }
    (vec![], extra, None)
}

/// Regular part of a recency-ordered seed round.
pub fn seed_regular(n: usize, n_o: usize, window: Seconds, now: Seconds, candidates: &[Candidate]) -> Vec<PeerId> {
    let eligible: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| !c.is_seed && c.interested && c.unchoked)
        .filter(|c| c.pending_requests || matches!(c.last_unchoked_at, Some(t) if now - t < window))
        .collect();
    let key = |c: &Candidate| c.last_unchoked_at.unwrap_or(f64::NEG_INFINITY);
    let outranks = |a: &Candidate, b: &Candidate| key(a) > key(b) || (key(a) == key(b) && outranks_by_rate(a, b));
    let slots = n.saturating_sub(n_o);
    let mut picked: Vec<(usize, PeerId)> = eligible
        .iter()
        .map(|c| (eligible.iter().filter(|o| outranks(o, c)).count(), c.id))
        .filter(|&(better, _)| better < slots)
        .collect();
    picked.sort();
    picked.into_iter().map(|(_, id)| id).collect()
}

/// Optimistic part of a seed round: the first interested leechers in
/// `draw_order` outside `regular`, up to the free slots.
pub fn seed_optimistic(n: usize, regular: &[PeerId], candidates: &[Candidate], draw_order: &[PeerId]) -> Vec<PeerId> {
    let mut out = Vec::new();
    for &id in draw_order {
        if out.len() + regular.len() >= n {
            break;
        }
        if !regular.contains(&id) && candidates.iter().any(|c| c.id == id && c.interested && !c.is_seed) {
            out.push(id);
        }
    }
    out
}

/// Progressive filling: every unfrozen flow grows at the same pace and
/// freezes once its uploader has no capacity left.
pub fn water_fill(flows: &[Flow], caps: &BTreeMap<PeerId, f64>) -> BTreeMap<Flow, f64> {
    let mut rate: BTreeMap<Flow, f64> = flows.iter().map(|&f| (f, 0.0)).collect();
    let mut frozen: BTreeMap<Flow, bool> = flows.iter().map(|&f| (f, false)).collect();
    loop {
        let active: Vec<Flow> = frozen.iter().filter(|(_, z)| !**z).map(|(f, _)| *f).collect();
        if active.is_empty() {
            return rate;
        }
        let used = |rate: &BTreeMap<Flow, f64>, p: PeerId| -> f64 {
            rate.iter().filter(|(f, _)| f.uploader == p).map(|(_, r)| r).sum()
        };
        let mut step = f64::INFINITY;
        for (&p, &cap) in caps {
            let k = active.iter().filter(|f| f.uploader == p).count();
            if k > 0 {
                step = step.min((cap - used(&rate, p)) / k as f64);
            }
        }
        for f in &active {
            *rate.get_mut(f).unwrap() += step;
        }
        for f in &active {
            if used(&rate, f.uploader) >= caps[&f.uploader] - 1e-9 {
                frozen.insert(*f, true);
            }
        }
    }
}

/// Copy count of every piece, recounted from the neighbors' bitfields.
pub fn recount(piece_count: usize, neighbors: &[Bitfield]) -> Vec<u32> {
    (0..piece_count)
        .map(|p| neighbors.iter().filter(|b| b.has(p)).count() as u32)
        .collect()
}

/// Random candidate tables over at most `max_peers` remote peers. Rates and
/// unchoke times come from small grids so ties are common.
pub fn candidates(max_peers: usize) -> impl Strategy<Value = Vec<Candidate>> {
    proptest::collection::vec(
        (
            any::<bool>(),
            any::<bool>(),
            0u8..5,
            any::<bool>(),
            proptest::option::of(0u8..6),
            any::<bool>(),
            proptest::bool::weighted(0.15),
        ),
        0..=max_peers,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (interested, snubbed, rate, unchoked, last, pending, is_seed))| Candidate {
                id: PeerId(i as u32 + 1),
                interested,
                snubbed,
                rate: rate as f64 * 10.0,
                unchoked,
                last_unchoked_at: last.map(|t| t as f64 * 5.0),
                pending_requests: pending,
                is_seed,
            })
            .collect()
    })
}

/// A candidate table with a matching random draw order.
pub fn round_input(max_peers: usize) -> impl Strategy<Value = (Vec<Candidate>, Vec<PeerId>)> {
    candidates(max_peers).prop_flat_map(|cands| {
        let ids: Vec<PeerId> = cands.iter().map(|c| c.id).collect();
        (Just(cands), Just(ids).prop_shuffle())
    })
}
