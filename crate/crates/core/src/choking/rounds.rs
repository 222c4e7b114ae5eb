use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CandidateOrder, UnchokeKind};
use crate::{Kb, PeerId, Seconds};

/// Why a round runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    Timer,
    PeerLeft,
    InterestFlip,
}

/// What a choking round knows about one remote peer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: PeerId,
    /// The remote is interested in the local peer.
    pub interested: bool,
    pub snubbed: bool,
    /// Ranking rate: upload rate to the local peer for leechers, download
    /// rate from the local peer for seeds.
    pub rate: Kb,
    pub unchoked: bool,
    pub last_unchoked_at: Option<Seconds>,
    /// The remote has block requests outstanding at the local peer.
    pub pending_requests: bool,
    pub is_seed: bool,
}

impl Candidate {
    pub fn new(id: PeerId) -> Self {
        Self {
            id,
            interested: false,
            snubbed: false,
            rate: 0.0,
            unchoked: false,
            last_unchoked_at: None,
            pending_requests: false,
            is_seed: false,
        }
    }
}

/// Peers to keep or make unchoked after a round; everyone else is choked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundDecision {
    pub regular: Vec<PeerId>,
    pub optimistic: Vec<PeerId>,
    /// Uninterested peers unchoked while searching for an optimistic peer.
    pub extra: Vec<PeerId>,
}

impl RoundDecision {
    pub fn kind_of(&self, id: PeerId) -> UnchokeKind {
        if self.regular.contains(&id) {
            UnchokeKind::Regular
        } else if self.optimistic.contains(&id) || self.extra.contains(&id) {
            UnchokeKind::Optimistic
        } else {
            UnchokeKind::None
        }
    }

    pub fn unchoked(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.regular.iter().chain(&self.optimistic).chain(&self.extra).copied()
    }
}

/// Optimistic-unchoke memory of a peer in leecher state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LeecherChokeState {
    pub optimistic: Option<PeerId>,
}

fn by_rate_then_id(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.rate.total_cmp(&a.rate).then_with(|| a.id.cmp(&b.id))
}

/// One round of the leecher-state algorithm (also the old seed-state
/// algorithm, with `rate` set to the download rate from the seed and no
/// snubbed candidates).
///
/// The `n - 1` fastest interested, non-snubbed candidates get regular
/// unchokes. On rotation rounds, or when the current optimistic peer is gone,
/// promoted or no longer interested, candidates are tried in `draw_order`:
/// uninterested ones are unchoked anyway and the walk stops at the first
/// interested one, which becomes the optimistic unchoke.
pub fn leecher_round(
    n: usize,
    state: &mut LeecherChokeState,
    candidates: &[Candidate],
    rotate: bool,
    draw_order: &[PeerId],
) -> RoundDecision {
    let mut ranked: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.interested && !c.snubbed)
        .collect();
    ranked.sort_by(|a, b| by_rate_then_id(a, b));
    let regular: Vec<PeerId> = ranked.iter().take(n.saturating_sub(1)).map(|c| c.id).collect();

    let find = |id: PeerId| candidates.iter().find(|c| c.id == id);
    let keep = !rotate
        && state.optimistic.is_some_and(|o| {
            !regular.contains(&o) && find(o).is_some_and(|c| c.interested)
        });

    let mut decision = RoundDecision {
        regular,
        ..RoundDecision::default()
    };
    if keep {
        decision.optimistic.push(state.optimistic.unwrap());
        return decision;
    }
    state.optimistic = None;
    for &id in draw_order {
        if decision.regular.contains(&id) || decision.extra.contains(&id) {
            continue;
        }
        let Some(c) = find(id) else { continue };
        if c.interested {
            decision.optimistic.push(id);
            state.optimistic = Some(id);
            break;
        }
        decision.extra.push(id);
    }
    decision
}

/// One round of the recency-ordered seed-state algorithm.
///
/// Eligible leechers are interested, currently unchoked, and were unchoked
/// less than `recency_window` ago or have requests pending. They are ordered
/// by last unchoke time (most recent first), then download rate, then id; the
/// first `n - n_o` keep a regular unchoke. Remaining slots go to interested
/// leechers in `draw_order`, so the seed uploads to `n` peers whenever it can.
pub fn seed_round(
    n: usize,
    n_o: usize,
    recency_window: Seconds,
    now: Seconds,
    candidates: &[Candidate],
    draw_order: &[PeerId],
) -> RoundDecision {
    let mut eligible: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| {
            !c.is_seed
                && c.interested
                && c.unchoked
                && (c.pending_requests
                    || c.last_unchoked_at.is_some_and(|t| now - t < recency_window))
        })
        .collect();
    eligible.sort_by(|a, b| {
        let la = a.last_unchoked_at.unwrap_or(f64::NEG_INFINITY);
        let lb = b.last_unchoked_at.unwrap_or(f64::NEG_INFINITY);
        lb.total_cmp(&la).then_with(|| by_rate_then_id(a, b))
    });
    let regular: Vec<PeerId> = eligible
        .iter()
        .take(n.saturating_sub(n_o))
        .map(|c| c.id)
        .collect();
    let free = n - regular.len();
    let optimistic = draw_order
        .iter()
        .filter(|id| !regular.contains(id))
        .filter(|&&id| {
            candidates
                .iter()
                .any(|c| c.id == id && c.interested && !c.is_seed)
        })
        .take(free)
        .copied()
        .collect();
    RoundDecision {
        regular,
        optimistic,
        extra: Vec::new(),
    }
}

/// Order in which optimistic candidates are tried.
///
/// Uniform mode is a random permutation. Capacity-biased mode sorts by the
/// distance between advertised capacity and `own_cap`, breaking ties at
/// random; peers without an advertised capacity come last. Without any
/// advertised data it degrades to uniform.
pub fn candidate_order<R: Rng + ?Sized>(
    mode: CandidateOrder,
    own_cap: Kb,
    candidates: &[PeerId],
    advertised: &BTreeMap<PeerId, Kb>,
    rng: &mut R,
) -> Vec<PeerId> {
    let mut order = candidates.to_vec();
    order.shuffle(rng);
    if mode == CandidateOrder::CapacityBiased {
        if advertised.is_empty() {
            log::warn!("capacity-biased ordering without advertised capacities; using uniform order");
        } else {
            let distance = |p: &PeerId| {
                advertised
                    .get(p)
                    .map_or(f64::INFINITY, |c| (c - own_cap).abs())
            };
            order.sort_by(|a, b| distance(a).total_cmp(&distance(b)));
        }
    }
    order
}
