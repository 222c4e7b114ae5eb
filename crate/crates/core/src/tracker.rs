//! Centralized peer registry with optional upload-capacity advertisement.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Kb, PeerId, Result, Seconds};

/// Default peer-set size returned by the official tracker.
pub const DEFAULT_MAX_PEER_SET: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform random subset, independent of advertised capacities.
    #[default]
    Uniform,
    /// Peers with the closest advertised capacity first. Only meaningful with
    /// the extension enabled; falls back to uniform otherwise.
    Biased,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub advertised_cap: Option<Kb>,
    pub joined_at: Seconds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerListResponse {
    pub peers: Vec<(PeerId, Option<Kb>)>,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    registered: BTreeMap<PeerId, Registration>,
    departed: BTreeSet<PeerId>,
    pub extension_enabled: bool,
    pub sampling: Sampling,
    pub max_peer_set: usize,
}

impl TrackerState {
    pub fn new(extension_enabled: bool, sampling: Sampling) -> Self {
        Self {
            registered: BTreeMap::new(),
            departed: BTreeSet::new(),
            extension_enabled,
            sampling,
            max_peer_set: DEFAULT_MAX_PEER_SET,
        }
    }

    pub fn registration(&self, peer: PeerId) -> Option<&Registration> {
        self.registered.get(&peer)
    }

    pub fn len(&self) -> usize {
        self.registered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registered.is_empty()
    }

    /// Advertised capacity of a registered peer, when the extension is on.
    pub fn advertised_cap(&self, peer: PeerId) -> Option<Kb> {
        if !self.extension_enabled {
            return None;
        }
        self.registered.get(&peer).and_then(|r| r.advertised_cap)
    }

    /// Registers `peer` (or refreshes its list) and returns a subset of the
    /// other registered peers. The first announced capacity is kept.
    pub fn announce<R: Rng + ?Sized>(
        &mut self,
        peer: PeerId,
        advertised_cap: Option<Kb>,
        at: Seconds,
        rng: &mut R,
    ) -> Result<PeerListResponse> {
        if self.departed.contains(&peer) {
            return Err(Error::Tracker(format!("peer {peer} announced after departing")));
        }
        let own_cap = self
            .registered
            .entry(peer)
            .or_insert(Registration {
                advertised_cap,
                joined_at: at,
            })
            .advertised_cap;

        let others: Vec<PeerId> = self.registered.keys().copied().filter(|&p| p != peer).collect();
        let k = others.len().min(self.max_peer_set);
        let mut chosen: Vec<PeerId> = match (self.sampling, self.extension_enabled, own_cap) {
            (Sampling::Biased, true, Some(own)) => {
                let mut pool = others;
                pool.shuffle(rng);
                let distance = |p: &PeerId| {
                    self.registered[p]
                        .advertised_cap
                        .map_or(f64::INFINITY, |c| (c - own).abs())
                };
                pool.sort_by(|a, b| distance(a).total_cmp(&distance(b)));
                pool.truncate(k);
                pool
            }
            _ => others.choose_multiple(rng, k).copied().collect(),
        };
        chosen.sort_unstable();
        let peers = chosen
            .into_iter()
            .map(|p| (p, self.advertised_cap(p)))
            .collect();
        Ok(PeerListResponse { peers })
    }

    pub fn depart(&mut self, peer: PeerId, _at: Seconds) -> Result<()> {
        if self.registered.remove(&peer).is_none() {
            return Err(Error::Tracker(format!("unknown peer {peer} departed")));
        }
        self.departed.insert(peer);
        Ok(())
    }

    /// Allows a departed peer to announce again.
    pub fn rejoin(&mut self, peer: PeerId) {
        self.departed.remove(&peer);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng_from_seed;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn small_swarm_gets_everyone() {
        let mut rng = rng_from_seed(1);
        let mut t = TrackerState::new(false, Sampling::Uniform);
        let first = t.announce(PeerId(1), None, 0.0, &mut rng).unwrap();
        assert!(first.peers.is_empty());
        for i in 2..=41 {
            t.announce(PeerId(i), None, 0.0, &mut rng).unwrap();
        }
        let r = t.announce(PeerId(41), None, 0.0, &mut rng).unwrap();
        assert_eq!(r.peers.len(), 40);
        assert!(r.peers.iter().all(|(p, c)| *p != PeerId(41) && c.is_none()));
    }

    #[test]
    fn extension_returns_capacities() {
        let mut rng = rng_from_seed(1);
        let mut t = TrackerState::new(true, Sampling::Uniform);
        for (i, cap) in [(1, 20.0), (2, 50.0), (3, 200.0)] {
            t.announce(PeerId(i), Some(cap), 0.0, &mut rng).unwrap();
        }
        let r = t.announce(PeerId(4), Some(20.0), 0.0, &mut rng).unwrap();
        assert_eq!(
            r.peers,
            vec![(PeerId(1), Some(20.0)), (PeerId(2), Some(50.0)), (PeerId(3), Some(200.0))]
        );
    }

    #[test]
    fn departures() {
        let mut rng = rng_from_seed(1);
        let mut t = TrackerState::new(false, Sampling::Uniform);
        t.announce(PeerId(1), None, 0.0, &mut rng).unwrap();
        t.depart(PeerId(1), 5.0).unwrap();
        let r = t.announce(PeerId(2), None, 6.0, &mut rng).unwrap();
        assert!(r.peers.is_empty());
        assert!(t.depart(PeerId(1), 7.0).is_err());
        assert!(t.announce(PeerId(1), None, 8.0, &mut rng).is_err());
        t.depart(PeerId(2), 9.0).unwrap();
        assert!(t.is_empty());
        let r = t.announce(PeerId(3), None, 10.0, &mut rng).unwrap();
        assert!(r.peers.is_empty());
    }

    fn membership_counts(extension: bool, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut t = TrackerState::new(extension, Sampling::Uniform);
        t.max_peer_set = 3;
        for i in 1..=10 {
            t.announce(PeerId(i), Some(i as f64 * 10.0), 0.0, &mut rng).unwrap();
        }
        let mut counts = vec![0.0; 9];
        for _ in 0..10_000 {
            for (p, _) in t.announce(PeerId(10), None, 0.0, &mut rng).unwrap().peers {
                counts[p.index()] += 1.0;
            }
        }
        counts
    }

    #[test]
    fn uniform_sampling() {
        let counts = membership_counts(false, 11);
        let e = counts.iter().sum::<f64>() / counts.len() as f64;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        assert!(chi2 < ChiSquared::new(8.0).unwrap().inverse_cdf(0.99), "chi2 {chi2}");
    }

    #[test]
    fn advertising_never_changes_membership() {
        assert_eq!(membership_counts(false, 3), membership_counts(true, 3));
    }

    #[test]
    fn biased_sampling_prefers_similar_capacity() {
        let mut rng = rng_from_seed(2);
        let mut t = TrackerState::new(true, Sampling::Biased);
        t.max_peer_set = 2;
        for (i, cap) in [(1, 20.0), (2, 50.0), (3, 190.0), (4, 210.0)] {
            t.announce(PeerId(i), Some(cap), 0.0, &mut rng).unwrap();
        }
        let r = t.announce(PeerId(5), Some(200.0), 0.0, &mut rng).unwrap();
        let ids: Vec<PeerId> = r.peers.iter().map(|(p, _)| *p).collect();
        assert_eq!(ids, vec![PeerId(3), PeerId(4)]);
    }
}
