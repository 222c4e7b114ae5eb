//! Rarest-first piece selection and block request scheduling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::swarm::Bitfield;
use crate::PeerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockRef {
    pub piece: usize,
    pub block: usize,
}

/// How ties inside the rarest tier are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiecePolicy {
    /// Lowest piece index first, the same order on every decision.
    #[default]
    #[serde(alias = "det")]
    Deterministic,
    /// Uniform choice among equally rare pieces on every decision.
    #[serde(alias = "rand")]
    Randomized,
}

/// Copy counts of every piece among the local peer set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RarityTable {
    counts: Vec<u32>,
}

impl RarityTable {
    pub fn new(piece_count: usize) -> Self {
        Self {
            counts: vec![0; piece_count],
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn count(&self, piece: usize) -> u32 {
        self.counts[piece]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn add_have(&mut self, piece: usize) {
        self.counts[piece] += 1;
    }

    pub fn add_bitfield(&mut self, bits: &Bitfield) {
        for p in bits.iter_owned() {
            self.counts[p] += 1;
        }
    }

    /// Removes a departed neighbor's pieces.
    pub fn remove_bitfield(&mut self, bits: &Bitfield) {
        for p in bits.iter_owned() {
            self.counts[p] -= 1;
        }
    }

    /// Lacked pieces that some neighbor has, at the minimum copy count.
    pub fn rarest_set(&self, local: &Bitfield) -> Vec<usize> {
        let min = (0..self.counts.len())
            .filter(|&p| !local.has(p) && self.counts[p] > 0)
            .map(|p| self.counts[p])
            .min();
        match min {
            Some(m) => (0..self.counts.len())
                .filter(|&p| !local.has(p) && self.counts[p] == m)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Picks a fresh piece to fetch from an uploader owning `uploader_has`.
    ///
    /// Candidates are pieces the uploader has, the local peer lacks and for
    /// which `excluded` is false. The rarest tier among candidates wins, which
    /// falls back to less rare tiers when the globally rarest pieces are not
    /// available from this uploader.
    pub fn select_piece<R: Rng + ?Sized>(
        &self,
        local: &Bitfield,
        uploader_has: &Bitfield,
        excluded: impl Fn(usize) -> bool,
        policy: PiecePolicy,
        rng: &mut R,
    ) -> Option<usize> {
        let mut best = u32::MAX;
        let mut tier: Vec<usize> = Vec::new();
        for p in uploader_has.iter_owned() {
            if local.has(p) || excluded(p) {
                continue;
            }
            let c = self.counts[p];
            if c < best {
                best = c;
                tier.clear();
            }
            if c == best {
                tier.push(p);
            }
        }
        match (policy, tier.len()) {
            (_, 0) => None,
            (PiecePolicy::Deterministic, _) => Some(tier[0]),
            (PiecePolicy::Randomized, n) => Some(tier[rng.gen_range(0..n)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockState {
    Missing,
    Requested(PeerId),
    Received,
}

/// Block-level download state of one peer.
#[derive(Debug, Clone)]
pub struct BlockBook {
    blocks_per_piece: usize,
    states: Vec<BlockState>,
    received: Vec<u16>,
    in_flight: Vec<u16>,
    /// Partially transferred or requested pieces, oldest first.
    started: Vec<usize>,
}

impl BlockBook {
    pub fn new(piece_count: usize, blocks_per_piece: usize) -> Self {
        Self {
            blocks_per_piece,
            states: vec![BlockState::Missing; piece_count * blocks_per_piece],
            received: vec![0; piece_count],
            in_flight: vec![0; piece_count],
            started: Vec::new(),
        }
    }

    pub fn complete(piece_count: usize, blocks_per_piece: usize) -> Self {
        Self {
            blocks_per_piece,
            states: vec![BlockState::Received; piece_count * blocks_per_piece],
            received: vec![blocks_per_piece as u16; piece_count],
            in_flight: vec![0; piece_count],
            started: Vec::new(),
        }
    }

    fn slot(&self, b: BlockRef) -> usize {
        b.piece * self.blocks_per_piece + b.block
    }

    pub fn state(&self, b: BlockRef) -> BlockState {
        self.states[self.slot(b)]
    }

    pub fn started(&self) -> &[usize] {
        &self.started
    }

    pub fn is_started(&self, piece: usize) -> bool {
        self.received[piece] > 0 || self.in_flight[piece] > 0
    }

    pub fn received_blocks(&self, piece: usize) -> usize {
        self.received[piece] as usize
    }

    pub fn mark_requested(&mut self, b: BlockRef, uploader: PeerId) {
        let s = self.slot(b);
        debug_assert_eq!(self.states[s], BlockState::Missing, "double request of {b:?}");
        if !self.is_started(b.piece) {
            self.started.push(b.piece);
        }
        self.states[s] = BlockState::Requested(uploader);
        self.in_flight[b.piece] += 1;
    }

    /// Returns a requested block to the pool.
    pub fn cancel(&mut self, b: BlockRef) {
        let s = self.slot(b);
        if let BlockState::Requested(_) = self.states[s] {
            self.states[s] = BlockState::Missing;
            self.in_flight[b.piece] -= 1;
            if !self.is_started(b.piece) {
                self.started.retain(|&p| p != b.piece);
            }
        }
    }

    /// Records a delivered block; returns true when its piece is complete.
    pub fn mark_received(&mut self, b: BlockRef) -> bool {
        let s = self.slot(b);
        if let BlockState::Requested(_) = self.states[s] {
            self.in_flight[b.piece] -= 1;
        }
        if self.states[s] == BlockState::Received {
            return false;
        }
        self.states[s] = BlockState::Received;
        self.received[b.piece] += 1;
        let done = self.received[b.piece] as usize == self.blocks_per_piece;
        if done {
            self.started.retain(|&p| p != b.piece);
        }
        done
    }

    fn first_missing(&self, piece: usize) -> Option<usize> {
        let base = piece * self.blocks_per_piece;
        self.states[base..base + self.blocks_per_piece]
            .iter()
            .position(|s| *s == BlockState::Missing)
    }

    /// Next block to request from an uploader owning `uploader_has`.
    ///
    /// Started pieces the uploader owns come first (rarest, then oldest;
    /// ascending block index), unless a fresh piece is strictly rarer than
    /// all of them. A block already requested on any connection is never
    /// returned.
    pub fn next_block<R: Rng + ?Sized>(
        &self,
        local: &Bitfield,
        uploader_has: &Bitfield,
        rarity: &RarityTable,
        policy: PiecePolicy,
        rng: &mut R,
    ) -> Option<BlockRef> {
        let mut best: Option<(u32, BlockRef)> = None;
        for &piece in &self.started {
            if !uploader_has.has(piece) {
                continue;
            }
            if let Some(block) = self.first_missing(piece) {
                let c = rarity.count(piece);
                if best.map_or(true, |(bc, _)| c < bc) {
                    best = Some((c, BlockRef { piece, block }));
                }
            }
        }
        let fresh = rarity.select_piece(local, uploader_has, |p| self.is_started(p), policy, rng);
        match (best, fresh) {
            (Some((bc, _)), Some(f)) if rarity.count(f) < bc => Some(BlockRef { piece: f, block: 0 }),
            (Some((_, b)), _) => Some(b),
            (None, f) => f.map(|piece| BlockRef { piece, block: 0 }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng_from_seed;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn bf(n: usize, pieces: &[usize]) -> Bitfield {
        Bitfield::from_pieces(n, pieces.iter().copied())
    }

    #[test]
    fn rarest_set_examples() {
        let t = RarityTable::from_counts(vec![1, 3, 1]);
        assert_eq!(t.rarest_set(&bf(3, &[])), vec![0, 2]);
        let t = RarityTable::from_counts(vec![1, 3, 3]);
        assert_eq!(t.rarest_set(&bf(3, &[0])), vec![1, 2]);
        let t = RarityTable::from_counts(vec![0, 0, 0]);
        assert!(t.rarest_set(&bf(3, &[])).is_empty());
    }

    #[test]
    fn select_piece_intersects_with_uploader() {
        let mut rng = rng_from_seed(1);
        let t = RarityTable::from_counts(vec![1, 3, 1, 3, 3, 2]);
        let local = bf(6, &[]);
        let got = t.select_piece(&local, &bf(6, &[2, 5]), |_| false, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(got, Some(2));
        let got = t.select_piece(&local, &bf(6, &[0, 2]), |_| false, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(got, Some(0));
        // Falls back to the next tier when the rarest pieces are elsewhere.
        let got = t.select_piece(&local, &bf(6, &[1, 5]), |_| false, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(got, Some(5));
        let got = t.select_piece(&bf(6, &[1, 5]), &bf(6, &[1, 5]), |_| false, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(got, None);
    }

    #[test]
    fn randomized_tier_is_uniform() {
        let mut rng = rng_from_seed(7);
        let t = RarityTable::from_counts(vec![1, 3, 1]);
        let local = bf(3, &[]);
        let up = bf(3, &[0, 1, 2]);
        let trials = 20_000;
        let mut hits = [0u32; 3];
        for _ in 0..trials {
            let p = t.select_piece(&local, &up, |_| false, PiecePolicy::Randomized, &mut rng).unwrap();
            hits[p] += 1;
        }
        assert_eq!(hits[1], 0);
        let expected = trials as f64 / 2.0;
        let chi2: f64 = [hits[0], hits[2]]
            .iter()
            .map(|&h| (h as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    }

    #[test]
    fn started_pieces_come_first_unless_a_rarer_one_exists() {
        let mut rng = rng_from_seed(1);
        let mut book = BlockBook::new(6, 4);
        let rarity = RarityTable::from_counts(vec![1; 6]);
        let local = bf(6, &[]);
        for b in 0..2 {
            let r = BlockRef { piece: 4, block: b };
            book.mark_requested(r, PeerId(9));
            book.mark_received(r);
        }
        let next = book.next_block(&local, &bf(6, &[0, 4]), &rarity, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(next, Some(BlockRef { piece: 4, block: 2 }));
        // Uploader without the partial piece gets a fresh rarest piece.
        let next = book.next_block(&local, &bf(6, &[0, 1]), &rarity, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(next, Some(BlockRef { piece: 0, block: 0 }));
        // No partial pieces at all.
        let empty = BlockBook::new(6, 4);
        let next = empty.next_block(&local, &bf(6, &[3, 5]), &rarity, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(next, Some(BlockRef { piece: 3, block: 0 }));
        let skewed = RarityTable::from_counts(vec![1, 2, 2, 2, 2, 2]);
        let next = book.next_block(&local, &bf(6, &[0, 4]), &skewed, PiecePolicy::Deterministic, &mut rng);
        assert_eq!(next, Some(BlockRef { piece: 0, block: 0 }));
    }

    #[test]
    fn pending_blocks_are_never_handed_out_twice() {
        let mut rng = rng_from_seed(1);
        let mut book = BlockBook::new(2, 2);
        let rarity = RarityTable::from_counts(vec![1, 1]);
        let local = bf(2, &[]);
        let up = bf(2, &[0, 1]);
        let mut seen = Vec::new();
        while let Some(b) = book.next_block(&local, &up, &rarity, PiecePolicy::Deterministic, &mut rng) {
            assert!(!seen.contains(&b));
            book.mark_requested(b, PeerId(2));
            seen.push(b);
        }
        assert_eq!(seen.len(), 4);
        book.cancel(BlockRef { piece: 1, block: 1 });
        assert_eq!(
            book.next_block(&local, &up, &rarity, PiecePolicy::Deterministic, &mut rng),
            Some(BlockRef { piece: 1, block: 1 })
        );
    }

    #[test]
    fn cancelling_every_block_unstarts_the_piece() {
        let mut book = BlockBook::new(3, 2);
        let r = BlockRef { piece: 1, block: 0 };
        book.mark_requested(r, PeerId(2));
        assert_eq!(book.started(), &[1]);
        book.cancel(r);
        assert!(book.started().is_empty());
        assert!(!book.is_started(1));
    }

    /// Micro-swarm: 3 pieces of 2 blocks, two uploaders. The oracle enumerates
    /// the rule by hand: the rarest partial piece the uploader has (oldest on
    /// ties), displaced only by a strictly rarer unstarted piece (lowest index
    /// on ties).
    #[test]
    fn micro_swarm_matches_enumerated_oracle() {
        let mut rng = rng_from_seed(3);
        let uploaders = [bf(3, &[0, 1]), bf(3, &[1, 2])];
        // Copy counts: piece 0 only at A, piece 2 only at B, piece 1 at both.
        let rarity = RarityTable::from_counts(vec![1, 2, 1]);
        // Every combination of per-block states for pieces 0..3.
        let states = [BlockState::Missing, BlockState::Requested(PeerId(7)), BlockState::Received];
        let mut cases = 0;
        for code in 0..3usize.pow(6) {
            let mut c = code;
            let mut book = BlockBook::new(3, 2);
            let mut local_pieces = Vec::new();
            for piece in 0..3 {
                for block in 0..2 {
                    let s = states[c % 3];
                    c /= 3;
                    let r = BlockRef { piece, block };
                    match s {
                        BlockState::Missing => {}
                        BlockState::Requested(p) => book.mark_requested(r, p),
                        BlockState::Received => {
                            book.mark_requested(r, PeerId(7));
                            if book.mark_received(r) {
                                local_pieces.push(piece);
                            }
                        }
                    }
                }
            }
            let local = bf(3, &local_pieces);
            for up in &uploaders {
                let got = book.next_block(&local, up, &rarity, PiecePolicy::Deterministic, &mut rng);
                let partial = book
                    .started()
                    .iter()
                    .copied()
                    .filter(|&p| up.has(p))
                    .filter_map(|p| (0..2).find(|&b| book.state(BlockRef { piece: p, block: b }) == BlockState::Missing).map(|b| BlockRef { piece: p, block: b }))
                    .min_by_key(|b| rarity.count(b.piece));
                let fresh = {
                    let mut cands: Vec<usize> = (0..3)
                        .filter(|&p| up.has(p) && !local.has(p) && !book.is_started(p))
                        .collect();
                    cands.sort_by_key(|&p| (rarity.count(p), p));
                    cands.first().map(|&p| BlockRef { piece: p, block: 0 })
                };
                let expected = match (partial, fresh) {
                    (Some(p), Some(f)) if rarity.count(f.piece) < rarity.count(p.piece) => Some(f),
                    (p, f) => p.or(f),
                };
                assert_eq!(got, expected, "case {code}");
                cases += 1;
            }
        }
        assert_eq!(cases, 2 * 729);
    }

    proptest! {
        /// Counts maintained by have/bitfield/departure events equal a recount.
        #[test]
        fn rarity_matches_recount(ops in proptest::collection::vec((0usize..5, 0usize..12, any::<bool>()), 1..200)) {
            let n = 12;
            let mut table = RarityTable::new(n);
            let mut neighbors: Vec<Option<Bitfield>> = vec![Some(Bitfield::empty(n)); 5];
            for (who, piece, depart) in ops {
                match (&mut neighbors[who], depart) {
                    (Some(bits), true) => {
                        table.remove_bitfield(bits);
                        neighbors[who] = None;
                    }
                    (Some(bits), false) => {
                        if bits.insert(piece) {
                            table.add_have(piece);
                        }
                    }
                    (None, _) => {
                        let bits = Bitfield::from_pieces(n, [piece]);
                        table.add_bitfield(&bits);
                        neighbors[who] = Some(bits);
                    }
                }
                for p in 0..n {
                    let recount = neighbors.iter().flatten().filter(|b| b.has(p)).count() as u32;
                    prop_assert_eq!(table.count(p), recount);
                }
            }
        }
    }
}
