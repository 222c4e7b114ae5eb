//! Protocol state: content geometry, bitfields, connections and peers.

use std::collections::VecDeque;
use std::fmt;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choking::{RateEstimator, UnchokeSlot};
use crate::pieces::{BlockBook, BlockRef, RarityTable};
use crate::{Error, Kb, Result, Seconds};

/// Peer identifier. Ids are 1-based so that matrices line up with the usual
/// figure numbering (peer 1 is the first slow leecher).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PeerId(pub u32);

impl PeerId {
    pub fn from_index(index: usize) -> Self {
        PeerId(index as u32 + 1)
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Validated content geometry. Sizes are in kB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorrentMeta {
    pub content_size: u64,
    pub piece_size: u64,
    pub piece_count: usize,
    pub block_size: u64,
    pub blocks_per_piece: usize,
}

impl TorrentMeta {
    pub fn block_kb(&self) -> Kb {
        self.block_size as Kb
    }

    pub fn piece_kb(&self) -> Kb {
        self.piece_size as Kb
    }

    /// Transfer volume of the whole content. A short last piece is moved as a
    /// full piece.
    pub fn transfer_kb(&self) -> Kb {
        (self.piece_count as u64 * self.piece_size) as Kb
    }
}

pub fn make_torrent(content_size: u64, piece_size: u64, block_size: u64) -> Result<TorrentMeta> {
    if content_size == 0 || piece_size == 0 || block_size == 0 {
        return Err(Error::config("content, piece and block sizes must be positive"));
    }
    if piece_size % block_size != 0 {
        return Err(Error::config(format!(
            "block size {block_size} kB does not divide piece size {piece_size} kB"
        )));
    }
    Ok(TorrentMeta {
        content_size,
        piece_size,
        piece_count: content_size.div_ceil(piece_size) as usize,
        block_size,
        blocks_per_piece: (piece_size / block_size) as usize,
    })
}

/// Set of owned piece indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitfield {
    bits: BitVec,
    owned: usize,
}

impl Bitfield {
    pub fn empty(piece_count: usize) -> Self {
        Self {
            bits: bitvec![0; piece_count],
            owned: 0,
        }
    }

    pub fn full(piece_count: usize) -> Self {
        Self {
            bits: bitvec![1; piece_count],
            owned: piece_count,
        }
    }

    pub fn from_pieces(piece_count: usize, pieces: impl IntoIterator<Item = usize>) -> Self {
        let mut b = Self::empty(piece_count);
        for p in pieces {
            b.insert(p);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owned == 0
    }

    pub fn has(&self, piece: usize) -> bool {
        self.bits.get(piece).map(|b| *b).unwrap_or(false)
    }

    /// Adds a piece; returns false if it was already present.
    pub fn insert(&mut self, piece: usize) -> bool {
        if self.bits[piece] {
            return false;
        }
        self.bits.set(piece, true);
        self.owned += 1;
        true
    }

    pub fn count(&self) -> usize {
        self.owned
    }

    pub fn is_complete(&self) -> bool {
        self.owned == self.bits.len()
    }

    pub fn iter_owned(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    /// Number of pieces in `self` that `other` lacks.
    pub fn count_missing_from(&self, other: &Bitfield) -> usize {
        self.bits
            .iter_ones()
            .filter(|&p| !other.has(p))
            .count()
    }
}

/// Wire messages that affect choking and piece selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Have(usize),
    Bitfield(Bitfield),
    Interested,
    NotInterested,
    Choke,
    Unchoke,
}

/// State changes produced by [`Link::apply`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Notification {
    /// The local peer's interest in the remote flipped to the given value.
    InterestFlip(bool),
    /// The remote's interest in the local peer flipped to the given value.
    RemoteInterestFlip(bool),
    /// Copy counts changed for these pieces.
    RarityUpdate(Vec<usize>),
    /// The remote choked us; these requests are void and must be re-queued.
    RequestsCancelled(Vec<BlockRef>),
    /// The remote unchoked us; requests may be issued.
    CanRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leecher,
    Seed,
}

/// One end of a connection, seen from the local peer.
#[derive(Debug, Clone)]
pub struct Link {
    pub remote: PeerId,
    /// The remote's pieces as announced by bitfield and have messages.
    pub remote_has: Bitfield,
    /// Pieces the remote has that the local peer lacks.
    pub interesting: usize,
    pub am_interested: bool,
    pub peer_interested: bool,
    pub am_choking: bool,
    pub peer_choking: bool,
    /// Local requests outstanding at the remote; the head is in transfer.
    pub pending_requests: VecDeque<BlockRef>,
    /// Local's unchoke bookkeeping toward the remote.
    pub unchoke: UnchokeSlot,
    /// Data received from the remote.
    pub received: RateEstimator,
    /// Data sent to the remote.
    pub sent: RateEstimator,
    pub joined_at: Seconds,
}

impl Link {
    pub fn new(remote: PeerId, piece_count: usize, joined_at: Seconds) -> Self {
        Self {
            remote,
            remote_has: Bitfield::empty(piece_count),
            interesting: 0,
            am_interested: false,
            peer_interested: false,
            am_choking: true,
            peer_choking: true,
            pending_requests: VecDeque::new(),
            unchoke: UnchokeSlot::default(),
            received: RateEstimator::default(),
            sent: RateEstimator::default(),
            joined_at,
        }
    }

    /// Applies a message received from the remote. `local` is the local
    /// peer's bitfield, needed to evaluate interest.
    pub fn apply(&mut self, local: &Bitfield, msg: Message) -> Result<Vec<Notification>> {
        let mut out = Vec::new();
        match msg {
            Message::Have(piece) => {
                if piece >= self.remote_has.len() {
                    return Err(Error::Protocol(format!(
                        "have({piece}) out of range for {} pieces",
                        self.remote_has.len()
                    )));
                }
                if self.remote_has.insert(piece) {
                    out.push(Notification::RarityUpdate(vec![piece]));
                    if !local.has(piece) {
                        self.interesting += 1;
                    }
                }
            }
            Message::Bitfield(bits) => {
                if bits.len() != self.remote_has.len() {
                    return Err(Error::Protocol(format!(
                        "bitfield of length {} for {} pieces",
                        bits.len(),
                        self.remote_has.len()
                    )));
                }
                let new: Vec<usize> = bits.iter_owned().filter(|&p| !self.remote_has.has(p)).collect();
                for &p in &new {
                    self.remote_has.insert(p);
                }
                self.interesting = self.remote_has.count_missing_from(local);
                if !new.is_empty() {
                    out.push(Notification::RarityUpdate(new));
                }
            }
            Message::Interested | Message::NotInterested => {
                let v = msg == Message::Interested;
                if self.peer_interested != v {
                    self.peer_interested = v;
                    out.push(Notification::RemoteInterestFlip(v));
                }
            }
            Message::Choke => {
                if !self.peer_choking {
                    self.peer_choking = true;
                    let cancelled: Vec<BlockRef> = self.pending_requests.drain(..).collect();
                    out.push(Notification::RequestsCancelled(cancelled));
                }
            }
            Message::Unchoke => {
                if self.peer_choking {
                    self.peer_choking = false;
                    out.push(Notification::CanRequest);
                }
            }
        }
        if let Some(flip) = self.refresh_interest() {
            out.push(Notification::InterestFlip(flip));
        }
        Ok(out)
    }

    /// Re-derives `am_interested` from the interesting-piece count; returns
    /// the new value when it changed.
    pub fn refresh_interest(&mut self) -> Option<bool> {
        let want = self.interesting > 0;
        if want != self.am_interested {
            self.am_interested = want;
            Some(want)
        } else {
            None
        }
    }
}

/// Interest from first principles: does `remote` own a piece `local` lacks?
pub fn update_interest(local: &Bitfield, remote: &Bitfield) -> bool {
    remote.count_missing_from(local) > 0
}

/// One simulated peer.
#[derive(Debug, Clone)]
pub struct PeerNode {
    pub id: PeerId,
    pub class_label: String,
    pub upload_cap: Kb,
    pub role: Role,
    pub bitfield: Bitfield,
    /// Connections indexed by the remote's [`PeerId::index`].
    pub links: Vec<Option<Link>>,
    pub rarity: RarityTable,
    pub blocks: BlockBook,
    pub joined_at: Seconds,
    pub completed_at: Option<Seconds>,
    pub departed_at: Option<Seconds>,
}

impl PeerNode {
    pub fn new_leecher(id: PeerId, class_label: &str, cap: Kb, meta: &TorrentMeta, swarm_size: usize) -> Self {
        Self {
            id,
            class_label: class_label.to_string(),
            upload_cap: cap,
            role: Role::Leecher,
            bitfield: Bitfield::empty(meta.piece_count),
            links: vec![None; swarm_size],
            rarity: RarityTable::new(meta.piece_count),
            blocks: BlockBook::new(meta.piece_count, meta.blocks_per_piece),
            joined_at: 0.0,
            completed_at: None,
            departed_at: None,
        }
    }

    pub fn new_seed(id: PeerId, cap: Kb, meta: &TorrentMeta, swarm_size: usize) -> Self {
        let mut p = Self::new_leecher(id, "seed", cap, meta, swarm_size);
        p.role = Role::Seed;
        p.bitfield = Bitfield::full(meta.piece_count);
        p.blocks = BlockBook::complete(meta.piece_count, meta.blocks_per_piece);
        p
    }

    pub fn is_seed(&self) -> bool {
        self.role == Role::Seed
    }

    pub fn is_active(&self) -> bool {
        self.departed_at.is_none()
    }

    pub fn link(&self, remote: PeerId) -> Option<&Link> {
        self.links.get(remote.index()).and_then(Option::as_ref)
    }

    pub fn link_mut(&mut self, remote: PeerId) -> Option<&mut Link> {
        self.links.get_mut(remote.index()).and_then(Option::as_mut)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.links.iter().flatten().map(|l| l.remote)
    }

    /// Records a verified piece. Returns the neighbors that must receive a
    /// have message and the links whose interest flipped (always to false).
    pub fn on_piece_complete(&mut self, piece: usize, at: Seconds) -> Result<PieceOutcome> {
        if self.is_seed() {
            return Err(Error::logic(format!("seed {} completed piece {piece}", self.id)));
        }
        if !self.bitfield.insert(piece) {
            return Err(Error::logic(format!("peer {} completed piece {piece} twice", self.id)));
        }
        let mut outcome = PieceOutcome::default();
        for link in self.links.iter_mut().flatten() {
            outcome.have_to.push(link.remote);
            if link.remote_has.has(piece) {
                link.interesting -= 1;
                if link.refresh_interest().is_some() {
                    outcome.lost_interest.push(link.remote);
                }
            }
        }
        if self.bitfield.is_complete() {
            self.completed_at = Some(at);
            self.role = Role::Seed;
            outcome.finished = true;
        }
        Ok(outcome)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PieceOutcome {
    pub have_to: Vec<PeerId>,
    pub lost_interest: Vec<PeerId>,
    pub finished: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_geometry() {
        let m = make_torrent(453 * 256, 256, 16).unwrap();
        assert_eq!(m.piece_count, 453);
        assert_eq!(m.blocks_per_piece, 16);
        // 113 MiB exactly is 452 pieces; one more kB spills into a short 453rd.
        assert_eq!(make_torrent(113 * 1024, 256, 16).unwrap().piece_count, 452);
        assert_eq!(make_torrent(113 * 1024 + 1, 256, 16).unwrap().piece_count, 453);
    }

    #[test]
    fn single_piece_and_indivisible_blocks() {
        let m = make_torrent(256, 256, 16).unwrap();
        assert_eq!((m.piece_count, m.blocks_per_piece), (1, 16));
        assert!(matches!(make_torrent(1024, 256, 10), Err(Error::Config(_))));
        assert!(make_torrent(0, 256, 16).is_err());
    }

    #[test]
    fn have_for_missing_piece_raises_interest() {
        let local = Bitfield::empty(10);
        let mut link = Link::new(PeerId(2), 10, 0.0);
        let n = link.apply(&local, Message::Have(7)).unwrap();
        assert!(link.am_interested);
        assert!(n.contains(&Notification::InterestFlip(true)));
        assert!(n.contains(&Notification::RarityUpdate(vec![7])));
    }

    #[test]
    fn have_for_owned_piece_keeps_interest() {
        let local = Bitfield::from_pieces(10, [7]);
        let mut link = Link::new(PeerId(2), 10, 0.0);
        let n = link.apply(&local, Message::Have(7)).unwrap();
        assert!(!link.am_interested);
        assert!(!n.iter().any(|x| matches!(x, Notification::InterestFlip(_))));
    }

    #[test]
    fn have_out_of_range_is_protocol_error() {
        let mut link = Link::new(PeerId(2), 10, 0.0);
        assert!(matches!(
            link.apply(&Bitfield::empty(10), Message::Have(10)),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn choke_cancels_pending_requests() {
        let local = Bitfield::empty(4);
        let mut link = Link::new(PeerId(2), 4, 0.0);
        assert_eq!(link.apply(&local, Message::Unchoke).unwrap(), vec![Notification::CanRequest]);
        link.pending_requests.push_back(BlockRef { piece: 1, block: 0 });
        let n = link.apply(&local, Message::Choke).unwrap();
        assert_eq!(n, vec![Notification::RequestsCancelled(vec![BlockRef { piece: 1, block: 0 }])]);
        assert!(link.pending_requests.is_empty());
    }

    #[test]
    fn interest_definition() {
        let local = Bitfield::from_pieces(4, [0, 1]);
        assert!(!update_interest(&local, &Bitfield::from_pieces(4, [0, 1])));
        assert!(update_interest(&local, &Bitfield::from_pieces(4, [0, 1, 2])));
        assert!(!update_interest(&local, &Bitfield::empty(4)));
    }

    #[test]
    fn completing_a_piece_updates_interest_and_role() {
        let meta = make_torrent(2 * 256, 256, 16).unwrap();
        let mut peer = PeerNode::new_leecher(PeerId(1), "slow", 20.0, &meta, 3);
        let mut link = Link::new(PeerId(2), 2, 0.0);
        link.apply(&peer.bitfield, Message::Have(0)).unwrap();
        peer.links[1] = Some(link);
        peer.links[2] = Some(Link::new(PeerId(3), 2, 0.0));

        let out = peer.on_piece_complete(0, 5.0).unwrap();
        assert_eq!(out.have_to, vec![PeerId(2), PeerId(3)]);
        assert_eq!(out.lost_interest, vec![PeerId(2)]);
        assert!(!out.finished);
        assert!(peer.on_piece_complete(0, 6.0).is_err());

        let out = peer.on_piece_complete(1, 1400.0).unwrap();
        assert!(out.finished);
        assert_eq!(peer.completed_at, Some(1400.0));
        assert!(peer.is_seed());
        assert!(peer.on_piece_complete(1, 1401.0).is_err());
    }
}
