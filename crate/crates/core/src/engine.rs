//! One simulated torrent session.
//!
//! [`simulate`] joins every peer at t = 0 through the tracker, wires the
//! resulting full mesh, and then alternates between the event queue
//! (rechoke timers, ticks, departures, the time cap) and the fluid model,
//! which steps exactly to the next block completion. Control messages are
//! delivered instantly. Rounds triggered by interest changes or departures
//! run after all other work of the same instant.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choking::{
    candidate_order, is_snubbed, leecher_round, seed_round, Candidate, CandidateOrder, ChokeConfig,
    LeecherChokeState, OptimisticPlan, RechokePhase, RoundDecision, SeedAlgorithm, Trigger, UnchokeKind,
};
use crate::metrics::{
    EventLog, InterestInterval, LogMeta, MembershipInterval, PeerRecord, SeedPieceUpload, Transfer,
    UnchokeInterval,
};
use crate::pieces::PiecePolicy;
use crate::sim::{allocate_rates, rng_from_seed, EventKind, EventQueue, Flow, FlowAllocation, FluidState, SimRng};
use crate::swarm::{Message, Notification, PeerNode, TorrentMeta};
use crate::tracker::{Sampling, TrackerState};
use crate::{Error, Kb, PeerId, Result, Seconds};

/// What a leecher does once it has every piece.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum Departure {
    #[default]
    Immediate,
    /// Stay as a seed for `duration` seconds, then leave.
    LingerAsSeed { duration: Seconds },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerSpec {
    pub class_label: String,
    pub upload_cap: Kb,
    pub initial_seed: bool,
}

/// Fully resolved parameters of one run. Peer ids are positions in `peers`
/// plus one; exactly one peer is the initial seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run: usize,
    pub rng_seed: u64,
    pub meta: TorrentMeta,
    pub peers: Vec<PeerSpec>,
    pub choke: ChokeConfig,
    pub piece_policy: PiecePolicy,
    pub tracker_extension: bool,
    pub sampling: Sampling,
    pub max_peer_set: usize,
    pub departure: Departure,
    pub tick: Seconds,
    pub pipeline_depth: usize,
    /// Virtual time after which the run stops and is marked incomplete.
    pub time_cap: Seconds,
}

impl RunSpec {
    pub fn seed(&self) -> Result<PeerId> {
        let seeds: Vec<usize> = (0..self.peers.len()).filter(|&i| self.peers[i].initial_seed).collect();
        match seeds.as_slice() {
            [i] => Ok(PeerId::from_index(*i)),
            _ => Err(Error::config(format!("expected one initial seed, found {}", seeds.len()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.choke.validate()?;
        if self.peers.len() < 2 {
            return Err(Error::config("a swarm needs at least two peers"));
        }
        if let Some(p) = self.peers.iter().find(|p| !(p.upload_cap > 0.0 && p.upload_cap.is_finite())) {
            return Err(Error::config(format!("upload cap {} of class {} is not positive", p.upload_cap, p.class_label)));
        }
        if !(self.tick > 0.0) || self.pipeline_depth == 0 || !(self.time_cap > 0.0) || self.max_peer_set == 0 {
            return Err(Error::config("tick, pipeline depth, time cap and peer-set size must be positive"));
        }
        if let Departure::LingerAsSeed { duration } = self.departure {
            if !(duration >= 0.0) {
                return Err(Error::config("linger duration must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Per-peer choking memory kept by the engine.
#[derive(Debug, Clone, Default)]
struct ChokeMemory {
    leecher: LeecherChokeState,
    timer_rounds: u64,
    /// Capacities advertised through the tracker by known neighbors.
    known_caps: BTreeMap<PeerId, Kb>,
}

struct Sim<'a> {
    spec: &'a RunSpec,
    seed: PeerId,
    block_kb: Kb,
    peers: Vec<PeerNode>,
    choke: Vec<ChokeMemory>,
    queue: EventQueue,
    fluid: FluidState,
    alloc: FlowAllocation,
    alloc_dirty: bool,
    tracker: TrackerState,
    rng: SimRng,
    plan: Vec<OptimisticPlan>,
    interest_open: BTreeMap<(PeerId, PeerId), Seconds>,
    /// (downloader, piece) pairs with at least one block served by the seed.
    from_seed: BTreeSet<(PeerId, usize)>,
    triggered: BTreeSet<PeerId>,
    refill: BTreeSet<PeerId>,
    leechers_left: usize,
    log: EventLog,
}

/// Runs one session to completion or to the time cap.
pub fn simulate(spec: &RunSpec) -> Result<EventLog> {
    spec.validate()?;
    let mut sim = Sim::new(spec)?;
    sim.start()?;
    sim.run()?;
    Ok(sim.log)
}

impl<'a> Sim<'a> {
    fn new(spec: &'a RunSpec) -> Result<Self> {
        let seed = spec.seed()?;
        let n = spec.peers.len();
        let peers: Vec<PeerNode> = spec
            .peers
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let id = PeerId::from_index(i);
                if p.initial_seed {
                    PeerNode::new_seed(id, p.upload_cap, &spec.meta, n)
                } else {
                    PeerNode::new_leecher(id, &p.class_label, p.upload_cap, &spec.meta, n)
                }
            })
            .collect();
        let records = spec
            .peers
            .iter()
            .enumerate()
            .map(|(i, p)| PeerRecord {
                id: PeerId::from_index(i),
                class_label: p.class_label.clone(),
                upload_cap: p.upload_cap,
                initial_seed: p.initial_seed,
                joined_at: 0.0,
                departed_at: None,
            })
            .collect();
        let log = EventLog::new(
            LogMeta {
                run: spec.run,
                rng_seed: spec.rng_seed,
                seed,
                piece_count: spec.meta.piece_count,
                end_time: 0.0,
                complete: false,
            },
            records,
        );
        let mut tracker = TrackerState::new(spec.tracker_extension, spec.sampling);
        tracker.max_peer_set = spec.max_peer_set;
        let plan = spec
            .peers
            .iter()
            .map(|p| OptimisticPlan::new(spec.choke.uploads_for(p.upload_cap)))
            .collect();
        Ok(Self {
            spec,
            seed,
            block_kb: spec.meta.block_kb(),
            peers,
            choke: vec![ChokeMemory::default(); n],
            queue: EventQueue::new(),
            fluid: FluidState::new(),
            alloc: FlowAllocation::default(),
            alloc_dirty: true,
            tracker,
            rng: rng_from_seed(spec.rng_seed),
            plan,
            interest_open: BTreeMap::new(),
            from_seed: BTreeSet::new(),
            triggered: BTreeSet::new(),
            refill: BTreeSet::new(),
            leechers_left: n - 1,
            log,
        })
    }

    fn now(&self) -> Seconds {
        self.queue.now()
    }

    fn node(&self, p: PeerId) -> &PeerNode {
        &self.peers[p.index()]
    }

    fn node_mut(&mut self, p: PeerId) -> &mut PeerNode {
        &mut self.peers[p.index()]
    }

    /// Flash crowd: the seed announces first, then every leecher in random
    /// order, each connecting to the peers the tracker returns.
    fn start(&mut self) -> Result<()> {
        let mut order: Vec<PeerId> = (0..self.peers.len())
            .map(PeerId::from_index)
            .filter(|&p| p != self.seed)
            .collect();
        order.shuffle(&mut self.rng);
        order.insert(0, self.seed);
        for p in order {
            let cap = self.node(p).upload_cap;
            let reply = self.tracker.announce(p, Some(cap), 0.0, &mut self.rng)?;
            for (q, advertised) in reply.peers {
                if let Some(c) = advertised {
                    self.choke[p.index()].known_caps.insert(q, c);
                }
                if let Some(c) = self.tracker.advertised_cap(p) {
                    self.choke[q.index()].known_caps.insert(p, c);
                }
                self.connect(p, q)?;
            }
        }
        let period = self.spec.choke.rechoke_period;
        for i in 0..self.peers.len() {
            let offset = match self.spec.choke.rechoke_phase {
                RechokePhase::Aligned => 0.0,
                RechokePhase::Random => self.rng.gen::<f64>() * period,
            };
            self.queue.schedule(offset, EventKind::OptimisticRotation(PeerId::from_index(i)))?;
        }
        self.queue.schedule(self.spec.tick, EventKind::TickBoundary)?;
        self.queue.schedule(self.spec.time_cap, EventKind::ScenarioEnd)?;
        self.settle()
    }

    fn connect(&mut self, a: PeerId, b: PeerId) -> Result<()> {
        if a == b || self.node(a).link(b).is_some() {
            return Ok(());
        }
        let full = |n: &PeerNode| n.neighbors().count() >= self.spec.max_peer_set;
        if full(self.node(a)) || full(self.node(b)) || !self.node(a).is_active() || !self.node(b).is_active() {
            return Ok(());
        }
        let now = self.now();
        let pc = self.spec.meta.piece_count;
        self.node_mut(a).links[b.index()] = Some(crate::swarm::Link::new(b, pc, now));
        self.node_mut(b).links[a.index()] = Some(crate::swarm::Link::new(a, pc, now));
        let bits_a = self.node(a).bitfield.clone();
        let bits_b = self.node(b).bitfield.clone();
        self.deliver(a, b, Message::Bitfield(bits_b))?;
        self.deliver(b, a, Message::Bitfield(bits_a))
    }

    /// Delivers `msg` from `from` to `to` and reacts to what it changed.
    fn deliver(&mut self, to: PeerId, from: PeerId, msg: Message) -> Result<()> {
        let node = &mut self.peers[to.index()];
        let Some(link) = node.links[from.index()].as_mut() else {
            return Ok(());
        };
        let notes = link.apply(&node.bitfield, msg)?;
        for note in notes {
            match note {
                Notification::RarityUpdate(pieces) => {
                    let node = self.node_mut(to);
                    for p in pieces {
                        node.rarity.add_have(p);
                    }
                    if !self.node(to).link(from).is_some_and(|l| l.peer_choking) {
                        self.refill.insert(to);
                    }
                }
                Notification::InterestFlip(v) => {
                    self.log_interest(to, from, v);
                    let reply = if v { Message::Interested } else { Message::NotInterested };
                    self.deliver(from, to, reply)?;
                    self.refill.insert(to);
                    self.alloc_dirty = true;
                }
                Notification::RemoteInterestFlip(_) => {
                    if self.node(to).link(from).is_some_and(|l| l.unchoke.is_unchoked()) {
                        self.triggered.insert(to);
                    }
                    self.alloc_dirty = true;
                }
                Notification::RequestsCancelled(blocks) => {
                    let node = self.node_mut(to);
                    for b in blocks {
                        node.blocks.cancel(b);
                    }
                    self.fluid.reset(Flow::new(from, to));
                    self.refill.insert(to);
                    self.alloc_dirty = true;
                }
                Notification::CanRequest => {
                    self.refill.insert(to);
                }
            }
        }
        Ok(())
    }

    fn log_interest(&mut self, peer: PeerId, target: PeerId, interested: bool) {
        let now = self.now();
        if interested {
            self.interest_open.insert((peer, target), now);
        } else if let Some(start) = self.interest_open.remove(&(peer, target)) {
            if now > start {
                self.log.interest_intervals.push(InterestInterval {
                    peer,
                    target,
                    start,
                    end: now,
                });
            }
        }
    }

    fn close_unchoke(&mut self, uploader: PeerId, downloader: PeerId, kind: UnchokeKind, since: Option<Seconds>) {
        let now = self.now();
        if let Some(start) = since {
            if kind != UnchokeKind::None && now > start {
                self.log.unchoke_intervals.push(UnchokeInterval {
                    uploader,
                    downloader,
                    kind,
                    start,
                    end: now,
                });
            }
        }
    }

    fn run(&mut self) -> Result<()> {
        loop {
            if self.alloc_dirty {
                self.reallocate();
            }
            let now = self.now();
            let next_event = self
                .queue
                .peek_time()
                .ok_or_else(|| Error::logic("event queue ran dry"))?;
            let to_block = self.fluid.time_to_next_completion(&self.alloc, self.block_kb);
            match to_block {
                Some(dt) if now + dt < next_event => {
                    let done = self.fluid.advance(self.queue.clock_mut(), dt, &self.alloc, self.block_kb)?;
                    for flow in done {
                        self.on_block(flow)?;
                    }
                }
                _ => {
                    let dt = next_event - now;
                    if dt > 0.0 {
                        let done = self.fluid.advance(self.queue.clock_mut(), dt, &self.alloc, self.block_kb)?;
                        for flow in done {
                            self.on_block(flow)?;
                        }
                    }
                    while let Some(ev) = self.queue.pop_due(next_event) {
                        if self.dispatch(ev.kind)? {
                            return self.finish(false);
                        }
                    }
                }
            }
            self.settle()?;
            if self.leechers_left == 0 {
                return self.finish(true);
            }
        }
    }

    /// Returns true when the run must stop.
    fn dispatch(&mut self, kind: EventKind) -> Result<bool> {
        match kind {
            EventKind::RechokeTimer(p) => self.timer_round(p, false)?,
            EventKind::OptimisticRotation(p) => self.timer_round(p, true)?,
            EventKind::TickBoundary => {
                let next = self.now() + self.spec.tick;
                self.queue.schedule(next, EventKind::TickBoundary)?;
                self.alloc_dirty = true;
            }
            EventKind::PeerDeparture(p) => {
                if self.node(p).is_active() {
                    self.depart(p)?;
                }
            }
            EventKind::ScenarioEnd => return Ok(true),
        }
        Ok(false)
    }

    fn timer_round(&mut self, p: PeerId, rotate: bool) -> Result<()> {
        if !self.node(p).is_active() {
            return Ok(());
        }
        self.round(p, Trigger::Timer, rotate)?;
        let mem = &mut self.choke[p.index()];
        mem.timer_rounds += 1;
        let next_rotates = mem.timer_rounds % u64::from(self.spec.choke.optimistic_every) == 0;
        let at = self.now() + self.spec.choke.rechoke_period;
        let kind = if next_rotates {
            EventKind::OptimisticRotation(p)
        } else {
            EventKind::RechokeTimer(p)
        };
        self.queue.schedule(at, kind)
    }

    /// Runs event-triggered rounds and request refills until nothing changes.
    fn settle(&mut self) -> Result<()> {
        loop {
            if let Some(p) = self.triggered.pop_first() {
                if self.node(p).is_active() {
                    self.round(p, Trigger::InterestFlip, false)?;
                }
            } else if let Some(p) = self.refill.pop_first() {
                if self.node(p).is_active() {
                    self.refill_requests(p);
                }
            } else {
                return Ok(());
            }
        }
    }

    fn candidates(&self, p: PeerId) -> Result<Vec<Candidate>> {
        let node = self.node(p);
        let now = self.now();
        let cfg = &self.spec.choke;
        let mut out = Vec::new();
        for link in node.links.iter().flatten() {
            let remote = self.node(link.remote);
            let (rate, snubbed) = if node.is_seed() {
                (link.sent.rate(now, cfg.rate_window), false)
            } else {
                (
                    link.received.rate(now, cfg.rate_window),
                    is_snubbed(node.role, &link.received, now, cfg.snub_window)?,
                )
            };
            out.push(Candidate {
                id: link.remote,
                interested: link.peer_interested,
                snubbed,
                rate,
                unchoked: link.unchoke.is_unchoked(),
                last_unchoked_at: link.unchoke.last_unchoked_at,
                pending_requests: remote.link(p).is_some_and(|l| !l.pending_requests.is_empty()),
                is_seed: remote.is_seed(),
            });
        }
        Ok(out)
    }

    fn round(&mut self, p: PeerId, trigger: Trigger, rotate: bool) -> Result<()> {
        let cands = self.candidates(p)?;
        if cands.is_empty() {
            return Ok(());
        }
        let (is_seed, cap) = (self.node(p).is_seed(), self.node(p).upload_cap);
        let n = self.spec.choke.uploads_for(cap);
        let now = self.now();
        let ids: Vec<PeerId> = cands.iter().map(|c| c.id).collect();
        // Seeds have no use for capacity matching; they draw uniformly.
        let mode = if is_seed { CandidateOrder::Uniform } else { self.spec.choke.candidate_order };
        let order = candidate_order(mode, cap, &ids, &self.choke[p.index()].known_caps, &mut self.rng);
        let mem = &mut self.choke[p.index()];
        let decision = match (is_seed, self.spec.choke.seed_algorithm) {
            (false, _) | (true, SeedAlgorithm::Old) => leecher_round(n, &mut mem.leecher, &cands, rotate, &order),
            (true, SeedAlgorithm::New) => {
                let n_o = match trigger {
                    Trigger::Timer => self.plan[p.index()].for_round(mem.timer_rounds),
                    Trigger::PeerLeft | Trigger::InterestFlip => 0,
                };
                seed_round(n, n_o, self.spec.choke.seed_recency_window, now, &cands, &order)
            }
        };
        self.apply_decision(p, &ids, &decision)
    }

    fn apply_decision(&mut self, p: PeerId, ids: &[PeerId], decision: &RoundDecision) -> Result<()> {
        let now = self.now();
        for &q in ids {
            let new = decision.kind_of(q);
            let Some(slot) = self.node(p).link(q).map(|l| l.unchoke) else { continue };
            if slot.kind == new {
                continue;
            }
            self.close_unchoke(p, q, slot.kind, slot.open_since);
            self.alloc_dirty = true;
            let link = self.node_mut(p).link_mut(q).expect("link checked above");
            link.unchoke.kind = new;
            match (slot.is_unchoked(), new != UnchokeKind::None) {
                (false, true) => {
                    link.unchoke.last_unchoked_at = Some(now);
                    link.unchoke.open_since = Some(now);
                    link.am_choking = false;
                    self.deliver(q, p, Message::Unchoke)?;
                }
                (true, false) => {
                    link.unchoke.open_since = None;
                    link.am_choking = true;
                    self.deliver(q, p, Message::Choke)?;
                }
                _ => link.unchoke.open_since = Some(now),
            }
        }
        Ok(())
    }

    /// Tops up the request pipeline of every connection on which `q` may
    /// download.
    fn refill_requests(&mut self, q: PeerId) {
        let depth = self.spec.pipeline_depth;
        let policy = self.spec.piece_policy;
        let node = &mut self.peers[q.index()];
        for link in node.links.iter_mut().flatten() {
            if link.peer_choking || !link.am_interested {
                continue;
            }
            while link.pending_requests.len() < depth {
                let Some(b) = node
                    .blocks
                    .next_block(&node.bitfield, &link.remote_has, &node.rarity, policy, &mut self.rng)
                else {
                    break;
                };
                node.blocks.mark_requested(b, link.remote);
                link.pending_requests.push_back(b);
                self.alloc_dirty = true;
            }
        }
    }

    fn reallocate(&mut self) {
        let mut flows = Vec::new();
        for up in self.peers.iter().filter(|n| n.is_active()) {
            for link in up.links.iter().flatten() {
                if !link.unchoke.is_unchoked() {
                    continue;
                }
                let down = self.node(link.remote);
                if down.link(up.id).is_some_and(|l| l.am_interested && !l.pending_requests.is_empty()) {
                    flows.push(Flow::new(up.id, link.remote));
                }
            }
        }
        self.alloc = allocate_rates(&flows, |p| self.peers[p.index()].upload_cap);
        self.alloc_dirty = false;
    }

    fn on_block(&mut self, flow: Flow) -> Result<()> {
        let (u, q) = (flow.uploader, flow.downloader);
        let now = self.now();
        let kb = self.block_kb;
        let keep = self.spec.choke.rate_window.max(self.spec.choke.snub_window);
        let b = {
            // A peer that left earlier in the same instant takes its flows along.
            let Some(link) = self.node_mut(q).link_mut(u) else {
                return Ok(());
            };
            let b = link
                .pending_requests
                .pop_front()
                .ok_or_else(|| Error::logic(format!("block without request {u}->{q}")))?;
            link.received.record(now, kb);
            link.received.prune(now, keep);
            b
        };
        if let Some(l) = self.node_mut(u).link_mut(q) {
            l.sent.record(now, kb);
            l.sent.prune(now, keep);
        }
        self.log.transfers.push(Transfer {
            uploader: u,
            downloader: q,
            piece: b.piece,
            kb,
            time: now,
        });
        if u == self.seed {
            self.from_seed.insert((q, b.piece));
        }
        self.alloc_dirty = true;
        self.refill.insert(q);
        if self.node_mut(q).blocks.mark_received(b) {
            self.on_piece(q, b.piece)?;
        }
        Ok(())
    }

    fn on_piece(&mut self, q: PeerId, piece: usize) -> Result<()> {
        let now = self.now();
        if self.from_seed.remove(&(q, piece)) {
            self.log.seed_piece_uploads.push(SeedPieceUpload { piece, time: now });
        }
        let outcome = self.node_mut(q).on_piece_complete(piece, now)?;
        for r in outcome.lost_interest {
            self.log_interest(q, r, false);
            self.deliver(r, q, Message::NotInterested)?;
        }
        for r in outcome.have_to {
            self.deliver(r, q, Message::Have(piece))?;
        }
        if outcome.finished {
            self.log.completions.insert(q, now);
            self.leechers_left -= 1;
            match self.spec.departure {
                Departure::Immediate => self.depart(q)?,
                Departure::LingerAsSeed { duration } => {
                    self.queue.schedule(now + duration, EventKind::PeerDeparture(q))?;
                }
            }
        }
        Ok(())
    }

    /// Removes `q` from the swarm, closing every interval it took part in.
    fn depart(&mut self, q: PeerId) -> Result<()> {
        let now = self.now();
        let neighbors: Vec<PeerId> = self.node(q).neighbors().collect();
        for r in neighbors {
            let out = self.node_mut(q).links[r.index()].take().expect("neighbor link");
            let inc = self.node_mut(r).links[q.index()].take().expect("symmetric link");
            self.close_unchoke(q, r, out.unchoke.kind, out.unchoke.open_since);
            self.close_unchoke(r, q, inc.unchoke.kind, inc.unchoke.open_since);
            self.log_interest(q, r, false);
            self.log_interest(r, q, false);
            for (peer, link) in [(q, &out), (r, &inc)] {
                if now > link.joined_at {
                    self.log.membership_intervals.push(MembershipInterval {
                        peer,
                        neighbor: link.remote,
                        start: link.joined_at,
                        end: now,
                    });
                }
            }
            let rn = self.node_mut(r);
            rn.rarity.remove_bitfield(&inc.remote_has);
            for b in &inc.pending_requests {
                rn.blocks.cancel(*b);
            }
            self.fluid.reset(Flow::new(q, r));
            self.fluid.reset(Flow::new(r, q));
            self.refill.insert(r);
            if inc.unchoke.is_unchoked() && inc.peer_interested {
                self.triggered.insert(r);
            }
            let mem = &mut self.choke[r.index()];
            mem.known_caps.remove(&q);
        }
        self.node_mut(q).departed_at = Some(now);
        self.log.peers[q.index()].departed_at = Some(now);
        self.tracker.depart(q, now)?;
        self.alloc_dirty = true;
        Ok(())
    }

    /// Closes the books at the current instant.
    fn finish(&mut self, complete: bool) -> Result<()> {
        let now = self.now();
        for i in 0..self.peers.len() {
            let p = PeerId::from_index(i);
            let links: Vec<_> = self.node(p).links.iter().flatten().map(|l| (l.remote, l.unchoke, l.joined_at)).collect();
            for (r, slot, joined) in links {
                self.close_unchoke(p, r, slot.kind, slot.open_since);
                self.log_interest(p, r, false);
                if now > joined {
                    self.log.membership_intervals.push(MembershipInterval {
                        peer: p,
                        neighbor: r,
                        start: joined,
                        end: now,
                    });
                }
            }
        }
        self.log.meta.end_time = now;
        self.log.meta.complete = complete;
        Ok(())
    }
}
