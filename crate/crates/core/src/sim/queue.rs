use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, PeerId, Result, Seconds};

/// Monotone virtual clock.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimClock {
    now: Seconds,
}

impl SimClock {
    pub fn now(&self) -> Seconds {
        self.now
    }

    /// Moves the clock forward. Going backwards is a bug in the caller.
    pub fn advance_to(&mut self, t: Seconds) -> Result<()> {
        if t < self.now {
            return Err(Error::logic(format!(
                "clock moved backwards: {t} < {}",
                self.now
            )));
        }
        self.now = t;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    RechokeTimer(PeerId),
    TickBoundary,
    PeerDeparture(PeerId),
    /// A timer round that also rotates the optimistic unchoke.
    OptimisticRotation(PeerId),
    ScenarioEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: Seconds,
    pub kind: EventKind,
    pub sequence: u64,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest (time, sequence) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events ordered by `(time, sequence)`, plus the clock they drive.
#[derive(Debug, Default)]
pub struct EventQueue {
    clock: SimClock,
    heap: BinaryHeap<Event>,
    next_sequence: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Seconds {
        self.clock.now()
    }

    pub fn clock_mut(&mut self) -> &mut SimClock {
        &mut self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: Seconds, kind: EventKind) -> Result<()> {
        if !(time >= self.clock.now()) {
            return Err(Error::logic(format!(
                "event {kind:?} scheduled at {time} before now = {}",
                self.clock.now()
            )));
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            time,
            kind,
            sequence,
        });
        Ok(())
    }

    pub fn peek_time(&self) -> Option<Seconds> {
        self.heap.peek().map(|e| e.time)
    }

    /// Pops the next event and moves the clock to its timestamp.
    pub fn pop(&mut self) -> Option<Event> {
        let event = self.heap.pop()?;
        // Scheduling guarantees event.time >= now.
        self.clock.now = event.time;
        Some(event)
    }

    /// Pops the next event only if it is due at or before `t`.
    pub fn pop_due(&mut self, t: Seconds) -> Option<Event> {
        match self.heap.peek() {
            Some(e) if e.time <= t => self.pop(),
            _ => None,
        }
    }
}
