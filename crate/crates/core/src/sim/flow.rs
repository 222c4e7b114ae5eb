use std::collections::BTreeMap;

use crate::{Kb, PeerId, Result, Seconds};

use super::SimClock;

/// Slack under which an accrued block counts as fully transferred.
pub const COMPLETION_EPSILON: Kb = 1e-7;

/// A directed data flow from `uploader` to `downloader`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Flow {
    pub uploader: PeerId,
    pub downloader: PeerId,
}

impl Flow {
    pub fn new(uploader: PeerId, downloader: PeerId) -> Self {
        Self {
            uploader,
            downloader,
        }
    }
}

/// Instantaneous rate of every active flow, in kB/s, sorted by flow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowAllocation {
    rates: Vec<(Flow, Kb)>,
}

impl FlowAllocation {
    pub fn rate(&self, flow: Flow) -> Kb {
        self.rates
            .binary_search_by(|(f, _)| f.cmp(&flow))
            .map(|i| self.rates[i].1)
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Flow, Kb)> + '_ {
        self.rates.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Sum of outgoing rates of one uploader.
    pub fn uploader_total(&self, uploader: PeerId) -> Kb {
        self.rates
            .iter()
            .filter(|(f, _)| f.uploader == uploader)
            .map(|(_, r)| r)
            .sum()
    }
}

/// Max-min fair rates under sender-side caps only.
///
/// Receivers are uncapped, so the max-min solution splits each uploader's cap
/// equally among its active flows. Duplicate flows are collapsed.
pub fn allocate_rates(flows: &[Flow], caps: impl Fn(PeerId) -> Kb) -> FlowAllocation {
    let mut sorted = flows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut rates = Vec::with_capacity(sorted.len());
    let mut start = 0;
    while start < sorted.len() {
        let uploader = sorted[start].uploader;
        let end = start
            + sorted[start..]
                .iter()
                .take_while(|f| f.uploader == uploader)
                .count();
        let share = caps(uploader) / (end - start) as f64;
        rates.extend(sorted[start..end].iter().map(|&f| (f, share)));
        start = end;
    }
    FlowAllocation { rates }
}

/// Progress of the block at the head of each flow's request queue.
#[derive(Debug, Clone, Default)]
pub struct FluidState {
    accrued: BTreeMap<Flow, Kb>,
}

impl FluidState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accrued(&self, flow: Flow) -> Kb {
        self.accrued.get(&flow).copied().unwrap_or(0.0)
    }

    /// Drops partial progress, e.g. when the head request is cancelled.
    pub fn reset(&mut self, flow: Flow) {
        self.accrued.remove(&flow);
    }

    /// Time until the first head block completes under `alloc`.
    pub fn time_to_next_completion(&self, alloc: &FlowAllocation, block: Kb) -> Option<Seconds> {
        alloc
            .iter()
            .filter(|(_, rate)| *rate > 0.0)
            .map(|(flow, rate)| ((block - self.accrued(flow)).max(0.0)) / rate)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Integrates every flow over `dt` and advances the clock.
    ///
    /// Returns the flows whose head block is complete, in flow order; their
    /// progress is reset so the next queued block starts from zero.
    pub fn advance(
        &mut self,
        clock: &mut SimClock,
        dt: Seconds,
        alloc: &FlowAllocation,
        block: Kb,
    ) -> Result<Vec<Flow>> {
        clock.advance_to(clock.now() + dt)?;
        let mut done = Vec::new();
        for (flow, rate) in alloc.iter() {
            if rate <= 0.0 {
                continue;
            }
            let acc = self.accrued.entry(flow).or_insert(0.0);
            *acc += rate * dt;
            if *acc >= block - COMPLETION_EPSILON {
                done.push(flow);
            }
        }
        for flow in &done {
            self.accrued.remove(flow);
        }
        Ok(done)
    }
}
