use std::collections::VecDeque;

use crate::swarm::Role;
use crate::{Error, Kb, Result, Seconds};

/// Sliding record of data moved over one direction of a connection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateEstimator {
    samples: VecDeque<(Seconds, Kb)>,
    last_at: Option<Seconds>,
    total: Kb,
}

impl RateEstimator {
    pub fn record(&mut self, at: Seconds, kb: Kb) {
        self.samples.push_back((at, kb));
        self.last_at = Some(at);
        self.total += kb;
    }

    /// Drops samples that can no longer fall inside a window of `keep`.
    pub fn prune(&mut self, at: Seconds, keep: Seconds) {
        while let Some(&(t, _)) = self.samples.front() {
            if t <= at - keep {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    /// Data in `(at - window, at]` divided by `window`.
    pub fn rate(&self, at: Seconds, window: Seconds) -> Kb {
        let sum: Kb = self
            .samples
            .iter()
            .rev()
            .take_while(|(t, _)| *t > at - window)
            .filter(|(t, _)| *t <= at)
            .map(|(_, kb)| kb)
            .sum();
        sum / window
    }

    pub fn last_at(&self) -> Option<Seconds> {
        self.last_at
    }

    pub fn total(&self) -> Kb {
        self.total
    }
}

/// A leecher considers a neighbor snubbed when nothing arrived from it in
/// `(at - window, at]`. Connections that never delivered data are snubbed.
/// Seeds have no notion of snubbing.
pub fn is_snubbed(local_role: Role, received: &RateEstimator, at: Seconds, window: Seconds) -> Result<bool> {
    if local_role == Role::Seed {
        return Err(Error::logic("snub check requested by a seed"));
    }
    Ok(received.last_at().map_or(true, |t| at - t >= window))
}
