//! Choking algorithms: leecher state, the recency-ordered seed state, the
//! older download-rate seed state, and the rate estimator feeding them.

mod rate;
mod rounds;

pub use rate::{is_snubbed, RateEstimator};
pub use rounds::{candidate_order, leecher_round, seed_round, Candidate, LeecherChokeState, RoundDecision, Trigger};

use serde::{Deserialize, Serialize};

use crate::{Error, Kb, Result, Seconds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedAlgorithm {
    /// Order by time of last unchoke, spread optimistic unchokes over 30 s.
    #[default]
    New,
    /// Leecher algorithm keyed on download rate from the seed.
    Old,
}

/// Order in which optimistic-unchoke candidates are tried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrder {
    #[default]
    Uniform,
    /// Closest advertised upload capacity first (needs the tracker extension).
    CapacityBiased,
}

/// Where each peer's rechoke timer sits on the period grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RechokePhase {
    /// Every peer rechokes at 0, P, 2P, ...
    Aligned,
    /// Each peer draws a fixed offset in [0, P) when it joins.
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChokeConfig {
    /// Parallel uploads `n`; `None` derives it from the upload limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel_uploads: Option<usize>,
    pub rechoke_period: Seconds,
    /// Timer rounds between optimistic rotations.
    pub optimistic_every: u32,
    pub snub_window: Seconds,
    pub seed_recency_window: Seconds,
    pub rate_window: Seconds,
    pub seed_algorithm: SeedAlgorithm,
    pub candidate_order: CandidateOrder,
    pub rechoke_phase: RechokePhase,
}

impl Default for ChokeConfig {
    fn default() -> Self {
        Self {
            parallel_uploads: None,
            rechoke_period: 10.0,
            optimistic_every: 3,
            snub_window: 30.0,
            seed_recency_window: 20.0,
            rate_window: 20.0,
            seed_algorithm: SeedAlgorithm::New,
            candidate_order: CandidateOrder::Uniform,
            rechoke_phase: RechokePhase::Random,
        }
    }
}

impl ChokeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.parallel_uploads {
            if n < 2 {
                return Err(Error::config(format!("parallel_uploads must be >= 2, got {n}")));
            }
        }
        let windows = [
            ("rechoke_period", self.rechoke_period),
            ("snub_window", self.snub_window),
            ("seed_recency_window", self.seed_recency_window),
            ("rate_window", self.rate_window),
        ];
        for (name, v) in windows {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.optimistic_every == 0 {
            return Err(Error::config("optimistic_every must be >= 1"));
        }
        Ok(())
    }

    /// Parallel uploads for a peer with the given upload limit.
    pub fn uploads_for(&self, upload_cap: Kb) -> usize {
        self.parallel_uploads
            .unwrap_or_else(|| parallel_uploads_for_limit(upload_cap))
    }
}

/// The official client's mapping from upload limit (kB/s) to parallel uploads.
///
/// | limit        | n  |
/// |--------------|----|
/// | < 15         | 2  |
/// | [15, 42)     | 4  |
/// | [42, 150)    | 5  |
/// | >= 150       | 10 |
pub fn parallel_uploads_for_limit(upload_cap: Kb) -> usize {
    if upload_cap < 15.0 {
        2
    } else if upload_cap < 42.0 {
        4
    } else if upload_cap < 150.0 {
        5
    } else {
        10
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnchokeKind {
    #[default]
    None,
    Regular,
    Optimistic,
}

/// Per-connection unchoke bookkeeping kept by the uploading side.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnchokeSlot {
    pub kind: UnchokeKind,
    pub last_unchoked_at: Option<Seconds>,
    pub open_since: Option<Seconds>,
}

impl UnchokeSlot {
    pub fn is_unchoked(&self) -> bool {
        self.kind != UnchokeKind::None
    }
}

/// Optimistic unchokes of the seed over the next three rechoke periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimisticPlan {
    pub counts: [usize; 3],
    pub total: usize,
}

impl OptimisticPlan {
    /// `total = max(1, round(n / 2))`, spread as evenly as possible with the
    /// larger counts first.
    pub fn new(n: usize) -> Self {
        let total = ((n as f64 / 2.0).round() as usize).max(1);
        let (base, rem) = (total / 3, total % 3);
        let mut counts = [base; 3];
        for c in counts.iter_mut().take(rem) {
            *c += 1;
        }
        Self { counts, total }
    }

    /// Count for the timer round with the given ordinal.
    pub fn for_round(&self, timer_round: u64) -> usize {
        self.counts[(timer_round % 3) as usize]
    }
}

pub fn optimistic_plan(n: usize) -> OptimisticPlan {
    OptimisticPlan::new(n)
}
