//! Scenario descriptions: the TOML config format, named presets, and the
//! batch runner that turns a scenario into run directories.
//!
//! A config file has six flat sections:
//!
//! ```toml
//! [content]
//! size_kb = 115968
//! piece_kb = 256
//! block_kb = 16
//!
//! [peers]
//! classes = [
//!     { label = "slow", count = 13, upload_cap = 20 },
//!     { label = "fast", count = 13, upload_cap = 200 },
//! ]
//!
//! [seed]
//! upload_cap = 200
//!
//! [choking]
//! parallel_uploads = 4
//! seed_algorithm = "new"
//!
//! [tracker]
//! extension = false
//!
//! [run]
//! runs = 8
//! rng_seed = 1
//! ```
//!
//! Everything except `[peers]` and `seed.upload_cap` has a default; unknown
//! keys are rejected.

mod batch;

pub use batch::{report, run_batch, run_dir_name, BatchResult, AGGREGATE_DIR};

use serde::{Deserialize, Serialize};

use crate::choking::{CandidateOrder, ChokeConfig, SeedAlgorithm};
use crate::engine::{Departure, PeerSpec, RunSpec};
use crate::pieces::PiecePolicy;
use crate::swarm::make_torrent;
use crate::tracker::{Sampling, DEFAULT_MAX_PEER_SET};
use crate::{Error, Kb, Result, Seconds};

/// Content size of every preset: 453 pieces of 256 kB.
pub const PAPER_CONTENT_KB: u64 = 453 * 256;

/// Multiple of the optimal-completion estimate after which a run is cut.
pub const TIME_CAP_FACTOR: f64 = 6.0;
pub const MIN_CAP_ROUNDS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentSection {
    pub size_kb: u64,
    pub piece_kb: u64,
    pub block_kb: u64,
}

impl Default for ContentSection {
    fn default() -> Self {
        Self {
            size_kb: PAPER_CONTENT_KB,
            piece_kb: 256,
            block_kb: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerClass {
    pub label: String,
    pub count: usize,
    pub upload_cap: Kb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeersSection {
    /// Leecher classes; ids are assigned class by class in this order.
    pub classes: Vec<PeerClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub upload_cap: Kb,
    /// 1-based id of the seed; defaults to the last id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    /// Announce and return upload capacities.
    pub extension: bool,
    pub sampling: Sampling,
    pub max_peer_set: usize,
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self {
            extension: false,
            sampling: Sampling::Uniform,
            max_peer_set: DEFAULT_MAX_PEER_SET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeparturePolicy {
    #[default]
    Immediate,
    LingerAsSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub runs: usize,
    pub rng_seed: u64,
    pub tick: Seconds,
    pub pipeline_depth: usize,
    pub rarest_order: PiecePolicy,
    pub departure: DeparturePolicy,
    /// Required with `departure = "linger_as_seed"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linger_seconds: Option<Seconds>,
    /// Virtual-time cap; defaults to a multiple of the optimal estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_cap: Option<Seconds>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            runs: 1,
            rng_seed: 0,
            tick: 0.1,
            pipeline_depth: 5,
            rarest_order: PiecePolicy::Deterministic,
            departure: DeparturePolicy::Immediate,
            linger_seconds: None,
            time_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub content: ContentSection,
    pub peers: PeersSection,
    pub seed: SeedSection,
    #[serde(default)]
    pub choking: ChokeConfig,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Parses and validates a TOML scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::parse("scenario config", e.message()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("scenario config", e))
    }

    pub fn leecher_count(&self) -> usize {
        self.peers.classes.iter().map(|c| c.count).sum()
    }

    pub fn peer_count(&self) -> usize {
        self.leecher_count() + 1
    }

    pub fn validate(&self) -> Result<()> {
        make_torrent(self.content.size_kb, self.content.piece_kb, self.content.block_kb)?;
        self.choking.validate()?;
        if self.peer_count() < 2 {
            return Err(Error::config("a swarm needs at least two peers"));
        }
        for c in &self.peers.classes {
            if !(c.upload_cap > 0.0 && c.upload_cap.is_finite()) {
                return Err(Error::config(format!("class {}: upload cap must be positive", c.label)));
            }
            if c.label == "seed" {
                return Err(Error::config("class label `seed` is reserved"));
            }
        }
        if !(self.seed.upload_cap > 0.0 && self.seed.upload_cap.is_finite()) {
            return Err(Error::config("seed upload cap must be positive"));
        }
        if let Some(id) = self.seed.id {
            if id == 0 || id > self.peer_count() {
                return Err(Error::config(format!("seed id {id} outside 1..={}", self.peer_count())));
            }
        }
        let r = &self.run;
        if r.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if !(r.tick > 0.0) || r.pipeline_depth == 0 {
            return Err(Error::config("tick and pipeline depth must be positive"));
        }
        if r.time_cap.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::config("time cap must be positive"));
        }
        match (r.departure, r.linger_seconds) {
            (DeparturePolicy::LingerAsSeed, None) => {
                Err(Error::config("departure = linger_as_seed needs linger_seconds"))
            }
            (_, Some(s)) if !(s >= 0.0) => Err(Error::config("linger_seconds must be non-negative")),
            _ => Ok(()),
        }
    }

    /// 1-based id of the seed.
    pub fn seed_id(&self) -> usize {
        self.seed.id.unwrap_or(self.peer_count())
    }

    /// Peers in id order, the seed at its configured position.
    pub fn peer_specs(&self) -> Vec<PeerSpec> {
        let mut peers: Vec<PeerSpec> = self
            .peers
            .classes
            .iter()
            .flat_map(|c| {
                (0..c.count).map(|_| PeerSpec {
                    class_label: c.label.clone(),
                    upload_cap: c.upload_cap,
                    initial_seed: false,
                })
            })
            .collect();
        peers.insert(
            self.seed_id() - 1,
            PeerSpec {
                class_label: "seed".into(),
                upload_cap: self.seed.upload_cap,
                initial_seed: true,
            },
        );
        peers
    }

    /// Rough lower bound on the last completion: the slower of pushing one
    /// copy through the seed and pushing every copy through all uploaders.
    pub fn optimal_estimate(&self) -> Seconds {
        let content = self.content.size_kb as f64;
        let total_cap: Kb = self.seed.upload_cap
            + self
                .peers
                .classes
                .iter()
                .map(|c| c.count as f64 * c.upload_cap)
                .sum::<Kb>();
        (content / self.seed.upload_cap).max(self.leecher_count() as f64 * content / total_cap)
    }

    /// Tiny contents still get a few dozen rechoke rounds before the cap.
    pub fn time_cap(&self) -> Seconds {
        self.run.time_cap.unwrap_or(
            (TIME_CAP_FACTOR * self.optimal_estimate()).max(MIN_CAP_ROUNDS * self.choking.rechoke_period),
        )
    }

    /// Engine parameters of run `index` (seeded with `rng_seed + index`).
    pub fn run_spec(&self, index: usize) -> Result<RunSpec> {
        self.validate()?;
        let departure = match self.run.departure {
            DeparturePolicy::Immediate => Departure::Immediate,
            DeparturePolicy::LingerAsSeed => Departure::LingerAsSeed {
                duration: self.run.linger_seconds.unwrap_or(0.0),
            },
        };
        Ok(RunSpec {
            run: index,
            rng_seed: self.run.rng_seed.wrapping_add(index as u64),
            meta: make_torrent(self.content.size_kb, self.content.piece_kb, self.content.block_kb)?,
            peers: self.peer_specs(),
            choke: self.choking,
            piece_policy: self.run.rarest_order,
            tracker_extension: self.tracker.extension,
            sampling: self.tracker.sampling,
            max_peer_set: self.tracker.max_peer_set,
            departure,
            tick: self.run.tick,
            pipeline_depth: self.run.pipeline_depth,
            time_cap: self.time_cap(),
        })
    }

    /// Divides the content size by `factor`, keeping the piece size.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        if !(factor >= 1.0 && factor.is_finite()) {
            return Err(Error::config(format!("scale factor {factor} must be at least 1")));
        }
        let size = (self.content.size_kb as f64 / factor).round() as u64;
        self.content.size_kb = size.max(self.content.piece_kb);
        if let Some(t) = self.run.time_cap.as_mut() {
            *t /= factor;
        }
        Ok(self)
    }
}

/// Command-line style adjustments applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub runs: Option<usize>,
    pub rng_seed: Option<u64>,
    pub seed_algorithm: Option<SeedAlgorithm>,
    pub rarest_order: Option<PiecePolicy>,
    /// Turns the tracker extension and capacity-biased optimistic ordering
    /// on or off together.
    pub tracker_extension: Option<bool>,
    pub scale: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
        if let Some(r) = self.runs {
            cfg.run.runs = r;
        }
        if let Some(s) = self.rng_seed {
            cfg.run.rng_seed = s;
        }
        if let Some(a) = self.seed_algorithm {
            cfg.choking.seed_algorithm = a;
        }
        if let Some(o) = self.rarest_order {
            cfg.run.rarest_order = o;
        }
        if let Some(on) = self.tracker_extension {
            cfg.tracker.extension = on;
            cfg.choking.candidate_order = if on {
                CandidateOrder::CapacityBiased
            } else {
                CandidateOrder::Uniform
            };
        }
        if let Some(f) = self.scale {
            cfg = cfg.scaled(f)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Named configurations of the measured torrents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 13 slow, 14 medium, 13 fast leechers; well-provisioned seed.
    ThreeClass200,
    /// 12 slow, 14 medium, 12 fast leechers; seed at 100 kB/s with id 27.
    ThreeClass100,
    /// As `ThreeClass100` with the seed at 20 kB/s.
    ThreeClass20,
    /// 20 leechers at 20 kB/s and 20 at 200 kB/s.
    TwoClass,
    /// 40 leechers at 20, 25, ..., 215 kB/s.
    Uniform,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::ThreeClass200,
        Preset::ThreeClass100,
        Preset::ThreeClass20,
        Preset::TwoClass,
        Preset::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ThreeClass200 => "three-class-200",
            Preset::ThreeClass100 => "three-class-100",
            Preset::ThreeClass20 => "three-class-20",
            Preset::TwoClass => "two-class",
            Preset::Uniform => "uniform",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::ThreeClass200 => "13x20 + 14x50 + 13x200 kB/s leechers, seed 200 kB/s (id 41), 13 runs",
            Preset::ThreeClass100 => "12x20 + 14x50 + 12x200 kB/s leechers, seed 100 kB/s (id 27), 8 runs",
            Preset::ThreeClass20 => "12x20 + 14x50 + 12x200 kB/s leechers, seed 20 kB/s (id 27), 8 runs",
            Preset::TwoClass => "20x20 + 20x200 kB/s leechers, seed 200 kB/s, 8 runs",
            Preset::Uniform => "40 leechers at 20, 25, ..., 215 kB/s, seed 200 kB/s, 8 runs",
        }
    }

    pub fn from_name(name: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::UnknownPreset(name.to_string()))
    }

    pub fn config(self) -> ScenarioConfig {
        let class = |label: &str, count, cap| PeerClass {
            label: label.into(),
            count,
            upload_cap: cap,
        };
        let (classes, seed_cap, seed_id, runs) = match self {
            Preset::ThreeClass200 => (
                vec![class("slow", 13, 20.0), class("medium", 14, 50.0), class("fast", 13, 200.0)],
                200.0,
                None,
                13,
            ),
            Preset::ThreeClass100 | Preset::ThreeClass20 => (
                vec![class("slow", 12, 20.0), class("medium", 14, 50.0), class("fast", 12, 200.0)],
                if self == Preset::ThreeClass100 { 100.0 } else { 20.0 },
                Some(27),
                8,
            ),
            Preset::TwoClass => (vec![class("slow", 20, 20.0), class("fast", 20, 200.0)], 200.0, None, 8),
            Preset::Uniform => (
                (0..40)
                    .map(|i| {
                        let cap = 20.0 + 5.0 * i as f64;
                        class(&format!("u{cap}"), 1, cap)
                    })
                    .collect(),
                200.0,
                None,
                8,
            ),
        };
        ScenarioConfig {
            content: ContentSection::default(),
            peers: PeersSection { classes },
            seed: SeedSection {
                upload_cap: seed_cap,
                id: seed_id,
            },
            choking: ChokeConfig {
                parallel_uploads: Some(4),
                ..ChokeConfig::default()
            },
            tracker: TrackerSection::default(),
            run: RunSection {
                name: self.name().into(),
                runs,
                // Ascending order makes concurrent seed downloaders collide on
                // every piece when haves propagate instantly.
                rarest_order: PiecePolicy::Randomized,
                ..RunSection::default()
            },
        }
    }
}

pub fn build_preset(name: &str) -> Result<ScenarioConfig> {
    Preset::from_name(name).map(Preset::config)
}
