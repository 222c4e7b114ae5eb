//! Virtual clock, event queue, seeded randomness and the fluid bandwidth model.

mod flow;
mod queue;

pub use flow::{allocate_rates, Flow, FlowAllocation, FluidState, COMPLETION_EPSILON};
pub use queue::{Event, EventKind, EventQueue, SimClock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The single random stream of a simulation run.
///
/// ChaCha8 is specified bit-for-bit, so a seed reproduces the same stream on
/// every platform.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
