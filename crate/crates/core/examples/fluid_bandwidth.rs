//! The fluid bandwidth model: rates for a small flow graph and the exact
//! instant the next block completes.

use swarmsim::sim::{allocate_rates, Flow, FluidState, SimClock};
use swarmsim::PeerId;

fn main() -> swarmsim::Result<()> {
    let caps = |p: PeerId| match p.0 {
        1 => 200.0,
        2 => 20.0,
        _ => 50.0,
    };
    let flows = [
        Flow::new(PeerId(1), PeerId(3)),
        Flow::new(PeerId(1), PeerId(4)),
        Flow::new(PeerId(1), PeerId(5)),
        Flow::new(PeerId(2), PeerId(3)),
        Flow::new(PeerId(3), PeerId(2)),
    ];
    let alloc = allocate_rates(&flows, caps);
    for (f, r) in alloc.iter() {
        println!("{} -> {}: {r:.2} kB/s", f.uploader.0, f.downloader.0);
    }

    let mut clock = SimClock::default();
    let mut fluid = FluidState::new();
    let block = 16.0;
    let mut done = 0;
    while done < 4 {
        let dt = fluid.time_to_next_completion(&alloc, block).expect("some flow is active");
        for f in fluid.advance(&mut clock, dt, &alloc, block)? {
            println!("t={:>6.3}s block done on {} -> {}", clock.now(), f.uploader.0, f.downloader.0);
            done += 1;
        }
    }
    Ok(())
}
