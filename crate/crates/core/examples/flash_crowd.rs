//! One flash-crowd run of the well-provisioned three-class torrent.
//!
//! Usage: `cargo run --release --example flash_crowd [scale]`. Scale 1 is the
//! full 113 MB content; the default of 8 finishes in about a second.

use swarmsim::engine::simulate;
use swarmsim::metrics::RunSummary;
use swarmsim::scenario::build_preset;

fn main() -> swarmsim::Result<()> {
    let scale: f64 = std::env::args().nth(1).map_or(Ok(8.0), |s| s.parse()).expect("scale must be a number");
    let cfg = build_preset("three-class-200")?.scaled(scale)?;
    let log = simulate(&cfg.run_spec(0)?)?;
    let summary = RunSummary::from_log(&log);

    println!("{} peers, {} pieces, finished at {:.0}s", log.peers.len(), log.meta.piece_count, summary.end_time);
    if let Some(t) = summary.completion.optimal_completion_time {
        println!("seed pushed a full copy at {t:.0}s");
    }
    let clustering = summary.class_mean_clustering();
    for (class, t) in summary.class_mean_completion() {
        println!(
            "{class:<8} mean completion {t:>7.0}s  clustering {:.2}",
            clustering.get(&class).copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
