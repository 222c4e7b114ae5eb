//! Seed duplicate overhead and service uniformity under both seed-state
//! algorithms and both rarest-first orders.
//!
//! Usage: `cargo run --release --example seed_algorithms [scale] [runs]`.

use swarmsim::choking::SeedAlgorithm;
use swarmsim::pieces::PiecePolicy;
use swarmsim::scenario::{build_preset, run_batch, Overrides};

fn main() -> swarmsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(4.0, |s| s.parse().expect("scale"));
    let runs: usize = args.next().map_or(2, |s| s.parse().expect("runs"));

    for algorithm in [SeedAlgorithm::New, SeedAlgorithm::Old] {
        for order in [PiecePolicy::Deterministic, PiecePolicy::Randomized] {
            let cfg = Overrides {
                runs: Some(runs),
                seed_algorithm: Some(algorithm),
                rarest_order: Some(order),
                scale: Some(scale),
                ..Overrides::default()
            }
            .apply(build_preset("three-class-200")?)?;
            let res = run_batch(&cfg, None)?;
            let n = res.summaries.len() as f64;
            let overhead: f64 = res.summaries.iter().filter_map(|s| s.seed_stats.duplicate_overhead).sum::<f64>() / n;
            let cv: f64 = res.summaries.iter().filter_map(|s| s.seed_service_cv()).sum::<f64>() / n;
            println!(
                "{algorithm:?} seed, {order:?} order: duplicate overhead {:>6.1}%, seed service CV {cv:.2}",
                overhead * 100.0
            );
        }
    }
    Ok(())
}
