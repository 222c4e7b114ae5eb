//! Peer availability with a seed slower than the fast leechers: how often
//! each class was interested in each other class.
//!
//! Usage: `cargo run --release --example underprovisioned_seed [scale]`.

use std::collections::BTreeMap;

use swarmsim::engine::simulate;
use swarmsim::metrics::RunSummary;
use swarmsim::scenario::build_preset;

fn main() -> swarmsim::Result<()> {
    let scale: f64 = std::env::args().nth(1).map_or(4.0, |s| s.parse().expect("scale"));
    let cfg = build_preset("three-class-100")?.scaled(scale)?;
    let summary = RunSummary::from_log(&simulate(&cfg.run_spec(0)?)?);

    let mut sums: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for (x, y, ratio) in &summary.availability {
        let e = sums.entry((summary.class_of(*x), summary.class_of(*y))).or_default();
        e.0 += ratio;
        e.1 += 1;
    }
    println!("{:<8} {:<8} availability", "from", "to");
    for ((from, to), (sum, n)) in sums {
        println!("{from:<8} {to:<8} {:.2}", sum / n as f64);
    }
    for (class, t) in summary.class_mean_completion() {
        println!("{class:<8} mean completion {t:.0}s");
    }
    Ok(())
}
