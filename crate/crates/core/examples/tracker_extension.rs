//! Capacity advertisement through the tracker: how fast peers find a partner
//! of similar upload capacity with and without capacity-biased optimistic
//! unchokes.
//!
//! Usage: `cargo run --release --example tracker_extension [scale] [runs]`.

use swarmsim::scenario::{build_preset, run_batch, Overrides};

fn main() -> swarmsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(8.0, |s| s.parse().expect("scale"));
    let runs: usize = args.next().map_or(2, |s| s.parse().expect("runs"));

    for extension in [false, true] {
        let cfg = Overrides {
            runs: Some(runs),
            tracker_extension: Some(extension),
            scale: Some(scale),
            ..Overrides::default()
        }
        .apply(build_preset("uniform")?)?;
        let res = run_batch(&cfg, None)?;
        let times: Vec<f64> = res.summaries.iter().filter_map(|s| s.mean_discovery_time()).collect();
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let found: usize = res.summaries.iter().map(|s| s.discovery.values().flatten().count()).sum();
        let eligible: usize = res.summaries.iter().map(|s| s.discovery.len()).sum();
        println!(
            "extension {}: {found}/{eligible} peers found a similar-capacity partner, after {mean:.1}s on average",
            if extension { "on " } else { "off" }
        );
    }
    Ok(())
}
