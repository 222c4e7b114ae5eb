//! A custom torrent from a TOML document, written to disk and re-derived
//! from its logs.
//!
//! Usage: `cargo run --release --example custom_config [out-dir]`.

use std::path::PathBuf;

use swarmsim::scenario::{parse_config, report, run_batch};

const CONFIG: &str = r#"
[content]
size_kb = 8192

[peers]
classes = [
    { label = "dsl", count = 10, upload_cap = 20 },
    { label = "cable", count = 6, upload_cap = 60 },
    { label = "fiber", count = 4, upload_cap = 250 },
]

[seed]
upload_cap = 120

[choking]
parallel_uploads = 4

[run]
name = "mixed-access"
runs = 3
rng_seed = 42
rarest_order = "randomized"
"#;

fn main() -> swarmsim::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("swarmsim-custom-config"), PathBuf::from);
    let cfg = parse_config(CONFIG)?;
    let first = run_batch(&cfg, Some(&out))?;
    let again = report(&out)?;
    assert_eq!(first.aggregate, again.aggregate, "logs reproduce the aggregate");

    let agg = again.aggregate.expect("at least one run completed");
    for (class, t) in &agg.class_mean_completion {
        println!("{class:<6} mean completion {t:>6.0}s");
    }
    if let Some(u) = agg.mean_mid_session_utilization {
        println!("mid-session utilization {u:.2}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
