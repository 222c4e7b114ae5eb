use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use swarmsim::choking::SeedAlgorithm;
use swarmsim::pieces::PiecePolicy;
use swarmsim::scenario::{build_preset, parse_config, report, run_batch, BatchResult, Overrides, Preset};

#[derive(Parser)]
#[command(name = "swarmsim", version, about = "Simulate BitTorrent swarms and derive choking metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file.
    Run(RunArgs),
    /// Inspect the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Rebuild summaries and the aggregate from stored run logs.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedAlgo {
    New,
    Old,
}

#[derive(Clone, Copy, ValueEnum)]
enum RarestOrder {
    Det,
    Rand,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["preset", "config"])))]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long, value_enum)]
    seed_algorithm: Option<SeedAlgo>,
    #[arg(long, value_enum)]
    rarest_order: Option<RarestOrder>,
    #[arg(long, value_enum)]
    tracker_ext: Option<Toggle>,
    /// Divide the content size by this factor.
    #[arg(long)]
    scale: Option<f64>,
    /// Output directory (default: out/<scenario name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_batch(res: &BatchResult, dir: &Path) {
    for s in &res.summaries {
        let sc = s.scalars();
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "run {:>3}  seed {:>6}  {}  end {:>8.1}s  optimal {:>8}  overhead {:>6}  utilization {:>6}",
            s.run,
            s.rng_seed,
            if s.complete { "complete  " } else { "INCOMPLETE" },
            s.end_time,
            fmt(sc.optimal_completion_time),
            fmt(sc.duplicate_overhead),
            fmt(sc.mean_utilization),
        );
    }
    if let Some(a) = &res.aggregate {
        for (class, t) in &a.class_mean_completion {
            let ci = a.class_mean_clustering.get(class).map_or("-".into(), |c| format!("{c:.3}"));
            println!("class {class:<10} mean completion {t:>8.1}s  clustering {ci}");
        }
    }
    println!("wrote {}", dir.display());
}

fn run(cli: Cli) -> swarmsim::Result<()> {
    match cli.command {
        Command::Presets {
            action: PresetAction::List,
        } => {
            for p in Preset::ALL {
                println!("{:<16} {}", p.name(), p.description());
            }
            Ok(())
        }
        Command::Report { dir } => {
            let res = report(&dir)?;
            print_batch(&res, &dir);
            Ok(())
        }
        Command::Run(args) => {
            let base = match (&args.preset, &args.config) {
                (Some(name), _) => build_preset(name)?,
                (None, Some(path)) => parse_config(&std::fs::read_to_string(path)?)?,
                (None, None) => unreachable!("clap enforces one source"),
            };
            let overrides = Overrides {
                runs: args.runs,
                rng_seed: args.rng_seed,
                seed_algorithm: args.seed_algorithm.map(|a| match a {
                    SeedAlgo::New => SeedAlgorithm::New,
                    SeedAlgo::Old => SeedAlgorithm::Old,
                }),
                rarest_order: args.rarest_order.map(|o| match o {
                    RarestOrder::Det => PiecePolicy::Deterministic,
                    RarestOrder::Rand => PiecePolicy::Randomized,
                }),
                tracker_extension: args.tracker_ext.map(|t| matches!(t, Toggle::On)),
                scale: args.scale,
            };
            let cfg = overrides.apply(base)?;
            let out = args
                .out
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.run.name));
            let res = run_batch(&cfg, Some(&out))?;
            print_batch(&res, &out);
            if !res.incomplete.is_empty() {
                eprintln!("warning: incomplete runs {:?}", res.incomplete);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swarmsim: {e}");
            ExitCode::FAILURE
        }
    }
}
