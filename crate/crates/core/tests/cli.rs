//! The binary's exit codes and outputs, and smoke runs of the examples.

use std::path::PathBuf;
use std::process::{Command, Output};

fn swarmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmsim")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn presets_list_names_every_preset() {
    let o = swarmsim(&["presets", "list"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    for name in ["three-class-200", "three-class-100", "three-class-20", "uniform"] {
        assert!(out.contains(name), "{name} missing from:\n{out}");
    }
}

#[test]
fn unknown_preset_is_a_diagnosed_failure() {
    let o = swarmsim(&["run", "--preset", "no-such-preset"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("swarmsim: "), "{}", stderr(&o));
}

#[test]
fn bad_config_is_a_diagnosed_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[content]\nsize_kb = 0\n").unwrap();
    let o = swarmsim(&["run", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("swarmsim: "), "{}", stderr(&o));

    std::fs::write(&path, "[content]\nsize_kb = \"lots\"\n").unwrap();
    let o = swarmsim(&["run", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());

    let o = swarmsim(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("swarmsim: "));
}

#[test]
fn run_then_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("uniform");
    let o = swarmsim(&[
        "run", "--preset", "uniform", "--runs", "2", "--scale", "32", "--rng-seed", "3",
        "--seed-algorithm", "old", "--rarest-order", "rand", "--tracker-ext", "on",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ran = String::from_utf8(o.stdout).unwrap();
    assert_eq!(ran.lines().filter(|l| l.starts_with("run ")).count(), 2);
    assert!(!ran.contains("INCOMPLETE"));
    assert!(std::fs::read_dir(&out).unwrap().count() > 2);

    let o = swarmsim(&["report", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reported = String::from_utf8(o.stdout).unwrap();
    let body = |s: &str| s.lines().filter(|l| !l.starts_with("wrote ")).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(body(&ran), body(&reported));
}

#[test]
fn report_of_a_missing_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = swarmsim(&["report", dir.path().join("nothing").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("swarmsim: "));
}

#[test]
fn conflicting_sources_are_rejected() {
    let o = swarmsim(&["run", "--preset", "uniform", "--config", "x.toml"]);
    assert!(!o.status.success());
    let o = swarmsim(&["run"]);
    assert!(!o.status.success());
}

/// Examples are built next to the test binaries by `cargo test`.
fn example(name: &str) -> PathBuf {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let path = deps.parent().unwrap().join("examples").join(name);
    assert!(path.exists(), "example binary {} not built", path.display());
    path
}

#[test]
fn examples_run() {
    let dir = tempfile::tempdir().unwrap();
    let custom = dir.path().join("custom");
    let cases: &[(&str, &[&str])] = &[
        ("choking_round", &[]),
        ("rarest_first", &[]),
        ("fluid_bandwidth", &[]),
        ("flash_crowd", &["32"]),
        ("underprovisioned_seed", &["32"]),
        ("seed_algorithms", &["32", "1"]),
        ("tracker_extension", &["32", "1"]),
        ("custom_config", &[custom.to_str().unwrap()]),
    ];
    for (name, args) in cases {
        let o = Command::new(example(name)).args(*args).output().unwrap();
        assert!(o.status.success(), "{name} failed:\n{}", stderr(&o));
        assert!(!o.stdout.is_empty(), "{name} printed nothing");
    }
}
