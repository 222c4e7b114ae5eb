//! CSV and JSON files of a run directory.
//!
//! A run directory holds the derived files listed in [`RUN_FILES`] and a
//! `log/` subdirectory with the raw event log, from which `report` rebuilds
//! everything.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::compute::Matrix;
use super::summary::{AggregateReport, RunSummary};
use super::{
    EventLog, InterestInterval, LogMeta, MembershipInterval, PeerRecord, SeedPieceUpload, Transfer,
    UnchokeInterval,
};
use crate::{Error, PeerId, Result, Seconds};

pub const RUN_FILES: [&str; 8] = [
    "unchoke_matrix.csv",
    "bytes_matrix.csv",
    "clustering.csv",
    "availability.csv",
    "utilization.csv",
    "completions.csv",
    "seed_pieces.csv",
    "summary.json",
];

const LOG_DIR: &str = "log";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path.display().to_string(), e.to_string())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows_with_header<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_matrix(path: &Path, peers: &[PeerRecord], m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["peer".to_string()];
    header.extend(peers.iter().map(|p| p.id.to_string()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for p in peers {
        let mut row = vec![p.id.to_string()];
        row.extend(m.row(p.id).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CompletionRow {
    peer: PeerId,
    seconds: Seconds,
}

/// Writes the raw event log under `dir/log`.
pub fn write_log(dir: &Path, log: &EventLog) -> Result<()> {
    let d = dir.join(LOG_DIR);
    fs::create_dir_all(&d)?;
    write_json(&d.join("meta.json"), &log.meta)?;
    write_rows(&d.join("peers.csv"), &log.peers)?;
    write_rows(&d.join("unchokes.csv"), &log.unchoke_intervals)?;
    write_rows(&d.join("interest.csv"), &log.interest_intervals)?;
    write_rows(&d.join("membership.csv"), &log.membership_intervals)?;
    write_rows(&d.join("transfers.csv"), &log.transfers)?;
    write_rows(&d.join("seed_uploads.csv"), &log.seed_piece_uploads)?;
    write_rows(
        &d.join("completion_times.csv"),
        log.completions.iter().map(|(&peer, &seconds)| CompletionRow { peer, seconds }),
    )
}

fn read_csv_or_empty<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    // An empty table is written as a zero-byte file with no header.
    if fs::metadata(path)?.len() == 0 {
        return Ok(Vec::new());
    }
    read_rows(path)
}

/// Reads the event log stored under `dir/log`.
pub fn read_log(dir: &Path) -> Result<EventLog> {
    let d = dir.join(LOG_DIR);
    let meta: LogMeta = serde_json::from_str(&fs::read_to_string(d.join("meta.json"))?)?;
    let peers: Vec<PeerRecord> = read_csv_or_empty(&d.join("peers.csv"))?;
    let mut log = EventLog::new(meta, peers);
    log.unchoke_intervals = read_csv_or_empty::<UnchokeInterval>(&d.join("unchokes.csv"))?;
    log.interest_intervals = read_csv_or_empty::<InterestInterval>(&d.join("interest.csv"))?;
    log.membership_intervals = read_csv_or_empty::<MembershipInterval>(&d.join("membership.csv"))?;
    log.transfers = read_csv_or_empty::<Transfer>(&d.join("transfers.csv"))?;
    log.seed_piece_uploads = read_csv_or_empty::<SeedPieceUpload>(&d.join("seed_uploads.csv"))?;
    log.completions = read_csv_or_empty::<CompletionRow>(&d.join("completion_times.csv"))?
        .into_iter()
        .map(|r| (r.peer, r.seconds))
        .collect();
    if log.peers.iter().enumerate().any(|(i, p)| p.id.index() != i) {
        return Err(Error::parse(d.join("peers.csv").display().to_string(), "peer ids not contiguous from 1"));
    }
    Ok(log)
}

/// Writes the per-run metric files into `dir`.
pub fn write_run_files(dir: &Path, s: &RunSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("unchoke_matrix.csv"), &s.peers, &s.unchoke_matrix)?;
    write_matrix(&dir.join("bytes_matrix.csv"), &s.peers, &s.bytes_matrix)?;
    write_rows_with_header(
        &dir.join("clustering.csv"),
        &["peer", "class", "index"],
        s.clustering.iter().map(|(&p, &i)| (p, s.class_of(p), i)),
    )?;
    write_rows_with_header(&dir.join("availability.csv"), &["x", "y", "ratio"], &s.availability)?;
    write_rows_with_header(
        &dir.join("utilization.csv"),
        &["run", "minute", "ratio"],
        s.utilization.iter().map(|&(m, r)| (s.run, m, r)),
    )?;
    write_rows_with_header(
        &dir.join("completions.csv"),
        &["run", "peer", "class", "seconds"],
        s.completions.iter().map(|(&p, &t)| (s.run, p, s.class_of(p), t)),
    )?;
    write_rows(&dir.join("seed_pieces.csv"), &s.seed_pieces)?;
    write_rows_with_header(
        &dir.join("seed_service.csv"),
        &["peer", "seconds"],
        &s.seed_stats.service,
    )?;
    write_json(&dir.join("summary.json"), &s.scalars())
}

/// Writes the cross-run files into `dir`.
pub fn write_aggregate(dir: &Path, a: &AggregateReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("unchoke_matrix.csv"), &a.peers, &a.unchoke_matrix)?;
    write_matrix(&dir.join("bytes_matrix.csv"), &a.peers, &a.bytes_matrix)?;
    write_rows_with_header(
        &dir.join("clustering.csv"),
        &["peer", "class", "index"],
        a.clustering
            .iter()
            .map(|(&p, &i)| (p, a.peers[p.index()].class_label.as_str(), i)),
    )?;
    write_rows_with_header(&dir.join("utilization.csv"), &["run", "minute", "ratio"], &a.utilization)?;
    write_rows_with_header(
        &dir.join("completions.csv"),
        &["class", "seconds"],
        a.pooled_completions
            .iter()
            .flat_map(|(c, v)| v.iter().map(move |&t| (c.as_str(), t))),
    )?;
    #[derive(Serialize)]
    struct Scalars<'a> {
        runs: &'a [usize],
        excluded: &'a [usize],
        mean_optimal_completion_time: Option<Seconds>,
        mean_duplicate_overhead: Option<f64>,
        class_mean_completion: &'a std::collections::BTreeMap<String, Seconds>,
        class_mean_clustering: &'a std::collections::BTreeMap<String, f64>,
        mean_mid_session_utilization: Option<f64>,
    }
    write_json(
        &dir.join("summary.json"),
        &Scalars {
            runs: &a.runs,
            excluded: &a.excluded,
            mean_optimal_completion_time: a.mean_optimal_completion_time,
            mean_duplicate_overhead: a.mean_duplicate_overhead,
            class_mean_completion: &a.class_mean_completion,
            class_mean_clustering: &a.class_mean_clustering,
            mean_mid_session_utilization: a.mean_mid_session_utilization,
        },
    )
}
