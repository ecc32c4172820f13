//! CSV export and re-import.
//!
//! Both files open with a `#` line holding JSON metadata (crate version, RNG,
//! normal sampler and the resolved configuration). Floats are written in
//! Rust's shortest round-trip form so a re-import reproduces every value.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::qp::QpStatus;
use crate::sde::{TrajectoryRecord, NORMAL_SAMPLER, RNG_NAME};

use super::config::EnsembleConfig;
use super::ensemble::{ColumnLayout, Ensemble};
use super::HarnessError;

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

fn io_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// The thread count is left out so serial and parallel runs write the same bytes.
pub fn metadata_json(config: &EnsembleConfig) -> String {
    let mut config = serde_json::to_value(config).expect("config serialises");
    if let Some(map) = config.as_object_mut() {
        map.remove("threads");
    }
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_NAME,
        "normal_sampler": NORMAL_SAMPLER,
        "config": config,
    })
    .to_string()
}

pub fn trajectory_header(layout: &ColumnLayout) -> Vec<String> {
    let mut header = vec!["seed".to_string(), "t".to_string()];
    header.extend(layout.state_labels.iter().cloned());
    header.extend(layout.control_labels.iter().cloned());
    header.push("d".into());
    for i in 0..layout.n_barriers {
        for j in 0..layout.barrier_degree {
            header.push(format!("psi_{i}_{j}"));
        }
    }
    for j in 0..layout.lyapunov_degree {
        header.push(format!("chi_{j}"));
    }
    header.push("qp_status".into());
    header
}

fn writer_with_metadata(
    path: &Path,
    config: &EnsembleConfig,
) -> Result<BufWriter<File>, HarnessError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# {}", metadata_json(config)).map_err(|e| io_error(path, e))?;
    Ok(out)
}

pub fn write_trajectories(ensemble: &Ensemble, path: &Path) -> Result<(), HarnessError> {
    let out = writer_with_metadata(path, &ensemble.config)?;
    let mut csv = csv::Writer::from_writer(out);
    let err = |e: csv::Error| io_error(path, e);
    csv.write_record(trajectory_header(&ensemble.layout))
        .map_err(err)?;
    let mut row: Vec<String> = Vec::new();
    for record in &ensemble.records {
        for k in 0..record.len() {
            row.clear();
            row.push(record.seed.to_string());
            row.push(fmt_f64(record.times[k]));
            row.extend(record.states[k].iter().map(|v| fmt_f64(*v)));
            row.extend(record.controls[k].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(record.relaxations[k]));
            row.extend(record.psi_values[k].iter().flatten().map(|v| fmt_f64(*v)));
            row.extend(record.chi_values[k].iter().map(|v| fmt_f64(*v)));
            row.push(record.qp_status[k].as_str().to_string());
            csv.write_record(&row).map_err(err)?;
        }
    }
    csv.flush().map_err(|e| io_error(path, e))
}

pub fn write_summary(ensemble: &Ensemble, path: &Path) -> Result<(), HarnessError> {
    let mut out = writer_with_metadata(path, &ensemble.config)?;
    let s = &ensemble.stats;
    let scalars = [
        ("n_trajectories", s.n_trajectories.to_string()),
        ("n_safe", s.n_safe.to_string()),
        ("safety_rate", fmt_f64(s.safety_rate)),
        ("n_flagged", s.n_flagged.to_string()),
        ("n_clamped", s.n_clamped.to_string()),
        ("n_truncated", s.n_truncated.to_string()),
        ("min_barrier", fmt_f64(s.min_barrier)),
        (
            "mean_terminal_goal_distance",
            fmt_f64(s.mean_terminal_goal_distance),
        ),
    ];
    for (key, value) in scalars {
        writeln!(out, "# {key}={value}").map_err(|e| io_error(path, e))?;
    }
    let mut csv = csv::Writer::from_writer(out);
    let err = |e: csv::Error| io_error(path, e);
    let labels = &ensemble.layout.state_labels;
    let mut header = vec!["t".to_string(), "count".to_string()];
    header.extend(labels.iter().map(|l| format!("mean_{l}")));
    header.extend(labels.iter().map(|l| format!("std_{l}")));
    csv.write_record(&header).map_err(err)?;
    for k in 0..s.times.len() {
        let mut row = vec![fmt_f64(s.times[k]), s.count[k].to_string()];
        row.extend(s.state_mean[k].iter().map(|v| fmt_f64(*v)));
        row.extend(s.state_std[k].iter().map(|v| fmt_f64(*v)));
        csv.write_record(&row).map_err(err)?;
    }
    csv.flush().map_err(|e| io_error(path, e))
}

/// Writes `trajectories.csv` and `summary.csv` into `dir`, creating it.
pub fn export_csv(ensemble: &Ensemble, dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let trajectories = dir.join(TRAJECTORIES_FILE);
    let summary = dir.join(SUMMARY_FILE);
    write_trajectories(ensemble, &trajectories)?;
    write_summary(ensemble, &summary)?;
    Ok((trajectories, summary))
}

/// Records and configuration read back from a trajectories file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub metadata: serde_json::Value,
    pub config: EnsembleConfig,
    pub records: Vec<TrajectoryRecord>,
}

pub fn read_trajectories(path: &Path) -> Result<TrajectoryFile, HarnessError> {
    let bad = |msg: String| HarnessError::Io(format!("{}: {msg}", path.display()));
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| io_error(path, e))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| bad("missing metadata line".into()))?;
    let metadata: serde_json::Value =
        serde_json::from_str(json.trim_end()).map_err(|e| bad(e.to_string()))?;
    let config: EnsembleConfig = serde_json::from_value(metadata["config"].clone())
        .map_err(|e| bad(format!("metadata config: {e}")))?;
    let layout = ColumnLayout::for_config(&config);
    let expected = trajectory_header(&layout);

    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header != expected {
        return Err(bad(
            "header does not match the metadata configuration".into()
        ));
    }
    let n_x = layout.state_labels.len();
    let n_u = layout.control_labels.len();
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64, HarnessError> {
            row[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {line}, column {}: {e}", expected[i])))
        };
        let seed: u64 = row[0]
            .parse()
            .map_err(|e| bad(format!("row {line}, seed: {e}")))?;
        if records.last().is_none_or(|r| r.seed != seed) {
            records.push(TrajectoryRecord {
                seed,
                dt: config.dt,
                times: vec![],
                states: vec![],
                controls: vec![],
                relaxations: vec![],
                psi_values: vec![],
                chi_values: vec![],
                qp_status: vec![],
                truncated: false,
            });
        }
        let rec = records.last_mut().expect("pushed above");
        let mut col = 1;
        let mut take = |n: usize| -> Result<Vec<f64>, HarnessError> {
            let v = (col..col + n).map(&num).collect();
            col += n;
            v
        };
        rec.times.push(take(1)?[0]);
        rec.states.push(take(n_x)?);
        rec.controls.push(take(n_u)?);
        rec.relaxations.push(take(1)?[0]);
        let mut psi = Vec::with_capacity(layout.n_barriers);
        for _ in 0..layout.n_barriers {
            psi.push(take(layout.barrier_degree)?);
        }
        rec.psi_values.push(psi);
        rec.chi_values.push(take(layout.lyapunov_degree)?);
        let status = &row[expected.len() - 1];
        rec.qp_status.push(
            QpStatus::parse(status)
                .ok_or_else(|| bad(format!("row {line}: bad status {status:?}")))?,
        );
    }
    let samples = crate::sde::sample_count(config.horizon, config.dt);
    for r in &mut records {
        r.truncated = r.len() < samples;
    }
    Ok(TrajectoryFile {
        metadata,
        config,
        records,
    })
}
