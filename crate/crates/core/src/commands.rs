//! The pipeline as commands: each reads its inputs, writes its artifacts and
//! returns an exit status plus a human-readable summary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{
    load_record, preprocess, read_dataset, synthesize, write_dataset, write_record, Dataset,
    SynthSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    read_records, run_folds, write_bland_altman, write_histogram, write_records, write_text,
    MetricsReport,
};
use crate::exec::with_jobs;
use crate::train::{train_subject, TrainOptions};

/// Fraction of failed folds above which evaluation counts as an error.
pub const MAX_FOLD_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    /// Finished with warnings, skipped windows or a few failed folds.
    Partial,
    /// Bad input or configuration, or too many failed folds.
    Error,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Partial => 1,
            ExitStatus::Error => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandReport {
    pub status: ExitStatus,
    pub summary: String,
}

impl CommandReport {
    fn new(clean: bool, summary: String) -> Self {
        let status = if clean {
            ExitStatus::Success
        } else {
            ExitStatus::Partial
        };
        Self { status, summary }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_config(config: &RunConfig, dir: &Path) -> Result<()> {
    write_text(&dir.join("config.toml"), &config.to_toml())
}

fn dataset_summary(ds: &Dataset, out: &mut String) {
    let _ = writeln!(
        out,
        "windows: {} ({} skipped)",
        ds.windows.len(),
        ds.skipped.len()
    );
    if let Some(((s_lo, s_hi), (d_lo, d_hi))) = ds.label_ranges() {
        let _ = writeln!(out, "SBP range: {s_lo:.2}..{s_hi:.2} mmHg");
        let _ = writeln!(out, "DBP range: {d_lo:.2}..{d_hi:.2} mmHg");
    }
}

/// Synthesizes a subject from a spec file and writes it as a record CSV.
pub fn cmd_synth(spec_path: &Path, out_path: &Path) -> Result<CommandReport> {
    let spec = SynthSpec::load(spec_path)?;
    let record = synthesize(&spec)?;
    write_record(&record, out_path)?;
    let mut summary = format!(
        "wrote {} ({:.1} s at {} Hz)\n",
        out_path.display(),
        record.duration(),
        record.fs()
    );
    match preprocess(&record, 0.0) {
        Ok((ds, _)) => dataset_summary(&ds, &mut summary),
        Err(e) => {
            let _ = writeln!(summary, "windows: none ({e})");
        }
    }
    Ok(CommandReport::new(true, summary))
}

/// Sibling file holding the resolved config of a single-file output.
pub fn config_path_for(out_path: &Path) -> PathBuf {
    let mut name = out_path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    out_path.with_file_name(name)
}

/// Load, align, resample and window a record; writes the dataset CSV.
pub fn cmd_preprocess(
    record_path: &Path,
    out_path: &Path,
    config: &RunConfig,
) -> Result<CommandReport> {
    let record = load_record(record_path)?;
    let (ds, report) = preprocess(&record, config.max_lag_s)?;
    write_dataset(&ds, out_path)?;
    write_text(&config_path_for(out_path), &config.to_toml())?;
    let mut summary = format!(
        "wrote {} ({:.1} s after alignment, lag {:+.3} s, correlation {:.3})\n",
        out_path.display(),
        report.duration_s,
        report.lag_s,
        report.correlation_peak
    );
    dataset_summary(&ds, &mut summary);
    for w in &report.warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    Ok(CommandReport::new(report.warnings.is_empty(), summary))
}

/// Trains on the whole dataset, or on one fold when `exclude` names a test
/// window (its exclusion-radius neighbours are held out too).
pub fn cmd_train(
    dataset_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
    exclude: Option<usize>,
) -> Result<CommandReport> {
    config.validate()?;
    let ds = read_dataset(dataset_path)?;
    let excluded: BTreeSet<usize> = match exclude {
        Some(i) => {
            if !ds.windows.iter().any(|w| w.index == i) {
                return Err(Error::Config(format!("--exclude {i}: no such window")));
            }
            let r = config.exclusion_radius;
            ds.windows
                .iter()
                .map(|w| w.index)
                .filter(|j| j.abs_diff(i) <= r)
                .collect()
        }
        None => BTreeSet::new(),
    };
    let train = config.train();
    let opts = TrainOptions {
        scaler: None,
        probe: None,
        exec: config.execution,
    };
    let outcome = with_jobs(config.jobs, || {
        train_subject(&ds.windows, &excluded, &config.hyper(), &train, opts)
    })?;

    create_dir(out_dir)?;
    write_config(config, out_dir)?;
    let ck = Checkpoint {
        params: outcome.params,
        seed: config.seed,
        scaler: Some(outcome.scaler),
        adam: Some(outcome.adam),
    };
    ck.save(&out_dir.join("model.ckpt"))?;
    let mut log = String::new();
    for record in &outcome.log {
        log.push_str(&serde_json::to_string(record).expect("log line serializes"));
        log.push('\n');
    }
    write_text(&out_dir.join("train_log.jsonl"), &log)?;

    let last = outcome.log.last().map(|r| r.loss).unwrap_or(f64::NAN);
    let summary = format!(
        "trained on {} windows for {} epochs, final loss {last:.6}\nwrote {}\n",
        ds.windows.len() - excluded.len(),
        outcome.log.len(),
        out_dir.display()
    );
    Ok(CommandReport::new(true, summary))
}

/// Cross-validated evaluation; writes records, metrics, Bland-Altman and
/// histogram CSVs, per-fold checkpoints (network model) and the config.
pub fn cmd_evaluate(
    dataset_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<CommandReport> {
    config.validate()?;
    let ds = read_dataset(dataset_path)?;
    let eval = config.eval();
    let outcome = with_jobs(config.jobs, || run_folds(&ds.windows, &eval, None))?;

    create_dir(out_dir)?;
    write_config(config, out_dir)?;
    write_records(&outcome.records, &out_dir.join("records.csv"))?;
    write_text(
        &out_dir.join("folds.json"),
        &(serde_json::to_string_pretty(&serde_json::json!({
            "folds": outcome.folds,
            "failures": outcome.failures,
        }))
        .expect("fold summary serializes")
            + "\n"),
    )?;
    if !outcome.models.is_empty() {
        let dir = out_dir.join("checkpoints");
        create_dir(&dir)?;
        for m in &outcome.models {
            let ck = Checkpoint {
                params: m.outcome.params.clone(),
                seed: crate::eval::fold_seed(config.seed, m.fold),
                scaler: Some(m.outcome.scaler),
                adam: None,
            };
            ck.save(&dir.join(format!("fold_{:04}.ckpt", m.fold)))?;
        }
    }

    let mut summary = format!(
        "folds: {} ({} failed)\n",
        outcome.folds,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        let _ = writeln!(
            summary,
            "fold {} (windows {:?}) failed: {}",
            f.fold, f.test, f.error
        );
    }
    let Some(report) = outcome.report else {
        let _ = writeln!(summary, "too few predictions for metrics");
        return Ok(CommandReport {
            status: ExitStatus::Error,
            summary,
        });
    };
    write_report(&report, out_dir)?;
    write_bland_altman(
        &outcome.records,
        &out_dir.join("bland_altman.csv"),
        &out_dir.join("bland_altman_limits.csv"),
    )?;
    write_histogram(&outcome.records, &out_dir.join("error_histogram.csv"))?;
    summary.push_str(&report.to_string());

    let status = if outcome.failure_rate() > MAX_FOLD_FAILURE_RATE {
        ExitStatus::Error
    } else if outcome.failures.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::Partial
    };
    Ok(CommandReport { status, summary })
}

fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    write_text(&dir.join("metrics.txt"), &report.to_string())?;
    write_text(&dir.join("metrics.json"), &report.to_json())
}

/// Grades an externally produced records CSV; writes the reports when `out_dir` is given.
pub fn cmd_grade(records_path: &Path, out_dir: Option<&Path>) -> Result<CommandReport> {
    let records = read_records(records_path)?;
    let report = MetricsReport::from_records(&records)?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_report(&report, dir)?;
    }
    Ok(CommandReport::new(true, report.to_string()))
}
