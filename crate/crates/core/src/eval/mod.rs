//! Cross-validated evaluation (leave-one-window-out or block k-fold), target
//! scaling, accuracy metrics and exports.

mod export;
mod folds;
mod metrics;
mod scaler;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub(crate) use export::write_text;
pub use export::{
    bland_altman_export, error_histogram, read_records, write_bland_altman, write_histogram,
    write_records, BlandAltman, RECORDS_HEADER,
};
pub use folds::{build_folds, folds_for, Fold, FoldMode};
pub use metrics::{
    aami_check, aami_verdict, ae_stats, ae_stats_from_errors, bhs_from_errors, bhs_grade, me_sd,
    me_sd_from_errors, Aami, AeStats, Bhs, BhsGrade, EvalRecord, MeSd, MetricsReport, PerSignal,
    SignalMetrics, AAMI_MAX_ME, AAMI_MAX_SD, BHS_BANDS, BHS_TABLE,
};
pub use scaler::TargetScaler;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::net::HyperParams;
use crate::train::{
    predict, train_subject, AccessKind, AccessProbe, ProbeHandle, TrainConfig, TrainOptions,
    TrainOutcome,
};

/// What produces the held-out predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Train the CNN-LSTM network.
    #[default]
    Net,
    /// Return the true label.
    Oracle,
    /// Return the mean label of the fold's training windows.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub mode: FoldMode,
    /// Number of blocks for [`FoldMode::BlockKfold`].
    pub folds: usize,
    pub exclusion_radius: usize,
    /// Fit one target scaler on all windows instead of per fold.
    pub paper_faithful: bool,
    pub model: ModelKind,
    pub hp: HyperParams,
    pub train: TrainConfig,
    /// Parallel execution runs folds concurrently; each fold trains sequentially.
    pub exec: Execution,
    /// Keep every fold's trained network in the outcome.
    pub keep_models: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: FoldMode::Lowo,
            folds: 10,
            exclusion_radius: 3,
            paper_faithful: false,
            model: ModelKind::Net,
            hp: HyperParams::default(),
            train: TrainConfig::default(),
            exec: Execution::default(),
            keep_models: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub test: Vec<usize>,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: usize,
    pub test: Vec<usize>,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Held-out predictions sorted by window index.
    pub records: Vec<EvalRecord>,
    /// `None` when fewer than two records were produced.
    pub report: Option<MetricsReport>,
    pub folds: usize,
    pub failures: Vec<FoldFailure>,
    pub models: Vec<FoldModel>,
}

impl EvalOutcome {
    pub fn failure_rate(&self) -> f64 {
        if self.folds == 0 {
            0.0
        } else {
            self.failures.len() as f64 / self.folds as f64
        }
    }
}

/// Derives an independent seed for fold `fold` (SplitMix64 finalizer).
pub fn fold_seed(base: u64, fold: usize) -> u64 {
    let mut z = base
        ^ (fold as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Leave-one-window-out evaluation.
pub fn run_lowo(windows: &[WindowSample], config: &EvalConfig) -> Result<EvalOutcome> {
    run_folds(
        windows,
        &EvalConfig {
            mode: FoldMode::Lowo,
            ..config.clone()
        },
        None,
    )
}

/// Runs every fold and aggregates the held-out predictions. A failing fold is
/// recorded in [`EvalOutcome::failures`] and does not stop the others.
pub fn run_folds(
    windows: &[WindowSample],
    config: &EvalConfig,
    probe: Option<&AccessProbe>,
) -> Result<EvalOutcome> {
    let indices: Vec<usize> = windows.iter().map(|w| w.index).collect();
    if indices.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidSpec(
            "window indices must be strictly increasing".into(),
        ));
    }
    let folds = folds_for(&indices, config.mode, config.folds, config.exclusion_radius)?;
    let by_index: BTreeMap<usize, &WindowSample> = windows.iter().map(|w| (w.index, w)).collect();
    let global = if config.paper_faithful {
        Some(TargetScaler::fit(windows)?)
    } else {
        None
    };
    let inner = if config.exec.is_parallel() && folds.len() > 1 {
        Execution::Sequential
    } else {
        config.exec
    };

    let numbered: Vec<(usize, &Fold)> = folds.iter().enumerate().collect();
    let results = config.exec.map(&numbered, |&(k, fold)| {
        let handle = probe.map(|p| ProbeHandle { probe: p, fold: k });
        run_fold(
            k,
            fold,
            windows,
            &by_index,
            global.as_ref(),
            handle,
            inner,
            config,
        )
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut models = Vec::new();
    for ((k, fold), result) in numbered.into_iter().zip(results) {
        match result {
            Ok((recs, model)) => {
                records.extend(recs);
                if let Some(outcome) = model.filter(|_| config.keep_models) {
                    models.push(FoldModel {
                        fold: k,
                        test: fold.test.clone(),
                        outcome,
                    });
                }
            }
            Err(e) => {
                log::warn!("fold {k} (windows {:?}) failed: {e}", fold.test);
                failures.push(FoldFailure {
                    fold: k,
                    test: fold.test.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    records.sort_by_key(|r| r.index);
    let report = if records.len() >= 2 {
        Some(MetricsReport::from_records(&records)?)
    } else {
        None
    };
    Ok(EvalOutcome {
        records,
        report,
        folds: folds.len(),
        failures,
        models,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    k: usize,
    fold: &Fold,
    windows: &[WindowSample],
    by_index: &BTreeMap<usize, &WindowSample>,
    global: Option<&TargetScaler>,
    probe: Option<ProbeHandle<'_>>,
    exec: Execution,
    config: &EvalConfig,
) -> Result<(Vec<EvalRecord>, Option<TrainOutcome>)> {
    let touch = |i: usize, kind| {
        if let Some(p) = probe {
            p.touch(i, kind);
        }
    };
    let test: Vec<&WindowSample> = fold.test.iter().map(|i| by_index[i]).collect();
    let record = |w: &WindowSample, (est_sbp, est_dbp): (f64, f64)| -> Result<EvalRecord> {
        if !(est_sbp.is_finite() && est_dbp.is_finite()) {
            return Err(Error::NumericStep {
                layer: "prediction".into(),
                step: w.index,
            });
        }
        Ok(EvalRecord {
            index: w.index,
            target_sbp: w.sbp,
            target_dbp: w.dbp,
            est_sbp,
            est_dbp,
        })
    };
    match config.model {
        ModelKind::Oracle => {
            let recs = test
                .iter()
                .map(|w| {
                    touch(w.index, AccessKind::Predict);
                    record(w, (w.sbp, w.dbp))
                })
                .collect::<Result<_>>()?;
            Ok((recs, None))
        }
        ModelKind::Mean => {
            let train: Vec<&WindowSample> = fold.train.iter().map(|i| by_index[i]).collect();
            train.iter().for_each(|w| touch(w.index, AccessKind::Train));
            let n = train.len() as f64;
            let mean = (
                train.iter().map(|w| w.sbp).sum::<f64>() / n,
                train.iter().map(|w| w.dbp).sum::<f64>() / n,
            );
            let recs = test
                .iter()
                .map(|w| {
                    touch(w.index, AccessKind::Predict);
                    record(w, mean)
                })
                .collect::<Result<_>>()?;
            Ok((recs, None))
        }
        ModelKind::Net => {
            let allowed: BTreeSet<usize> = fold.train.iter().copied().collect();
            let exclude: BTreeSet<usize> = windows
                .iter()
                .map(|w| w.index)
                .filter(|i| !allowed.contains(i))
                .collect();
            let train = TrainConfig {
                seed: fold_seed(config.train.seed, k),
                ..config.train.clone()
            };
            let opts = TrainOptions {
                scaler: global,
                probe,
                exec,
            };
            let outcome = train_subject(windows, &exclude, &config.hp, &train, opts)?;
            let recs = test
                .iter()
                .map(|w| {
                    touch(w.index, AccessKind::Predict);
                    record(w, predict(&outcome.params, &outcome.scaler, &w.input)?)
                })
                .collect::<Result<_>>()?;
            Ok((recs, Some(outcome)))
        }
    }
}
