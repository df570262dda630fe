//! Record ingestion, resampling, PPG/ABP alignment, synthetic subjects and
//! assembly of labeled window datasets.

mod align;
mod dataset_io;
mod record;
mod resample;
mod synth;

use serde::{Deserialize, Serialize};

pub use align::{align, lagged_correlation, Alignment, MIN_OVERLAP_S, MIN_PEAK};
pub use dataset_io::{read_dataset, write_dataset};
pub use record::{load_record, write_record, RecordMeta, SubjectRecord};
pub use resample::{resample, TARGET_FS};
pub use synth::{synthesize, SynthSpec};

use crate::error::{Error, Result};
use crate::signal::{
    extract_bp_labels, fft_filter, mean_var, normalize_window, split_windows, FilterSpec, STEP_S,
    WINDOW_S,
};

/// One standardized 8 s PPG window with its (SBP, DBP) label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub input: Vec<f64>,
    pub sbp: f64,
    pub dbp: f64,
    /// Window ordinal within the record, counting skipped windows, so
    /// `start_time == index * 2 s` and neighbourhoods stay meaningful.
    pub index: usize,
    pub start_time: f64,
}

/// Windows of one subject plus the ordinals of windows that were skipped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub windows: Vec<WindowSample>,
    pub skipped: Vec<usize>,
}

impl Dataset {
    pub fn total_windows(&self) -> usize {
        self.windows.len() + self.skipped.len()
    }

    /// (min, max) of SBP and of DBP labels.
    pub fn label_ranges(&self) -> Option<((f64, f64), (f64, f64))> {
        if self.windows.is_empty() {
            return None;
        }
        let range = |f: fn(&WindowSample) -> f64| {
            self.windows
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        Some((range(|w| w.sbp), range(|w| w.dbp)))
    }
}

/// Filters, windows, standardizes and labels an aligned record.
///
/// PPG is band-passed (0.1-8 Hz) and ABP low-passed (5 Hz) before
/// windowing. A window is skipped when its raw PPG is flat or its filtered
/// PPG has zero variance.
pub fn build_dataset(record: &SubjectRecord) -> Result<Dataset> {
    if record.ppg.fs() != record.abp.fs() || record.ppg.len() != record.abp.len() {
        return Err(Error::InvalidSignal(
            "record PPG and ABP are not aligned".into(),
        ));
    }
    let fs = record.fs();
    let ppg = fft_filter(&record.ppg, &FilterSpec::ppg())?;
    let abp = fft_filter(&record.abp, &FilterSpec::abp())?;
    let raw = split_windows(&record.ppg, WINDOW_S, STEP_S)?;
    let ppg_w = split_windows(&ppg, WINDOW_S, STEP_S)?;
    let abp_w = split_windows(&abp, WINDOW_S, STEP_S)?;
    let mut out = Dataset::default();
    for ((r, p), a) in raw.iter().zip(&ppg_w).zip(&abp_w) {
        let normalized = if is_flat(r.samples) {
            Err(Error::DegenerateWindow)
        } else {
            normalize_window(p.samples)
        };
        match normalized {
            Ok(input) => {
                let (sbp, dbp) = extract_bp_labels(a.samples)?;
                out.windows.push(WindowSample {
                    input,
                    sbp,
                    dbp,
                    index: p.ordinal,
                    start_time: p.ordinal as f64 * STEP_S,
                });
            }
            Err(Error::DegenerateWindow) => {
                log::warn!(
                    "{}: skipping flat window {} at {:.1} s",
                    record.id,
                    p.ordinal,
                    p.start as f64 / fs
                );
                out.skipped.push(p.ordinal);
            }
            Err(e) => return Err(e),
        }
    }
    if out.windows.is_empty() {
        return Err(Error::EmptyRecord(format!(
            "{}: all {} windows were degenerate",
            record.id,
            out.skipped.len()
        )));
    }
    Ok(out)
}

fn is_flat(raw: &[f64]) -> bool {
    let (_, var) = mean_var(raw);
    let scale = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    var <= (1e-12 * scale).powi(2)
}

/// What [`preprocess`] did besides producing windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub lag_s: f64,
    pub correlation_peak: f64,
    pub duration_s: f64,
    pub windows: usize,
    pub skipped: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Full conditioning chain: align at the native rate, resample to 20 Hz,
/// then [`build_dataset`].
pub fn preprocess(record: &SubjectRecord, max_lag_s: f64) -> Result<(Dataset, PreprocessReport)> {
    let aligned = align(&record.ppg, &record.abp, max_lag_s)?;
    let mut warnings = record.meta.warnings.clone();
    warnings.extend(aligned.warning.clone());
    let ppg = resample(&aligned.ppg, TARGET_FS)?;
    let abp = resample(&aligned.abp, TARGET_FS)?;
    let mut rec = SubjectRecord::new(record.id.clone(), ppg, abp, record.meta.source.clone())?;
    rec.meta.alignment_lag_s = Some(aligned.lag_s);
    rec.meta.warnings = warnings.clone();
    let dataset = build_dataset(&rec)?;
    if !dataset.skipped.is_empty() {
        warnings.push(format!(
            "{} degenerate window(s) skipped",
            dataset.skipped.len()
        ));
    }
    let report = PreprocessReport {
        lag_s: aligned.lag_s,
        correlation_peak: aligned.peak,
        duration_s: rec.duration(),
        windows: dataset.windows.len(),
        skipped: dataset.skipped.clone(),
        warnings,
    };
    Ok((dataset, report))
}

/// Convenience for tests and benches: a record already at 20 Hz.
pub fn record_at_target_rate(record: &SubjectRecord) -> Result<SubjectRecord> {
    let ppg = resample(&record.ppg, TARGET_FS)?;
    let abp = resample(&record.abp, TARGET_FS)?;
    SubjectRecord::new(record.id.clone(), ppg, abp, record.meta.source.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampledSignal;

    fn constant_record(duration: f64) -> SubjectRecord {
        let spec = SynthSpec {
            fs: 20.0,
            ..SynthSpec::constant(duration, 1.25, 120.0, 80.0)
        };
        synthesize(&spec).unwrap()
    }

    #[test]
    fn three_hundred_seconds_gives_147_windows() {
        let ds = build_dataset(&constant_record(300.0)).unwrap();
        assert_eq!(ds.windows.len(), 147);
        for (k, w) in ds.windows.iter().enumerate() {
            assert_eq!(w.input.len(), 160);
            assert_eq!(w.index, k);
            assert_eq!(w.start_time, 2.0 * k as f64);
            let (m, v) = mean_var(&w.input);
            assert!(m.abs() <= 1e-9 && (v - 1.0).abs() <= 1e-9);
            assert!(w.sbp >= w.dbp);
        }
    }

    #[test]
    fn constant_bp_systolic_label_is_exact() {
        // 1.25 Hz at 20 Hz is 16 samples per beat with the peak on a sample, and
        // 64 s holds a whole number of beats, so the 5 Hz low-pass is exact.
        // The sampled trough is the smallest of the 16 sample phases of one beat.
        let spec = SynthSpec {
            fs: 20.0,
            ..SynthSpec::constant(64.0, 1.25, 120.0, 80.0)
        };
        let trough = (0..16)
            .map(|j| spec.abp_at(j as f64 / 20.0))
            .fold(f64::INFINITY, f64::min);
        assert!(trough >= 80.0);
        let ds = build_dataset(&constant_record(64.0)).unwrap();
        for w in &ds.windows {
            assert!((w.sbp - 120.0).abs() < 1e-9, "{}", w.sbp);
            assert!((w.dbp - trough).abs() < 1e-9, "{} vs {trough}", w.dbp);
        }
    }

    #[test]
    fn flat_span_is_skipped() {
        let mut rec = constant_record(60.0);
        let mut ppg = rec.ppg.samples().to_vec();
        // windows 10..=13 share samples with the flat span, only window 12 is entirely inside it
        for v in &mut ppg[480..640] {
            *v = 0.25;
        }
        rec.ppg = SampledSignal::new(ppg, 20.0).unwrap();
        let ds = build_dataset(&rec).unwrap();
        assert_eq!(ds.skipped, vec![12]);
        assert_eq!(ds.total_windows(), 27);
        assert!(ds.windows.iter().all(|w| w.index != 12));
    }

    #[test]
    fn fully_flat_record_is_empty() {
        let s = SampledSignal::new(vec![1.0; 400], 20.0).unwrap();
        let rec = SubjectRecord::new("flat", s.clone(), s, "t").unwrap();
        assert!(matches!(build_dataset(&rec), Err(Error::EmptyRecord(_))));
    }

    #[test]
    fn short_record_is_empty() {
        let s = SampledSignal::new(vec![1.0, 2.0, 1.0, 3.0], 20.0).unwrap();
        let rec = SubjectRecord::new("short", s.clone(), s, "t").unwrap();
        assert!(matches!(build_dataset(&rec), Err(Error::EmptyRecord(_))));
    }
}
