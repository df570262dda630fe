//! Waveform conditioning: brick-wall FFT filtering, sliding windows,
//! per-window standardization and BP label extraction.

mod fft;

pub use fft::{fft_filter, FilterKind, FilterSpec};
pub(crate) use fft::{forward_fft, inverse_fft_real};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard PPG window length in seconds.
pub const WINDOW_S: f64 = 8.0;
/// Standard window step in seconds (6 s overlap).
pub const STEP_S: f64 = 2.0;

/// A uniformly sampled real-valued waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    samples: Vec<f64>,
    fs: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidSignal("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// One window produced by [`split_windows`]: a view into the source samples.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub ordinal: usize,
    pub start: usize,
    pub samples: &'a [f64],
}

/// Number of whole windows that fit in `n` samples at `fs`.
pub fn window_count(n: usize, fs: f64, window_s: f64, step_s: f64) -> usize {
    let len = (window_s * fs).round() as usize;
    if n < len || len == 0 {
        return 0;
    }
    let duration = n as f64 / fs;
    // Tolerate float noise in (duration - window) / step landing just below an integer.
    let mut count = ((duration - window_s) / step_s + 1e-9).floor() as usize + 1;
    while count > 0 && window_start(count - 1, fs, step_s) + len > n {
        count -= 1;
    }
    count
}

fn window_start(k: usize, fs: f64, step_s: f64) -> usize {
    (k as f64 * step_s * fs).round() as usize
}

/// Splits a signal into overlapping windows of `window_s` seconds every `step_s` seconds.
/// Trailing samples that do not fill a window are dropped.
pub fn split_windows(
    signal: &SampledSignal,
    window_s: f64,
    step_s: f64,
) -> Result<Vec<Window<'_>>> {
    if !(window_s > 0.0 && step_s > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "window {window_s} s and step {step_s} s must be positive"
        )));
    }
    let fs = signal.fs();
    let len = (window_s * fs).round() as usize;
    let count = window_count(signal.len(), fs, window_s, step_s);
    if count == 0 {
        return Err(Error::EmptyRecord(format!(
            "{:.3} s of signal is shorter than one {window_s} s window",
            signal.duration()
        )));
    }
    Ok((0..count)
        .map(|k| {
            let start = window_start(k, fs, step_s);
            Window {
                ordinal: k,
                start,
                samples: &signal.samples()[start..start + len],
            }
        })
        .collect())
}

/// Population mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Standardizes a window to zero mean and unit population variance.
///
/// Windows whose spread is at rounding level relative to their magnitude
/// (a flatlined sensor) are rejected with [`Error::DegenerateWindow`].
pub fn normalize_window(slice: &[f64]) -> Result<Vec<f64>> {
    if slice.is_empty() {
        return Err(Error::EmptyInput("window has no samples".into()));
    }
    if slice.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSignal("non-finite sample in window".into()));
    }
    let (mean, var) = mean_var(slice);
    let scale = slice.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if var <= (1e-12 * scale).powi(2) {
        return Err(Error::DegenerateWindow);
    }
    let std = var.sqrt();
    let mut out: Vec<f64> = slice.iter().map(|x| (x - mean) / std).collect();
    // One refinement pass absorbs the rounding left by the first pass.
    let (m2, v2) = mean_var(&out);
    let s2 = v2.sqrt();
    for x in &mut out {
        *x = (*x - m2) / s2;
    }
    Ok(out)
}

/// Systolic (max) and diastolic (min) pressure of an ABP window.
pub fn extract_bp_labels(abp: &[f64]) -> Result<(f64, f64)> {
    if abp.is_empty() {
        return Err(Error::EmptyInput("ABP window has no samples".into()));
    }
    if abp.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSignal("non-finite ABP sample".into()));
    }
    let max = abp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = abp.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max, min))
}
