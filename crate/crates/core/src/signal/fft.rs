use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SampledSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    BandPass,
    LowPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
}

impl FilterSpec {
    pub fn band_pass(low_cut_hz: f64, high_cut_hz: f64) -> Self {
        Self {
            kind: FilterKind::BandPass,
            low_cut_hz,
            high_cut_hz,
        }
    }

    pub fn low_pass(cut_hz: f64) -> Self {
        Self {
            kind: FilterKind::LowPass,
            low_cut_hz: 0.0,
            high_cut_hz: cut_hz,
        }
    }

    /// PPG conditioning band.
    pub fn ppg() -> Self {
        Self::band_pass(0.1, 8.0)
    }

    /// ABP smoothing cut-off.
    pub fn abp() -> Self {
        Self::low_pass(5.0)
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        let (lo, hi) = (self.low_cut_hz, self.high_cut_hz);
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo {
            return Err(Error::InvalidSpec(format!(
                "need 0 <= low ({lo}) < high ({hi})"
            )));
        }
        if hi >= fs / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "cut-off {hi} Hz is at or above Nyquist ({} Hz)",
                fs / 2.0
            )));
        }
        Ok(())
    }

    fn keeps(&self, freq: f64) -> bool {
        match self.kind {
            FilterKind::BandPass => self.low_cut_hz <= freq && freq <= self.high_cut_hz,
            FilterKind::LowPass => freq <= self.high_cut_hz,
        }
    }
}

pub(crate) fn forward_fft(xs: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

/// Inverse transform keeping the real part, scaled by 1/N.
pub(crate) fn inverse_fft_real(mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
    let n = spectrum.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    spectrum.into_iter().map(|c| c.re * scale).collect()
}

/// Brick-wall frequency-domain filter.
///
/// Bin `k` sits at `|f| = min(k, N-k) * fs / N` and is kept iff that
/// frequency lies inside the pass band, boundaries inclusive. The rule is
/// symmetric in `k <-> N-k`, so the output spectrum stays conjugate
/// symmetric and the inverse is real.
pub fn fft_filter(signal: &SampledSignal, spec: &FilterSpec) -> Result<SampledSignal> {
    let fs = signal.fs();
    spec.validate(fs)?;
    let n = signal.len();
    if n < 2 {
        return Err(Error::InvalidSignal(
            "filtering needs at least 2 samples".into(),
        ));
    }
    let mut spectrum = forward_fft(signal.samples());
    for (k, bin) in spectrum.iter_mut().enumerate() {
        let freq = k.min(n - k) as f64 * fs / n as f64;
        if !spec.keeps(freq) {
            *bin = Complex::new(0.0, 0.0);
        }
    }
    SampledSignal::new(inverse_fft_real(spectrum), fs)
}
