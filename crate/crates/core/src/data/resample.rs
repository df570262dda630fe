use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::signal::{forward_fft, inverse_fft_real, SampledSignal};

/// Target rate of the pipeline.
pub const TARGET_FS: f64 = 20.0;

/// Down-samples by truncating the spectrum to the new Nyquist band.
///
/// The output has `round(N * target_fs / fs)` samples. Bins at or beyond the
/// new Nyquist frequency are discarded; a same-rate request returns the
/// input unchanged. Up-sampling is not supported.
pub fn resample(signal: &SampledSignal, target_fs: f64) -> Result<SampledSignal> {
    let fs = signal.fs();
    if !(target_fs.is_finite() && target_fs > 0.0) {
        return Err(Error::InvalidSpec(format!("target rate {target_fs} Hz")));
    }
    if target_fs > fs {
        return Err(Error::Unsupported(format!(
            "up-sampling from {fs} Hz to {target_fs} Hz"
        )));
    }
    if target_fs == fs {
        return Ok(signal.clone());
    }
    if fs / target_fs < 1.25 {
        log::warn!(
            "resampling ratio {:.3} is close to 1; spectral truncation removes little",
            fs / target_fs
        );
    }
    let n = signal.len();
    let m = ((n as f64) * target_fs / fs).round() as usize;
    if m == 0 {
        return Err(Error::EmptyRecord("resampled signal would be empty".into()));
    }
    let spectrum = forward_fft(signal.samples());
    let mut out = vec![Complex::new(0.0, 0.0); m];
    // keep |k| < m/2 (strictly below the new Nyquist)
    let keep = (m - 1) / 2;
    let scale = m as f64 / n as f64;
    out[0] = spectrum[0] * scale;
    for k in 1..=keep.min(n / 2) {
        out[k] = spectrum[k] * scale;
        out[m - k] = spectrum[n - k] * scale;
    }
    SampledSignal::new(inverse_fft_real(out), target_fs)
}
