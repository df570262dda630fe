use crate::error::{Error, Result};
use crate::signal::{fft_filter, FilterSpec, SampledSignal};

/// Minimum overlap kept after shifting, in seconds.
pub const MIN_OVERLAP_S: f64 = 30.0;
/// Correlation peaks below this are reported as unreliable.
pub const MIN_PEAK: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Alignment {
    /// Positive when ABP lags PPG: `abp[t] ~ ppg[t - lag]`.
    pub lag_samples: i64,
    pub lag_s: f64,
    /// Normalized cross-correlation at the chosen lag.
    pub peak: f64,
    pub ppg: SampledSignal,
    pub abp: SampledSignal,
    pub warning: Option<String>,
}

/// Pearson correlation of `x[t - lag]` against `y[t]` over their overlap,
/// for every integer lag in `-max_lag..=max_lag`.
pub fn lagged_correlation(x: &[f64], y: &[f64], max_lag: usize) -> Vec<(i64, f64)> {
    let n = x.len().min(y.len());
    let prefix = |v: &[f64], sq: bool| {
        let mut p = Vec::with_capacity(n + 1);
        p.push(0.0);
        let mut acc = 0.0;
        for &a in &v[..n] {
            acc += if sq { a * a } else { a };
            p.push(acc);
        }
        p
    };
    let (px, pxx, py, pyy) = (
        prefix(x, false),
        prefix(x, true),
        prefix(y, false),
        prefix(y, true),
    );
    let max_lag = max_lag.min(n.saturating_sub(2)) as i64;
    (-max_lag..=max_lag)
        .map(|lag| {
            // pairs (x[s], y[s + lag]) for s in xs..xs+len
            let (xs, ys) = if lag >= 0 {
                (0, lag as usize)
            } else {
                ((-lag) as usize, 0)
            };
            let len = n - lag.unsigned_abs() as usize;
            let m = len as f64;
            let sx = px[xs + len] - px[xs];
            let sy = py[ys + len] - py[ys];
            let sxx = pxx[xs + len] - pxx[xs] - sx * sx / m;
            let syy = pyy[ys + len] - pyy[ys] - sy * sy / m;
            let sxy: f64 = x[xs..xs + len]
                .iter()
                .zip(&y[ys..ys + len])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                - sx * sy / m;
            let denom = (sxx * syy).sqrt();
            (lag, if denom > 0.0 { sxy / denom } else { 0.0 })
        })
        .collect()
}

/// Finds the integer-sample lag between PPG and ABP that maximizes the
/// normalized cross-correlation of their 0.5-8 Hz band-passed copies, then
/// trims both raw signals to the overlapping region.
pub fn align(ppg: &SampledSignal, abp: &SampledSignal, max_lag_s: f64) -> Result<Alignment> {
    let fs = ppg.fs();
    if abp.fs() != fs {
        return Err(Error::InvalidSignal(format!(
            "PPG at {fs} Hz, ABP at {} Hz",
            abp.fs()
        )));
    }
    let n = ppg.len().min(abp.len());
    let max_lag = (max_lag_s * fs).round() as usize;
    if (n as f64) - (max_lag as f64) < MIN_OVERLAP_S * fs {
        return Err(Error::InsufficientData(format!(
            "alignment needs {MIN_OVERLAP_S} s of overlap at a {max_lag_s} s shift, record is {:.1} s",
            n as f64 / fs
        )));
    }
    let band = FilterSpec::band_pass(0.5, 8.0f64.min(0.45 * fs));
    let fp = fft_filter(&SampledSignal::new(ppg.samples()[..n].to_vec(), fs)?, &band)?;
    let fa = fft_filter(&SampledSignal::new(abp.samples()[..n].to_vec(), fs)?, &band)?;
    let corr = lagged_correlation(fp.samples(), fa.samples(), max_lag);
    // first maximum wins ties
    let (lag, peak) = corr
        .iter()
        .copied()
        .fold((0i64, f64::NEG_INFINITY), |best, c| {
            if c.1 > best.1 {
                c
            } else {
                best
            }
        });
    let warning = (peak < MIN_PEAK)
        .then(|| format!("alignment correlation peak {peak:.3} is below {MIN_PEAK}"));
    let len = n - lag.unsigned_abs() as usize;
    let (ps, as_) = if lag >= 0 {
        (0, lag as usize)
    } else {
        ((-lag) as usize, 0)
    };
    Ok(Alignment {
        lag_samples: lag,
        lag_s: lag as f64 / fs,
        peak,
        ppg: SampledSignal::new(ppg.samples()[ps..ps + len].to_vec(), fs)?,
        abp: SampledSignal::new(abp.samples()[as_..as_ + len].to_vec(), fs)?,
        warning,
    })
}
