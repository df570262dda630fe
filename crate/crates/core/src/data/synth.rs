//! Seeded synthetic subjects standing in for hospital recordings.
//!
//! ABP is `DBP(t) + (SBP(t) - DBP(t)) * p(phase(t))` where `p` is a fixed
//! band-limited pulse scaled to `[0, 1]` and `phase` integrates the heart
//! rate trajectory. PPG is the ABP seen through a saturating
//! pressure-to-volume curve, delayed, smoothed by a one-pole low-pass and
//! corrupted with Gaussian noise. Because the volume curve saturates, the
//! normalized PPG shape changes with the absolute pressure level.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::record::SubjectRecord;
use crate::error::{Error, Result};
use crate::signal::{mean_var, window_count, SampledSignal};

const HARMONICS: usize = 3;
const VOLUME_P0: f64 = 40.0;
const VOLUME_SCALE: f64 = 35.0;
const PPG_TAU_S: f64 = 0.05;

/// Generator settings. Trajectories are piecewise-linear with knots spread
/// evenly over `[0, duration_s]`; a single knot means a constant value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_id")]
    pub id: String,
    pub duration_s: f64,
    #[serde(default = "default_fs")]
    pub fs: f64,
    pub heart_rate_hz: Vec<f64>,
    pub sbp_mmhg: Vec<f64>,
    pub dbp_mmhg: Vec<f64>,
    /// Delay of the PPG pulse behind the pressure pulse.
    #[serde(default = "default_lag")]
    pub ppg_lag_s: f64,
    /// PPG signal-to-noise ratio; absent means noiseless.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_id() -> String {
    "synthetic".into()
}

fn default_fs() -> f64 {
    125.0
}

fn default_lag() -> f64 {
    0.2
}

impl SynthSpec {
    pub fn constant(duration_s: f64, heart_rate_hz: f64, sbp: f64, dbp: f64) -> Self {
        Self {
            id: default_id(),
            duration_s,
            fs: default_fs(),
            heart_rate_hz: vec![heart_rate_hz],
            sbp_mmhg: vec![sbp],
            dbp_mmhg: vec![dbp],
            ppg_lag_s: default_lag(),
            snr_db: None,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synth spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        for (name, knots) in [
            ("heart_rate_hz", &self.heart_rate_hz),
            ("sbp_mmhg", &self.sbp_mmhg),
            ("dbp_mmhg", &self.dbp_mmhg),
        ] {
            if knots.is_empty() || knots.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} needs at least one finite knot"));
            }
        }
        if self.heart_rate_hz.iter().any(|h| !(0.5..=3.5).contains(h)) {
            return bad("heart rate must stay within [0.5, 3.5] Hz".into());
        }
        // SBP - DBP is linear between the union of knot times, so checking there suffices.
        let mut times: Vec<f64> = [&self.sbp_mmhg, &self.dbp_mmhg]
            .iter()
            .flat_map(|k| knot_times(k.len(), self.duration_s))
            .collect();
        times.sort_by(f64::total_cmp);
        if times.iter().any(|&t| self.sbp(t) <= self.dbp(t)) {
            return bad("SBP must exceed DBP at all times".into());
        }
        if !(self.ppg_lag_s.is_finite() && self.ppg_lag_s.abs() < self.duration_s) {
            return bad("ppg_lag_s must be finite and shorter than the record".into());
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return bad("snr_db is NaN".into());
            }
        }
        Ok(())
    }

    pub fn sbp(&self, t: f64) -> f64 {
        interp(&self.sbp_mmhg, self.duration_s, t)
    }

    pub fn dbp(&self, t: f64) -> f64 {
        interp(&self.dbp_mmhg, self.duration_s, t)
    }

    pub fn heart_rate(&self, t: f64) -> f64 {
        interp(&self.heart_rate_hz, self.duration_s, t)
    }

    /// Number of beats elapsed at time `t` (exact integral of the heart rate).
    pub fn phase(&self, t: f64) -> f64 {
        let knots = &self.heart_rate_hz;
        if t <= 0.0 || knots.len() == 1 {
            return knots[0] * t;
        }
        let times = knot_times(knots.len(), self.duration_s);
        let mut acc = 0.0;
        for i in 0..knots.len() - 1 {
            let (t0, t1) = (times[i], times[i + 1]);
            if t <= t1 {
                let v = self.heart_rate(t);
                return acc + 0.5 * (knots[i] + v) * (t - t0);
            }
            acc += 0.5 * (knots[i] + knots[i + 1]) * (t1 - t0);
        }
        acc + knots[knots.len() - 1] * (t - self.duration_s)
    }

    /// Arterial pressure at time `t`, in mmHg.
    pub fn abp_at(&self, t: f64) -> f64 {
        let (sbp, dbp) = (self.sbp(t), self.dbp(t));
        dbp + (sbp - dbp) * pulse().value(self.phase(t))
    }

    fn sample_count(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    /// Generator ground truth for each window: the highest programmed SBP at
    /// any beat peak inside the window and the lowest programmed DBP at any
    /// beat trough inside it.
    pub fn window_labels(&self, fs: f64, window_s: f64, step_s: f64) -> Vec<(f64, f64)> {
        let n = (self.duration_s * fs).round() as usize;
        let shape = pulse();
        (0..window_count(n, fs, window_s, step_s))
            .map(|k| {
                let start = (k as f64 * step_s * fs).round() / fs;
                let end = start + window_s;
                let peaks = self.event_times(shape.peak_u, start, end);
                let troughs = self.event_times(shape.trough_u, start, end);
                let sbp = peaks
                    .iter()
                    .map(|&t| self.sbp(t))
                    .fold(f64::NEG_INFINITY, f64::max);
                let dbp = troughs
                    .iter()
                    .map(|&t| self.dbp(t))
                    .fold(f64::INFINITY, f64::min);
                (sbp, dbp)
            })
            .collect()
    }

    /// Times in `[start, end)` where the beat phase has fractional part `u`.
    fn event_times(&self, u: f64, start: f64, end: f64) -> Vec<f64> {
        let first = (self.phase(start) - u).ceil() as i64;
        let last = (self.phase(end) - u).ceil() as i64;
        (first..last)
            .map(|beat| self.invert_phase(beat as f64 + u, start, end))
            .collect()
    }

    fn invert_phase(&self, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.phase(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn knot_times(count: usize, duration: f64) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| duration * i as f64 / (count - 1) as f64)
        .collect()
}

fn interp(knots: &[f64], duration: f64, t: f64) -> f64 {
    if knots.len() == 1 || t <= 0.0 {
        return knots[0];
    }
    if t >= duration {
        return knots[knots.len() - 1];
    }
    let pos = t / duration * (knots.len() - 1) as f64;
    let i = (pos.floor() as usize).min(knots.len() - 2);
    let frac = pos - i as f64;
    knots[i] + (knots[i + 1] - knots[i]) * frac
}

/// Band-limited pulse template scaled to `[0, 1]`.
struct PulseShape {
    cos: [f64; HARMONICS],
    sin: [f64; HARMONICS],
    offset: f64,
    scale: f64,
    /// Template phase of the systolic peak; `value` is shifted so the peak sits at phase 0.
    shift: f64,
    peak_u: f64,
    trough_u: f64,
}

impl PulseShape {
    fn build() -> Self {
        // systolic wave plus a smaller reflected wave, truncated to a few harmonics
        let template = |u: f64| {
            (-1..=1)
                .map(|s| {
                    let v = u + s as f64;
                    (-(v - 0.2).powi(2) / (2.0 * 0.06f64.powi(2))).exp()
                        + 0.4 * (-(v - 0.5).powi(2) / (2.0 * 0.08f64.powi(2))).exp()
                })
                .sum::<f64>()
        };
        let grid = 4096;
        let mut cos = [0.0; HARMONICS];
        let mut sin = [0.0; HARMONICS];
        for i in 0..grid {
            let u = i as f64 / grid as f64;
            let g = template(u);
            for k in 0..HARMONICS {
                let w = 2.0 * PI * (k + 1) as f64 * u;
                cos[k] += 2.0 * g * w.cos() / grid as f64;
                sin[k] += 2.0 * g * w.sin() / grid as f64;
            }
        }
        let mut shape = Self {
            cos,
            sin,
            offset: 0.0,
            scale: 1.0,
            shift: 0.0,
            peak_u: 0.0,
            trough_u: 0.0,
        };
        let (peak_u, max) = shape.extremum(|a, b| a > b);
        let (trough_u, min) = shape.extremum(|a, b| a < b);
        shape.offset = min;
        shape.scale = 1.0 / (max - min);
        shape.shift = peak_u;
        shape.peak_u = 0.0;
        shape.trough_u = (trough_u - peak_u).rem_euclid(1.0);
        shape
    }

    fn raw(&self, u: f64) -> f64 {
        (0..HARMONICS)
            .map(|k| {
                let w = 2.0 * PI * (k + 1) as f64 * u;
                self.cos[k] * w.cos() + self.sin[k] * w.sin()
            })
            .sum()
    }

    /// Dense scan followed by golden-section refinement.
    fn extremum(&self, better: impl Fn(f64, f64) -> bool) -> (f64, f64) {
        let n = 20_000;
        let mut best = (0.0, self.raw(0.0));
        for i in 1..n {
            let u = i as f64 / n as f64;
            let v = self.raw(u);
            if better(v, best.1) {
                best = (u, v);
            }
        }
        let (mut a, mut b) = (best.0 - 1.0 / n as f64, best.0 + 1.0 / n as f64);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if better(self.raw(c), self.raw(d)) {
                b = d;
            } else {
                a = c;
            }
        }
        let u = 0.5 * (a + b);
        (u.rem_euclid(1.0), self.raw(u))
    }

    fn value(&self, phase: f64) -> f64 {
        ((self.raw((phase + self.shift).rem_euclid(1.0)) - self.offset) * self.scale)
            .clamp(0.0, 1.0)
    }
}

fn pulse() -> &'static PulseShape {
    static SHAPE: OnceLock<PulseShape> = OnceLock::new();
    SHAPE.get_or_init(PulseShape::build)
}

fn pressure_to_volume(p: f64) -> f64 {
    1.0 - (-(p - VOLUME_P0) / VOLUME_SCALE).exp()
}

/// Generates a subject record from a validated spec.
pub fn synthesize(spec: &SynthSpec) -> Result<SubjectRecord> {
    spec.validate()?;
    let n = spec.sample_count();
    if n < 2 {
        return Err(Error::Config(
            "synthetic record would have fewer than 2 samples".into(),
        ));
    }
    let fs = spec.fs;
    let abp: Vec<f64> = (0..n).map(|i| spec.abp_at(i as f64 / fs)).collect();
    let alpha = 1.0 - (-1.0 / (fs * PPG_TAU_S)).exp();
    let mut ppg = Vec::with_capacity(n);
    let mut state = pressure_to_volume(spec.abp_at(-spec.ppg_lag_s));
    for i in 0..n {
        let v = pressure_to_volume(spec.abp_at(i as f64 / fs - spec.ppg_lag_s));
        state += alpha * (v - state);
        ppg.push(state);
    }
    if let Some(snr) = spec.snr_db.filter(|s| s.is_finite()) {
        let (_, power) = mean_var(&ppg);
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in &mut ppg {
            *v += normal.sample(&mut rng);
        }
    }
    SubjectRecord::new(
        spec.id.clone(),
        SampledSignal::new(ppg, fs)?,
        SampledSignal::new(abp, fs)?,
        "synthetic",
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_spans_unit_interval() {
        let p = pulse();
        assert!((p.value(p.peak_u) - 1.0).abs() < 1e-12);
        assert!(p.value(p.trough_u).abs() < 1e-12);
        assert_eq!(p.peak_u, 0.0);
        assert!(p.trough_u > 0.0 && p.trough_u < 1.0);
    }

    #[test]
    fn constant_trajectories() {
        let s = SynthSpec::constant(100.0, 1.2, 118.4, 76.2);
        assert_eq!(s.sbp(37.0), 118.4);
        assert!((s.phase(10.0) - 12.0).abs() < 1e-12);
        let labels = s.window_labels(20.0, 8.0, 2.0);
        assert_eq!(labels.len(), 47);
        assert!(labels.iter().all(|l| *l == (118.4, 76.2)));
    }

    #[test]
    fn piecewise_phase_is_exact_integral() {
        let s = SynthSpec {
            heart_rate_hz: vec![1.0, 2.0],
            ..SynthSpec::constant(10.0, 1.0, 120.0, 80.0)
        };
        // integral of 1 + t/10 over [0, 10] is 15
        assert!((s.phase(10.0) - 15.0).abs() < 1e-12);
        assert!((s.phase(5.0) - 6.25).abs() < 1e-12);
        assert!((s.phase(12.0) - 19.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let mut s = SynthSpec::constant(0.0, 1.2, 120.0, 80.0);
        assert!(synthesize(&s).is_err());
        s.duration_s = 10.0;
        s.dbp_mmhg = vec![130.0];
        assert!(s.validate().is_err());
        s.dbp_mmhg = vec![80.0];
        s.heart_rate_hz = vec![4.0];
        assert!(s.validate().is_err());
        assert!(SynthSpec::from_toml("duration_s = 10\nbogus = 1").is_err());
    }

    #[test]
    fn seeded_and_deterministic() {
        let mut s = SynthSpec::constant(40.0, 1.1, 120.0, 80.0);
        s.snr_db = Some(20.0);
        s.seed = 5;
        let a = synthesize(&s).unwrap();
        assert_eq!(a, synthesize(&s).unwrap());
        s.seed = 6;
        assert_ne!(a.ppg, synthesize(&s).unwrap().ppg);
    }

    #[test]
    fn toml_round_trip() {
        let mut s = SynthSpec::constant(40.0, 1.1, 120.0, 80.0);
        s.snr_db = Some(20.0);
        assert_eq!(SynthSpec::from_toml(&s.to_toml()).unwrap(), s);
    }
}
