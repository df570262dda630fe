use ppgbp::data::{preprocess, synthesize, Dataset, SynthSpec};

/// Pressure drifting linearly 105->135 / 65->85 mmHg with the heart rate
/// rising 1.0->1.5 Hz, PPG at 20 dB SNR.
pub fn drifting(duration_s: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        id: format!("drift-{seed}"),
        heart_rate_hz: vec![1.0, 1.5],
        sbp_mmhg: vec![105.0, 135.0],
        dbp_mmhg: vec![65.0, 85.0],
        snr_db: Some(20.0),
        seed,
        ..SynthSpec::constant(duration_s, 1.0, 120.0, 80.0)
    }
}

pub fn dataset(spec: &SynthSpec) -> Dataset {
    let record = synthesize(spec).expect("synthesize");
    preprocess(&record, 2.0).expect("preprocess").0
}

/// Mean absolute deviation of each label from the mean of the labels in its
/// training set (indices farther than `radius` from every test index).
pub fn mean_baseline_mae(dataset: &Dataset, folds: &[ppgbp::eval::Fold]) -> (f64, f64) {
    let label = |i: usize| {
        let w = dataset.windows.iter().find(|w| w.index == i).unwrap();
        (w.sbp, w.dbp)
    };
    let (mut s, mut d, mut n) = (0.0, 0.0, 0.0);
    for fold in folds {
        let m = fold.train.len() as f64;
        let ms = fold.train.iter().map(|&i| label(i).0).sum::<f64>() / m;
        let md = fold.train.iter().map(|&i| label(i).1).sum::<f64>() / m;
        for &i in &fold.test {
            s += (label(i).0 - ms).abs();
            d += (label(i).1 - md).abs();
            n += 1.0;
        }
    }
    (s / n, d / n)
}

/// A record-like pair with a planted integer lag: `abp[t] = ppg[t - lag]`
/// before noise. The base waveform is synthetic ABP with a wandering heart
/// rate, so beats are not exactly periodic. Noise, when requested, is added
/// to the PPG copy at the given SNR.
pub fn planted_pair(
    seed: u64,
    lag: i64,
    fs: f64,
    duration_s: f64,
    margin: usize,
    snr_db: Option<f64>,
) -> (ppgbp::signal::SampledSignal, ppgbp::signal::SampledSignal) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * fs).round() as usize;
    let total = n + 2 * margin;
    let spec = SynthSpec {
        fs,
        heart_rate_hz: (0..8).map(|_| rng.random_range(0.9..1.6)).collect(),
        sbp_mmhg: (0..4).map(|_| rng.random_range(110.0..140.0)).collect(),
        dbp_mmhg: (0..4).map(|_| rng.random_range(60.0..85.0)).collect(),
        ..SynthSpec::constant(total as f64 / fs, 1.0, 120.0, 80.0)
    };
    let base = synthesize(&spec).expect("synthesize").abp.into_samples();
    let m = margin as i64;
    let mut ppg: Vec<f64> = (0..n).map(|t| base[(t as i64 + m) as usize]).collect();
    let abp: Vec<f64> = (0..n)
        .map(|t| base[(t as i64 + m - lag) as usize])
        .collect();
    if let Some(snr) = snr_db {
        let (_, power) = ppgbp::signal::mean_var(&ppg);
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        let normal = Normal::new(0.0, sigma).unwrap();
        ppg.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    (
        ppgbp::signal::SampledSignal::new(ppg, fs).unwrap(),
        ppgbp::signal::SampledSignal::new(abp, fs).unwrap(),
    )
}

/// Runs `trials` planted-lag alignments at 50 Hz (60 s overlap, lags drawn
/// uniformly from [-2 s, 2 s]) and returns `(planted, recovered)` pairs.
pub fn alignment_trials(trials: u64, snr_db: Option<f64>) -> Vec<(i64, i64)> {
    use rand::{Rng, SeedableRng};
    let fs = 50.0;
    let max_lag = 100;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xA11C);
    (0..trials)
        .map(|trial| {
            let lag = rng.random_range(-max_lag..=max_lag);
            let (ppg, abp) = planted_pair(1000 + trial, lag, fs, 60.0, max_lag as usize, snr_db);
            let found = ppgbp::data::align(&ppg, &abp, 2.0)
                .expect("align")
                .lag_samples;
            (lag, found)
        })
        .collect()
}
