mod common;

use common::subjects::{alignment_trials, planted_pair};
use ppgbp::data::align;

#[test]
fn noiseless_lags_recovered_exactly() {
    for (planted, found) in alignment_trials(40, None) {
        assert_eq!(planted, found);
    }
}

#[test]
fn noisy_lags_within_one_sample() {
    for (planted, found) in alignment_trials(40, Some(10.0)) {
        assert!(
            (planted - found).abs() <= 1,
            "planted {planted}, found {found}"
        );
    }
}

#[test]
fn trimmed_signals_line_up() {
    let (ppg, abp) = planted_pair(3, 37, 50.0, 60.0, 100, None);
    let a = align(&ppg, &abp, 2.0).unwrap();
    assert_eq!(a.lag_samples, 37);
    assert_eq!(a.ppg.len(), a.abp.len());
    assert_eq!(a.ppg.len(), ppg.len() - 37);
    assert!(a.peak > 0.999);
    assert!(a.warning.is_none());
}
