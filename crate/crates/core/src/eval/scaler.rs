use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::net::Output;
use crate::signal::mean_var;

/// Standardizes (SBP, DBP) targets with statistics from a set of training windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean_sbp: f64,
    pub std_sbp: f64,
    pub mean_dbp: f64,
    pub std_dbp: f64,
}

impl TargetScaler {
    /// Population statistics of the given windows' labels. A label with no
    /// spread (below 1e-9 mmHg) gets unit scale so the transform stays invertible.
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a WindowSample>) -> Result<Self> {
        let (sbp, dbp): (Vec<f64>, Vec<f64>) = windows.into_iter().map(|w| (w.sbp, w.dbp)).unzip();
        if sbp.is_empty() {
            return Err(Error::InsufficientData(
                "no windows to fit target scaling".into(),
            ));
        }
        let (ms, vs) = mean_var(&sbp);
        let (md, vd) = mean_var(&dbp);
        let spread = |v: f64| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 };
        Ok(Self {
            mean_sbp: ms,
            std_sbp: spread(vs),
            mean_dbp: md,
            std_dbp: spread(vd),
        })
    }

    pub fn normalize(&self, sbp: f64, dbp: f64) -> Output {
        [
            (sbp - self.mean_sbp) / self.std_sbp,
            (dbp - self.mean_dbp) / self.std_dbp,
        ]
    }

    pub fn denormalize(&self, y: Output) -> (f64, f64) {
        (
            y[0] * self.std_sbp + self.mean_sbp,
            y[1] * self.std_dbp + self.mean_dbp,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn win(sbp: f64, dbp: f64) -> WindowSample {
        WindowSample {
            input: vec![],
            sbp,
            dbp,
            index: 0,
            start_time: 0.0,
        }
    }

    #[test]
    fn constant_labels_get_unit_scale() {
        let s = TargetScaler::fit(&[win(120.0, 80.0), win(120.0, 80.0)]).unwrap();
        assert_eq!((s.std_sbp, s.std_dbp), (1.0, 1.0));
        assert!(TargetScaler::fit(&[]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(labels in prop::collection::vec((80f64..200.0, 40f64..79.0), 2..30), q in (0f64..300.0, 0f64..300.0)) {
            let ws: Vec<WindowSample> = labels.iter().map(|&(s, d)| win(s, d)).collect();
            let sc = TargetScaler::fit(&ws).unwrap();
            prop_assert!(sc.std_sbp > 0.0 && sc.std_dbp > 0.0);
            let (s, d) = sc.denormalize(sc.normalize(q.0, q.1));
            prop_assert!((s - q.0).abs() <= 1e-9 && (d - q.1).abs() <= 1e-9);
        }
    }
}
