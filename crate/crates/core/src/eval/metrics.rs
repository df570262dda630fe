//! Absolute-error statistics, BHS grading and the AAMI criterion.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::mean_var;

/// One held-out prediction, in mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub target_sbp: f64,
    pub target_dbp: f64,
    pub est_sbp: f64,
    pub est_dbp: f64,
}

impl EvalRecord {
    /// Signed errors `estimate - target` for (SBP, DBP).
    pub fn errors(&self) -> (f64, f64) {
        (
            self.est_sbp - self.target_sbp,
            self.est_dbp - self.target_dbp,
        )
    }
}

/// A value per blood-pressure signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerSignal<T> {
    pub sbp: T,
    pub dbp: T,
}

impl<T> PerSignal<T> {
    fn try_from_errors(records: &[EvalRecord], f: impl Fn(&[f64]) -> Result<T>) -> Result<Self> {
        let (s, d): (Vec<f64>, Vec<f64>) = records.iter().map(EvalRecord::errors).unzip();
        Ok(Self {
            sbp: f(&s)?,
            dbp: f(&d)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeStats {
    pub mae: f64,
    pub sdae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeSd {
    pub me: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BhsGrade {
    A,
    B,
    C,
    #[serde(rename = "fail")]
    Fail,
}

impl fmt::Display for BhsGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            BhsGrade::A => "A",
            BhsGrade::B => "B",
            BhsGrade::C => "C",
            BhsGrade::Fail => "fail",
        })
    }
}

/// Error bands (mmHg) and the minimum cumulative percentages per grade.
pub const BHS_BANDS: [f64; 3] = [5.0, 10.0, 15.0];
pub const BHS_TABLE: [(BhsGrade, [u64; 3]); 3] = [
    (BhsGrade::A, [60, 85, 95]),
    (BhsGrade::B, [50, 75, 90]),
    (BhsGrade::C, [40, 65, 85]),
];
pub const AAMI_MAX_ME: f64 = 5.0;
pub const AAMI_MAX_SD: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bhs {
    /// Percentage of |error| within 5, 10 and 15 mmHg.
    pub within_pct: [f64; 3],
    pub grade: BhsGrade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aami {
    pub me: f64,
    pub sd: f64,
    pub pass: bool,
}

fn need(errors: &[f64], min: usize) -> Result<()> {
    match errors.len() {
        0 => Err(Error::EmptyInput("no evaluation records".into())),
        n if n < min => Err(Error::InsufficientData(format!(
            "{n} record(s), need at least {min}"
        ))),
        _ => Ok(()),
    }
}

/// Mean and population standard deviation of absolute errors.
pub fn ae_stats_from_errors(errors: &[f64]) -> Result<AeStats> {
    need(errors, 2)?;
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let (mae, var) = mean_var(&abs);
    Ok(AeStats {
        mae,
        sdae: var.sqrt(),
    })
}

/// Mean and population standard deviation of signed errors.
pub fn me_sd_from_errors(errors: &[f64]) -> Result<MeSd> {
    need(errors, 1)?;
    let (me, var) = mean_var(errors);
    Ok(MeSd { me, sd: var.sqrt() })
}

/// BHS grade: the best letter whose three minima are all met. Counts are
/// compared as integers (`100 * count >= pct * n`) so boundaries are exact.
pub fn bhs_from_errors(errors: &[f64]) -> Result<Bhs> {
    need(errors, 1)?;
    let n = errors.len() as u64;
    let counts = BHS_BANDS.map(|band| errors.iter().filter(|e| e.abs() <= band).count() as u64);
    let grade = BHS_TABLE
        .iter()
        .find(|(_, mins)| counts.iter().zip(mins).all(|(c, m)| 100 * c >= m * n))
        .map_or(BhsGrade::Fail, |(g, _)| *g);
    Ok(Bhs {
        within_pct: counts.map(|c| 100.0 * c as f64 / n as f64),
        grade,
    })
}

/// Pass iff `|ME| <= 5` and `SD <= 8` mmHg (equality passes).
pub fn aami_verdict(me: f64, sd: f64) -> Aami {
    Aami {
        me,
        sd,
        pass: me.abs() <= AAMI_MAX_ME && sd <= AAMI_MAX_SD,
    }
}

pub fn ae_stats(records: &[EvalRecord]) -> Result<PerSignal<AeStats>> {
    PerSignal::try_from_errors(records, ae_stats_from_errors)
}

pub fn me_sd(records: &[EvalRecord]) -> Result<PerSignal<MeSd>> {
    PerSignal::try_from_errors(records, me_sd_from_errors)
}

pub fn bhs_grade(records: &[EvalRecord]) -> Result<PerSignal<Bhs>> {
    PerSignal::try_from_errors(records, bhs_from_errors)
}

pub fn aami_check(records: &[EvalRecord]) -> Result<PerSignal<Aami>> {
    PerSignal::try_from_errors(records, |e| {
        me_sd_from_errors(e).map(|m| aami_verdict(m.me, m.sd))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMetrics {
    pub mae: f64,
    pub sdae: f64,
    pub me: f64,
    pub sd: f64,
    pub bhs_within_pct: [f64; 3],
    pub bhs_grade: BhsGrade,
    pub aami_pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub sbp: SignalMetrics,
    pub dbp: SignalMetrics,
}

impl MetricsReport {
    pub fn from_records(records: &[EvalRecord]) -> Result<Self> {
        let ae = ae_stats(records)?;
        let ms = me_sd(records)?;
        let bhs = bhs_grade(records)?;
        let aami = aami_check(records)?;
        let one = |ae: AeStats, ms: MeSd, bhs: Bhs, aami: Aami| SignalMetrics {
            mae: ae.mae,
            sdae: ae.sdae,
            me: ms.me,
            sd: ms.sd,
            bhs_within_pct: bhs.within_pct,
            bhs_grade: bhs.grade,
            aami_pass: aami.pass,
        };
        Ok(Self {
            count: records.len(),
            sbp: one(ae.sbp, ms.sbp, bhs.sbp, aami.sbp),
            dbp: one(ae.dbp, ms.dbp, bhs.dbp, aami.dbp),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {}", self.count)?;
        writeln!(
            f,
            "{:<6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>5} {:>5}",
            "signal", "MAE", "SDAE", "ME", "SD", "<=5", "<=10", "<=15", "BHS", "AAMI"
        )?;
        for (name, m) in [("SBP", &self.sbp), ("DBP", &self.dbp)] {
            writeln!(
                f,
                "{:<6} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>7.1}% {:>7.1}% {:>7.1}% {:>5} {:>5}",
                name,
                m.mae,
                m.sdae,
                m.me,
                m.sd,
                m.bhs_within_pct[0],
                m.bhs_within_pct[1],
                m.bhs_within_pct[2],
                m.bhs_grade,
                if m.aami_pass { "pass" } else { "fail" }
            )?;
        }
        writeln!(
            f,
            "units: mmHg; BHS columns are cumulative % of |error| within each band"
        )
    }
}
