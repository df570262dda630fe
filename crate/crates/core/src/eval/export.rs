//! CSV exports: evaluation records, Bland-Altman points and limits, error histograms.
//!
//! All values are mmHg. Floats are written in Rust's shortest round-trip
//! form, so files are byte-stable for identical inputs.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::metrics::{me_sd_from_errors, EvalRecord};
use crate::error::{Error, Result};

pub const RECORDS_HEADER: [&str; 5] = ["index", "target_sbp", "target_dbp", "est_sbp", "est_dbp"];

/// Per-signal Bland-Altman analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlandAltman {
    /// `(window index, (target + estimate) / 2, estimate - target)`.
    pub points: Vec<(usize, f64, f64)>,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BlandAltman {
    fn from_pairs(pairs: impl Iterator<Item = (usize, f64, f64)>) -> Result<Self> {
        let points: Vec<(usize, f64, f64)> =
            pairs.map(|(i, t, e)| (i, (t + e) / 2.0, e - t)).collect();
        let diffs: Vec<f64> = points.iter().map(|p| p.2).collect();
        let m = me_sd_from_errors(&diffs)?;
        Ok(Self {
            points,
            mean_diff: m.me,
            sd_diff: m.sd,
            lower: m.me - 1.96 * m.sd,
            upper: m.me + 1.96 * m.sd,
        })
    }
}

/// Bland-Altman analysis for (SBP, DBP).
pub fn bland_altman_export(records: &[EvalRecord]) -> Result<(BlandAltman, BlandAltman)> {
    Ok((
        BlandAltman::from_pairs(records.iter().map(|r| (r.index, r.target_sbp, r.est_sbp)))?,
        BlandAltman::from_pairs(records.iter().map(|r| (r.index, r.target_dbp, r.est_dbp)))?,
    ))
}

/// Counts of signed errors in 1 mmHg bins `[k, k + 1)`, from the bin holding
/// the smallest error to the one holding the largest. Empty interior bins are kept.
pub fn error_histogram(errors: &[f64]) -> Vec<(i64, usize)> {
    if errors.is_empty() {
        return Vec::new();
    }
    let bins: Vec<i64> = errors.iter().map(|e| e.floor() as i64).collect();
    let lo = *bins.iter().min().unwrap();
    let hi = *bins.iter().max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as i64, c))
        .collect()
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(RECORDS_HEADER)?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            r.target_sbp.to_string(),
            r.target_dbp.to_string(),
            r.est_sbp.to_string(),
            r.est_dbp.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Reads a records CSV with the header written by [`write_records`].
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Ingestion {
            row: 0,
            message: format!("{other:?}"),
        },
    })?;
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORDS_HEADER) {
        return Err(Error::Ingestion {
            row: 1,
            message: format!("expected header {}", RECORDS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| Error::Ingestion {
            row: row_no,
            message: e.to_string(),
        })?;
        let bad = |msg: String| Error::Ingestion {
            row: row_no,
            message: msg,
        };
        if row.len() != RECORDS_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                RECORDS_HEADER.len(),
                row.len()
            )));
        }
        let index = row[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("index: {e}")))?;
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = &row[k + 1];
            *slot = field
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", RECORDS_HEADER[k + 1])))?;
            if !slot.is_finite() {
                return Err(bad(format!("{} is not finite", RECORDS_HEADER[k + 1])));
            }
        }
        out.push(EvalRecord {
            index,
            target_sbp: v[0],
            target_dbp: v[1],
            est_sbp: v[2],
            est_dbp: v[3],
        });
    }
    Ok(out)
}

/// Writes `signal,index,mean,difference` points and a companion limits file
/// `signal,mean_diff,sd_diff,lower,upper`.
pub fn write_bland_altman(
    records: &[EvalRecord],
    points_path: &Path,
    limits_path: &Path,
) -> Result<()> {
    let (sbp, dbp) = bland_altman_export(records)?;
    let mut w = create(points_path)?;
    w.write_record(["signal", "index", "mean", "difference"])?;
    for (name, ba) in [("sbp", &sbp), ("dbp", &dbp)] {
        for &(i, m, d) in &ba.points {
            w.write_record([
                name.to_string(),
                i.to_string(),
                m.to_string(),
                d.to_string(),
            ])?;
        }
    }
    finish(w, points_path)?;
    let mut w = create(limits_path)?;
    w.write_record(["signal", "mean_diff", "sd_diff", "lower", "upper"])?;
    for (name, ba) in [("sbp", &sbp), ("dbp", &dbp)] {
        w.write_record([
            name.to_string(),
            ba.mean_diff.to_string(),
            ba.sd_diff.to_string(),
            ba.lower.to_string(),
            ba.upper.to_string(),
        ])?;
    }
    finish(w, limits_path)
}

/// Writes `signal,bin_start,bin_end,count` for signed errors.
pub fn write_histogram(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["signal", "bin_start", "bin_end", "count"])?;
    let (s, d): (Vec<f64>, Vec<f64>) = records.iter().map(EvalRecord::errors).unzip();
    for (name, errors) in [("sbp", s), ("dbp", d)] {
        for (lo, count) in error_histogram(&errors) {
            w.write_record([
                name.to_string(),
                lo.to_string(),
                (lo + 1).to_string(),
                count.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// Writes a text file, mapping IO errors to [`Error::Io`].
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(index: usize, t: f64, e: f64) -> EvalRecord {
        EvalRecord {
            index,
            target_sbp: t,
            target_dbp: t - 40.0,
            est_sbp: e,
            est_dbp: e - 40.0,
        }
    }

    #[test]
    fn bland_altman_points_and_limits() {
        let (s, _) = bland_altman_export(&[rec(0, 110.0, 114.0)]).unwrap();
        assert_eq!(s.points, vec![(0, 112.0, 4.0)]);
        let perfect: Vec<EvalRecord> = (0..5).map(|i| rec(i, 120.0, 120.0)).collect();
        let (s, d) = bland_altman_export(&perfect).unwrap();
        assert_eq!((s.lower, s.upper, d.mean_diff), (0.0, 0.0, 0.0));
        // differences 1 +- 2 have population SD exactly 2
        let set = [rec(0, 100.0, 103.0), rec(1, 100.0, 99.0)];
        let (s, _) = bland_altman_export(&set).unwrap();
        assert_eq!(s.sd_diff, 2.0);
        assert!((s.upper - (1.0 + 3.92)).abs() < 1e-12 && (s.lower - (1.0 - 3.92)).abs() < 1e-12);
    }

    #[test]
    fn histogram_bins() {
        let h = error_histogram(&[-0.5, 0.0, 0.99, 2.0]);
        assert_eq!(h, vec![(-1, 1), (0, 2), (1, 0), (2, 1)]);
        assert!(error_histogram(&[]).is_empty());
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let recs = vec![rec(3, 120.1, 118.7), rec(9, 1.0 / 3.0, 0.1 + 0.2)];
        write_records(&recs, &path).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
        std::fs::write(
            &path,
            "index,target_sbp,target_dbp,est_sbp,est_dbp\n1,2,x,4,5\n",
        )
        .unwrap();
        assert!(matches!(
            read_records(&path),
            Err(Error::Ingestion { row: 2, .. })
        ));
    }
}
