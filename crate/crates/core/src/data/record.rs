use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

/// One subject's synchronized PPG and ABP streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub ppg: SampledSignal,
    /// Arterial pressure in mmHg.
    pub abp: SampledSignal,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub source: String,
    /// Lag applied by [`super::align`], in seconds, once alignment has run.
    pub alignment_lag_s: Option<f64>,
    pub warnings: Vec<String>,
}

impl SubjectRecord {
    pub fn new(
        id: impl Into<String>,
        ppg: SampledSignal,
        abp: SampledSignal,
        source: impl Into<String>,
    ) -> Result<Self> {
        if ppg.fs() != abp.fs() || ppg.len() != abp.len() {
            return Err(Error::InvalidSignal(format!(
                "PPG ({} samples @ {} Hz) and ABP ({} samples @ {} Hz) differ",
                ppg.len(),
                ppg.fs(),
                abp.len(),
                abp.fs()
            )));
        }
        Ok(Self {
            id: id.into(),
            ppg,
            abp,
            meta: RecordMeta {
                source: source.into(),
                ..RecordMeta::default()
            },
        })
    }

    pub fn fs(&self) -> f64 {
        self.ppg.fs()
    }

    pub fn duration(&self) -> f64 {
        self.ppg.duration()
    }
}

/// Rounds a sampling rate to the nearest integer when it is within 1 ppm of it.
fn snap_rate(fs: f64) -> f64 {
    let r = fs.round();
    if r > 0.0 && (fs - r).abs() <= 1e-6 * fs {
        r
    } else {
        fs
    }
}

/// Reads a `t,ppg,abp` CSV record. `fs` is inferred from the median time step;
/// every step must be within 1% of it.
pub fn load_record(path: &Path) -> Result<SubjectRecord> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let wanted = ["t", "ppg", "abp"];
    if headers.len() != 3 || headers.iter().zip(wanted).any(|(h, w)| h != w) {
        return Err(Error::Ingestion {
            row: 1,
            message: format!(
                "header must be `t,ppg,abp`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let (mut t, mut ppg, mut abp) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(Error::Ingestion {
                row,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let mut vals = [0.0; 3];
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Ingestion {
                row,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    message: format!("non-finite {}", wanted[k]),
                });
            }
            vals[k] = v;
        }
        if let Some(&prev) = t.last() {
            if vals[0] <= prev {
                return Err(Error::Ingestion {
                    row,
                    message: "timestamps must increase".into(),
                });
            }
        }
        t.push(vals[0]);
        ppg.push(vals[1]);
        abp.push(vals[2]);
    }
    if t.len() < 2 {
        return Err(Error::EmptyRecord(format!(
            "{} has fewer than 2 samples",
            path.display()
        )));
    }
    let mut deltas: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = deltas.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if let Some(i) = deltas
        .iter_mut()
        .position(|d| (*d - median).abs() > 0.01 * median)
    {
        return Err(Error::NonUniformSampling(format!(
            "step at row {} is {:.6} s, median is {:.6} s",
            i + 3,
            deltas[i],
            median
        )));
    }
    let fs = snap_rate(1.0 / median);
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SubjectRecord::new(
        id,
        SampledSignal::new(ppg, fs)?,
        SampledSignal::new(abp, fs)?,
        path.display().to_string(),
    )
}

/// Writes a record as `t,ppg,abp` CSV with `t = k / fs`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_record(record: &SubjectRecord, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let fs = record.fs();
    let io = |e| Error::io(path, e);
    writeln!(w, "t,ppg,abp").map_err(io)?;
    for (k, (p, a)) in record
        .ppg
        .samples()
        .iter()
        .zip(record.abp.samples())
        .enumerate()
    {
        writeln!(w, "{},{},{}", k as f64 / fs, p, a).map_err(io)?;
    }
    w.flush().map_err(io)
}
