//! Window dataset file: CSV with header
//! `index,start_time,status,sbp,dbp,x0,...,x{L-1}`.
//!
//! `status` is `ok` or `skipped`; skipped rows leave the label and sample
//! columns empty so the skip map survives a round trip. Values are written
//! in shortest round-trip form.

use std::fs::File;
use std::path::Path;

use super::{Dataset, WindowSample};
use crate::error::{Error, Result};

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let len = dataset.windows.first().map_or(0, |w| w.input.len());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec![
        "index".to_string(),
        "start_time".into(),
        "status".into(),
        "sbp".into(),
        "dbp".into(),
    ];
    header.extend((0..len).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    let mut rows: Vec<(usize, Option<&WindowSample>)> =
        dataset.windows.iter().map(|w| (w.index, Some(w))).collect();
    rows.extend(dataset.skipped.iter().map(|&i| (i, None)));
    rows.sort_by_key(|r| r.0);
    for (index, win) in rows {
        let mut rec = vec![index.to_string()];
        match win {
            Some(win) => {
                rec.push(win.start_time.to_string());
                rec.push("ok".into());
                rec.push(win.sbp.to_string());
                rec.push(win.dbp.to_string());
                rec.extend(win.input.iter().map(f64::to_string));
            }
            None => {
                rec.push((index as f64 * crate::signal::STEP_S).to_string());
                rec.push("skipped".into());
                rec.extend(std::iter::repeat_n(String::new(), len + 2));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = r.headers()?.clone();
    let fixed = ["index", "start_time", "status", "sbp", "dbp"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(Error::Ingestion {
            row: 1,
            message: "not a window dataset file".into(),
        });
    }
    let len = header.len() - fixed.len();
    let mut ds = Dataset::default();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            let field = &rec[k];
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Ingestion {
                    row,
                    message: format!("column {} has `{field}`", &header[k]),
                })
        };
        let index: usize = rec[0].parse().map_err(|_| Error::Ingestion {
            row,
            message: format!("bad index `{}`", &rec[0]),
        })?;
        match &rec[2] {
            "skipped" => ds.skipped.push(index),
            "ok" => {
                let input = (0..len).map(|k| num(5 + k)).collect::<Result<Vec<_>>>()?;
                ds.windows.push(WindowSample {
                    input,
                    sbp: num(3)?,
                    dbp: num(4)?,
                    index,
                    start_time: num(1)?,
                });
            }
            other => {
                return Err(Error::Ingestion {
                    row,
                    message: format!("unknown status `{other}`"),
                })
            }
        }
    }
    if ds.windows.is_empty() {
        return Err(Error::EmptyRecord(format!(
            "{} holds no usable windows",
            path.display()
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_skip_map() {
        let ds = Dataset {
            windows: vec![
                WindowSample {
                    input: vec![0.1, -1.0 / 3.0, 2.5],
                    sbp: 120.25,
                    dbp: 80.0,
                    index: 0,
                    start_time: 0.0,
                },
                WindowSample {
                    input: vec![1e-17, 0.0, -7.0],
                    sbp: 119.0,
                    dbp: 79.5,
                    index: 2,
                    start_time: 4.0,
                },
            ],
            skipped: vec![1],
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset(&ds, f.path()).unwrap();
        assert_eq!(read_dataset(f.path()).unwrap(), ds);
    }
}
