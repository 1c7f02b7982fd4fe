//! CSV ingestion and emission. One header row, comma delimiter, '.'
//! decimal separator. A column literally named `label` carries 0/1 point
//! labels; all other columns are observation dimensions in file order.

use std::path::Path;

use crate::numerics::Real;
use crate::{Error, Result};

use super::TimeSeries;

pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Ingest {
            path: display.clone(),
            row: 0,
            col: "-".into(),
            msg: e.to_string(),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingest {
            path: display.clone(),
            row: 0,
            col: "-".into(),
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_col = headers.iter().position(|h| h == "label");
    let value_cols: Vec<usize> = (0..headers.len()).filter(|i| Some(*i) != label_col).collect();
    if value_cols.is_empty() {
        return Err(Error::Ingest {
            path: display,
            row: 0,
            col: "-".into(),
            msg: "no value columns".into(),
        });
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based data row, header is row 0
        let record = record.map_err(|e| Error::Ingest {
            path: display.clone(),
            row,
            col: "-".into(),
            msg: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Ingest {
                path: display,
                row,
                col: "-".into(),
                msg: format!("ragged row: {} cells, expected {}", record.len(), headers.len()),
            });
        }
        for &c in &value_cols {
            let cell = record.get(c).unwrap_or("").trim();
            let v: Real = cell.parse().map_err(|_| Error::Ingest {
                path: display.clone(),
                row,
                col: headers[c].clone(),
                msg: format!("non-numeric value '{cell}'"),
            })?;
            values.push(v);
        }
        if let Some(lc) = label_col {
            let cell = record.get(lc).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                path: display.clone(),
                row,
                col: "label".into(),
                msg: format!("non-numeric label '{cell}'"),
            })?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Ingest {
                    path: display,
                    row,
                    col: "label".into(),
                    msg: format!("label must be 0 or 1, got {v}"),
                });
            }
            labels.push(v as u8);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Ingest {
            path: display,
            row: 0,
            col: "-".into(),
            msg: "empty file".into(),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "series".to_string());
    TimeSeries::new(name, values, n, value_cols.len(), label_col.map(|_| labels))
}

/// Write a series as CSV. Value columns are named `v0..v{D-1}`; a `label`
/// column is appended when labels are present.
pub fn write_csv(path: &Path, ts: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ts.dims()).map(|j| format!("v{j}")).collect();
    if ts.labels.is_some() {
        header.push("label".to_string());
    }
    w.write_record(&header)?;
    for t in 0..ts.len() {
        let mut row: Vec<String> = (0..ts.dims()).map(|j| format!("{}", ts.value(t, j))).collect();
        if let Some(l) = &ts.labels {
            row.push(format!("{}", l[t]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Config(format!("csv: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_values_and_labels() {
        let (_d, path) = write_tmp("a,label\n1,0\n2,0\n9,1\n");
        let ts = load_csv(&path).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.dims(), 1);
        assert_eq!(ts.labels.as_deref(), Some(&[0, 0, 1][..]));
        assert_eq!(ts.values(), &[1.0, 2.0, 9.0]);
    }

    #[test]
    fn no_label_column_means_no_labels() {
        let (_d, path) = write_tmp("a,b\n1,2\n3,4\n");
        let ts = load_csv(&path).unwrap();
        assert_eq!(ts.dims(), 2);
        assert!(ts.labels.is_none());
    }

    #[test]
    fn wide_file_reports_dimension() {
        let header: Vec<String> = (0..25).map(|i| format!("c{i}")).collect();
        let row = vec!["1.5"; 25].join(",");
        let (_d, path) = write_tmp(&format!("{}\n{row}\n{row}\n", header.join(",")));
        let ts = load_csv(&path).unwrap();
        assert_eq!(ts.dims(), 25);
        assert_eq!(ts.len(), 2);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let (_d, path) = write_tmp("a,b\n1,2\n1,x\n");
        match load_csv(&path) {
            Err(Error::Ingest { row, col, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(col, "b");
            }
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_row_rejected() {
        let (_d, path) = write_tmp("a,b\n1,2\n3\n");
        assert!(matches!(load_csv(&path), Err(Error::Ingest { row: 2, .. })));
    }

    #[test]
    fn missing_file_is_error() {
        assert!(load_csv(Path::new("/nonexistent/x.csv")).is_err());
    }

    #[test]
    fn roundtrip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let ts = TimeSeries::univariate("s", vec![1.25, -3.0, 0.5], Some(vec![0, 1, 0])).unwrap();
        write_csv(&path, &ts).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.values(), ts.values());
        assert_eq!(back.labels, ts.labels);
    }
}
