use std::path::Path;

use super::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Numeric CSV with one target column; all other columns become inputs. The first record is
/// treated as a header when none of its fields parses as a number. Parse errors report the
/// 1-based line and column.
pub fn load_csv_regression(path: &Path, target_column: usize) -> Result<Dataset> {
    load_csv(path, target_column, Task::Regression)
}

pub fn load_csv(path: &Path, target_column: usize, task: Task) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(index + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if index == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row: line,
                col: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (c, field) in record.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row: line,
                        col: c + 1,
                        message: format!("{field:?} is not a finite number"),
                    })
                }
            }
        }
        rows.push(values);
    }
    let width = match width {
        Some(w) if !rows.is_empty() => w,
        _ => return Err(Error::EmptyFile),
    };
    if target_column >= width {
        return Err(Error::config(format!(
            "target column {target_column} out of range for {width} columns"
        )));
    }
    let n = rows.len();
    let inputs = Matrix::from_fn(n, width - 1, |i, j| rows[i][if j < target_column { j } else { j + 1 }]);
    let targets = Matrix::from_fn(n, 1, |i, _| rows[i][target_column]);
    Dataset::new(inputs, targets, task)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            col: 0,
            message: format!("{other:?}"),
        },
    }
}
