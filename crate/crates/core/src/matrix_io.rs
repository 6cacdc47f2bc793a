//! Plain-CSV numeric matrix parsing for activation and logit files.

use ndarray::Array2;
use std::path::Path;
use thiserror::Error;

use crate::num::Real;

/// Errors from reading a numeric CSV matrix.
#[derive(Debug, Error)]
pub enum MatrixIoError {
    /// Filesystem trouble.
    #[error("read {path}: {message}")]
    Io {
        /// The file that failed.
        path: String,
        /// The underlying error.
        message: String,
    },
    /// A field did not parse as a number (1-indexed coordinates).
    #[error("line {line}, field {field}: cannot parse {text:?} as a number")]
    Parse {
        /// 1-indexed line.
        line: usize,
        /// 1-indexed field within the line.
        field: usize,
        /// The offending text.
        text: String,
    },
    /// A row's field count disagrees with the first row's.
    #[error("line {line}: {found} fields, expected {expected}")]
    Ragged {
        /// 1-indexed line.
        line: usize,
        /// Field count of the first row.
        expected: usize,
        /// Field count found here.
        found: usize,
    },
    /// No data rows at all.
    #[error("matrix is empty")]
    Empty,
}

/// Parses comma-separated numeric rows. Fields are trimmed; blank lines are
/// skipped; every data row must match the first row's width.
pub fn parse_matrix_csv<T: Real>(text: &str) -> Result<Array2<T>, MatrixIoError> {
    let mut values: Vec<T> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (line_index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = line_index + 1;
        let mut count = 0usize;
        for (field_index, field) in line.split(',').enumerate() {
            let trimmed = field.trim();
            let parsed: f64 = trimmed.parse().map_err(|_| MatrixIoError::Parse {
                line: line_no,
                field: field_index + 1,
                text: trimmed.to_owned(),
            })?;
            values.push(T::from_f64(parsed));
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(expected) if expected != count => {
                return Err(MatrixIoError::Ragged { line: line_no, expected, found: count });
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let width = width.ok_or(MatrixIoError::Empty)?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("row count * width matches"))
}

/// [`parse_matrix_csv`] over a file's contents.
pub fn read_matrix_csv<T: Real>(path: &Path) -> Result<Array2<T>, MatrixIoError> {
    let text = std::fs::read_to_string(path).map_err(|e| MatrixIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_matrix_csv(&text)
}
