//! Sample matrices and their CSV representation.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An N x M sample matrix: one row per observation, one column per variable.
///
/// The generative model everywhere in this crate is zero-mean Gaussian, so
/// no mean is ever estimated or subtracted from the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
}

impl Dataset {
    /// Wrap a sample matrix, validating that it is non-empty and that every
    /// entry is finite.
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::input(format!(
                "dataset must have at least one row and one column, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if let Some((i, j)) = first_non_finite(&samples) {
            return Err(Error::input(format!(
                "non-finite sample entry at row {i}, column {j}"
            )));
        }
        Ok(Dataset { samples })
    }

    /// Number of observations N.
    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    /// Dimension M.
    pub fn m(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// The observations with 0-based row indices in `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::parameter("row subset must be non-empty"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::parameter(format!(
                "row index {bad} out of range for {} observations",
                self.n()
            )));
        }
        let mat = DMatrix::from_fn(rows.len(), self.m(), |i, j| self.samples[(rows[i], j)]);
        Ok(Dataset { samples: mat })
    }

    /// Rows `range.start..range.end` (0-based, end exclusive) as a new dataset.
    pub fn row_range(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        if range.start >= range.end || range.end > self.n() {
            return Err(Error::parameter(format!(
                "row range {}..{} out of bounds for {} observations",
                range.start,
                range.end,
                self.n()
            )));
        }
        let mat = self.samples.rows(range.start, range.end - range.start).into_owned();
        Ok(Dataset { samples: mat })
    }

    /// The first `len` observations.
    pub fn prefix(&self, len: usize) -> Result<Dataset> {
        self.row_range(0..len)
    }

    /// Read a dataset from CSV: one row per observation, comma-separated
    /// numeric cells, no quoting. With `has_header` the first line is skipped.
    pub fn read_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
        let reader = BufReader::new(file);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 && has_header {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let row = parse_numeric_row(&line)
                .map_err(|e| Error::input(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::input(format!(
                        "{}:{}: expected {w} columns, found {}",
                        path.display(),
                        lineno + 1,
                        row.len()
                    )));
                }
                _ => {}
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::input(format!("{}: no data rows", path.display())));
        }
        let m = width.unwrap();
        let mat = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Dataset::new(mat)
    }

    /// Write as CSV (no header); floats are written in shortest round-trip form.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        let mut w = BufWriter::new(file);
        write_matrix_csv(&mut w, &self.samples)?;
        Ok(())
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dataset({}x{})", self.n(), self.m())
    }
}

pub(crate) fn first_non_finite(mat: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..mat.ncols() {
        for i in 0..mat.nrows() {
            if !mat[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

pub(crate) fn parse_numeric_row(line: &str) -> std::result::Result<Vec<f64>, String> {
    line.split(',')
        .map(|cell| {
            cell.trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot parse {cell:?} as a number"))
        })
        .collect()
}

pub(crate) fn write_matrix_csv<W: Write>(w: &mut W, mat: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", mat[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
