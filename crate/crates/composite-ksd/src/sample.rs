//! An i.i.d. sample: `n` rows of dimension `d`, all entries finite.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Row-oriented data matrix. Rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    rows: Vec<DVector<f64>>,
    d: usize,
}

impl Sample {
    pub fn from_rows(rows: Vec<DVector<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("sample must contain at least one row"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::invalid("sample rows must have dimension >= 1"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(row.len(), d));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite entry in row {i}")));
            }
        }
        Ok(Self { rows, d })
    }

    /// Build from a flat row-major buffer of `n·d` values.
    pub fn from_flat(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch(data.len(), n * d));
        }
        let rows = (0..n)
            .map(|i| DVector::from_row_slice(&data[i * d..(i + 1) * d]))
            .collect();
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &DVector<f64> {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    /// Row-major copy of the data, used by the flat kernels.
    pub(crate) fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n() * self.d);
        for row in &self.rows {
            out.extend(row.iter().copied());
        }
        out
    }

    /// New sample with rows `indices[k]` of `self` (with repetition allowed).
    pub fn subsample(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("subsample needs at least one index"));
        }
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::invalid(format!(
                    "row index {i} out of range for n = {}",
                    self.n()
                )));
            }
            rows.push(self.rows[i].clone());
        }
        Self::from_rows(rows)
    }
}
