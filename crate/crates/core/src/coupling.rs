use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visible-hidden coupling weights, one row per sufficient statistic and one
/// column per hidden qubit, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CouplingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        if data.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("coupling weight".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `W h` for a hidden spin vector.
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: h.len() });
        }
        Ok((0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(h).map(|(w, x)| w * x).sum())
            .collect())
    }

    /// `s^T W`, one field value per hidden qubit.
    pub fn project(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: s.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (i, si) in s.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += si * self.get(i, j);
            }
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0.0)
    }
}
