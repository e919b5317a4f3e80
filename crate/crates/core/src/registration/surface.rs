//! Correlation surfaces over integer shifts and the chips they are computed from.

use crate::error::{Error, Result};
use crate::projection::BandView;

/// A rectangular block of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Chip {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::Precondition(format!(
                "chip of {rows}x{cols} cannot hold {} samples",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    /// Copies a window of a band; `None` if it leaves the band or touches nodata.
    pub fn from_band(view: &BandView<'_>, row0: isize, col0: isize, rows: usize, cols: usize) -> Option<Self> {
        if row0 < 0 || col0 < 0 {
            return None;
        }
        let (r0, c0) = (row0 as usize, col0 as usize);
        if r0 + rows > view.height || c0 + cols > view.width {
            return None;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows {
            for &v in &view.data[r * view.width + c0..r * view.width + c0 + cols] {
                if v == view.nodata || v.is_nan() {
                    return None;
                }
                data.push(v as f64);
            }
        }
        Some(Self { rows, cols, data })
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// Errors with `Homogeneous` when the chip carries no texture at all.
    pub fn require_texture(&self) -> Result<()> {
        let first = self.data[0];
        if self.data.iter().all(|&v| v == first) || !(self.variance() > 0.0) {
            return Err(Error::Homogeneous);
        }
        Ok(())
    }
}

/// Scores over the integer shifts `[-radius, radius]²`, row-major by line shift.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    pub radius: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl CorrelationSurface {
    pub fn from_fn(radius: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = 2 * radius + 1;
        let r = radius as f64;
        let values = (0..n * n).map(|i| f((i / n) as f64 - r, (i % n) as f64 - r)).collect();
        Self {
            radius,
            rows: n,
            cols: n,
            values,
        }
    }

    pub fn index(&self, d_line: isize, d_pixel: isize) -> usize {
        let r = self.radius as isize;
        ((d_line + r) as usize) * self.cols + (d_pixel + r) as usize
    }

    pub fn get(&self, d_line: isize, d_pixel: isize) -> f64 {
        self.values[self.index(d_line, d_pixel)]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn shift_of(&self, row: usize, col: usize) -> (f64, f64) {
        (row as f64 - self.radius as f64, col as f64 - self.radius as f64)
    }

    /// Storage position of the largest value (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Largest value outside a square window of half-width `half` around `(row, col)`.
    pub fn max_outside(&self, row: usize, col: usize, half: usize) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if r.abs_diff(row) <= half && c.abs_diff(col) <= half {
                    continue;
                }
                m = m.max(self.at(r, c));
            }
        }
        m
    }
}
