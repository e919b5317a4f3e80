//! Phase correlation with a peak-ratio confidence.

use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use super::fft::{Fft2, C64};
use super::peak::refine;
use super::surface::Chip;
use crate::error::{Error, Result};

/// A first peak at least this many times the second is trusted.
pub const CONFIDENCE_RATIO: f64 = 1.5;
/// Half-width of the window around the first peak excluded from the second-peak search.
pub const PEAK_EXCLUSION_HALF: usize = 2;
/// Ratio reported when nothing outside the exclusion window is positive.
const RATIO_CAP: f64 = 1e6;
const MIN_CHIP: usize = 32;

/// A measured displacement `d` with `moving(p) = reference(p - d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub d_line: f64,
    pub d_pixel: f64,
    pub confidence: f64,
    pub confident: bool,
}

impl ShiftEstimate {
    pub fn new(d_line: f64, d_pixel: f64, confidence: f64) -> Self {
        Self {
            d_line,
            d_pixel,
            confidence,
            confident: confidence >= CONFIDENCE_RATIO,
        }
    }
}

/// Peak ratio of a first peak against the best competitor.
pub fn peak_ratio(first: f64, second: f64) -> f64 {
    if second <= 0.0 || !(first / second).is_finite() {
        RATIO_CAP
    } else {
        (first / second).min(RATIO_CAP)
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

pub fn phase_correlate(reference: &Chip, moving: &Chip) -> Result<ShiftEstimate> {
    if reference.rows != moving.rows || reference.cols != moving.cols {
        return Err(Error::Precondition("phase correlation needs equal-size chips".into()));
    }
    let (rows, cols) = (reference.rows, reference.cols);
    if rows < MIN_CHIP || cols < MIN_CHIP {
        return Err(Error::Precondition(format!(
            "phase correlation needs chips of at least {MIN_CHIP} px, got {rows}x{cols}"
        )));
    }
    reference.require_texture()?;
    moving.require_texture()?;
    let (wr, wc) = (hann(rows), hann(cols));
    let windowed = |chip: &Chip| -> Vec<C64> {
        let m = chip.mean();
        (0..rows * cols)
            .map(|i| C64::new((chip.data[i] - m) * wr[i / cols] * wc[i % cols], 0.0))
            .collect()
    };
    let forward = Fft2::new(rows, cols, FftDirection::Forward);
    let mut fa = windowed(reference);
    let mut fb = windowed(moving);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        let cross = x.conj() * y;
        let mag = cross.norm();
        *x = if mag > 0.0 { cross / mag } else { C64::new(0.0, 0.0) };
    }
    Fft2::new(rows, cols, FftDirection::Inverse).process(&mut fa);
    let surf: Vec<f64> = fa.iter().map(|z| z.re / (rows * cols) as f64).collect();

    let best = (0..surf.len())
        .max_by(|&i, &j| surf[i].total_cmp(&surf[j]))
        .unwrap_or(0);
    let (pr, pc) = (best / cols, best % cols);
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut second = f64::NEG_INFINITY;
    for r in 0..rows {
        for c in 0..cols {
            let dr = r.abs_diff(pr).min(rows - r.abs_diff(pr));
            let dc = c.abs_diff(pc).min(cols - c.abs_diff(pc));
            if dr > PEAK_EXCLUSION_HALF || dc > PEAK_EXCLUSION_HALF {
                second = second.max(surf[r * cols + c]);
            }
        }
    }
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let r = wrap(pr as isize + i as isize - 1, rows);
            let c = wrap(pc as isize + j as isize - 1, cols);
            *x = surf[r * cols + c];
        }
    }
    let signed = |i: usize, n: usize| if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
    let peak = refine(signed(pr, rows), signed(pc, cols), &v);
    Ok(ShiftEstimate::new(
        peak.d_line,
        peak.d_pixel,
        peak_ratio(surf[best], second),
    ))
}
