//! Residual misregistration between neighbouring frames on the shared map grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::CameraConstants;
use crate::projection::{MapGrid, Raster};
use crate::registration::{phase_correlate, Chip};

const MIN_SIDE: usize = 32;
const MAX_SIDE: usize = 512;

/// Shift of frame `b` relative to frame `a` across their common cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamEdge {
    pub a: usize,
    pub b: usize,
    pub vertical: bool,
    /// Map-grid cells, (line, pixel); absent when the edge could not be measured.
    pub d_line: Option<f64>,
    pub d_pixel: Option<f64>,
    /// Length of the shift in nadir detector pixels.
    pub shift_px: Option<f64>,
    pub confidence: f64,
    pub confident: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub edges: Vec<SeamEdge>,
    pub confident_edges: usize,
    /// Over confident edges, nadir detector pixels.
    pub rms_px: f64,
    pub max_px: f64,
}

fn grid_of(r: &Raster) -> Result<MapGrid> {
    let transform = r
        .geotransform
        .ok_or_else(|| Error::Precondition("raster is not georeferenced".into()))?;
    Ok(MapGrid {
        transform,
        width: r.width,
        height: r.height,
    })
}

/// Largest axis-aligned all-true rectangle (row0, col0, rows, cols) of a mask.
fn largest_rectangle(mask: &[bool], w: usize, h: usize) -> (usize, usize, usize, usize) {
    let mut heights = vec![0usize; w];
    let mut best = (0, 0, 0, 0);
    let mut best_area = 0;
    for r in 0..h {
        for c in 0..w {
            heights[c] = if mask[r * w + c] { heights[c] + 1 } else { 0 };
        }
        let mut stack: Vec<usize> = Vec::new();
        for c in 0..=w {
            let cur = if c < w { heights[c] } else { 0 };
            while let Some(&top) = stack.last() {
                if heights[top] < cur {
                    break;
                }
                stack.pop();
                let height = heights[top];
                let left = stack.last().map_or(0, |&s| s + 1);
                let area = height * (c - left);
                if area > best_area {
                    best_area = area;
                    best = (r + 1 - height, left, height, c - left);
                }
            }
            stack.push(c);
        }
    }
    best
}

/// Phase-correlates the common valid cells of two georeferenced frames (band `band`).
pub fn edge_shift(a: &Raster, b: &Raster, band: usize) -> Result<crate::registration::ShiftEstimate> {
    let (ga, gb) = (grid_of(a)?, grid_of(b)?);
    let common = ga
        .intersection(&gb)
        .ok_or(Error::InsufficientOverlap { fraction: 0.0 })?;
    let (ar, ac) = common.offset_in(&ga);
    let (br, bc) = common.offset_in(&gb);
    let (w, h) = (common.width, common.height);
    let at = |r: &Raster, row: isize, col: isize| -> Option<f32> {
        if row < 0 || col < 0 || row as usize >= r.height || col as usize >= r.width {
            return None;
        }
        let v = r.get(band, row as usize, col as usize);
        (!r.is_nodata(v)).then_some(v)
    };
    let mask: Vec<bool> = (0..w * h)
        .map(|i| {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            at(a, ar + r, ac + c).is_some() && at(b, br + r, bc + c).is_some()
        })
        .collect();
    let (r0, c0, mut rows, mut cols) = largest_rectangle(&mask, w, h);
    let fraction = (rows * cols) as f64 / (ga.width * ga.height) as f64;
    if rows < MIN_SIDE || cols < MIN_SIDE {
        return Err(Error::InsufficientOverlap { fraction });
    }
    let (r0, c0) = (
        r0 + (rows - rows.min(MAX_SIDE)) / 2,
        c0 + (cols - cols.min(MAX_SIDE)) / 2,
    );
    rows = rows.min(MAX_SIDE);
    cols = cols.min(MAX_SIDE);
    let chip = |r: &Raster, dr: isize, dc: isize| {
        Chip::from_fn(rows, cols, |i, j| {
            at(r, dr + (r0 + i) as isize, dc + (c0 + j) as isize).unwrap_or(0.0) as f64
        })
    };
    phase_correlate(&chip(a, ar, ac), &chip(b, br, bc))
}

/// Seam shifts over every pair of grid neighbours among `frames`, given as
/// (frame id, grid row, grid col, georeferenced raster).
pub fn seam_metric(
    frames: &[(usize, usize, usize, &Raster)],
    band: usize,
    camera: &CameraConstants,
    confidence_ratio: f64,
) -> SeamReport {
    let mut edges = Vec::new();
    for (i, a) in frames.iter().enumerate() {
        for b in &frames[i + 1..] {
            let vertical = a.2 == b.2 && a.1.abs_diff(b.1) == 1;
            let horizontal = a.1 == b.1 && a.2.abs_diff(b.2) == 1;
            if !(vertical || horizontal) {
                continue;
            }
            let gsd = a.3.geotransform.map_or(f64::NAN, |t| t.dx);
            let mut edge = SeamEdge {
                a: a.0,
                b: b.0,
                vertical,
                d_line: None,
                d_pixel: None,
                shift_px: None,
                confidence: 0.0,
                confident: false,
                error: None,
            };
            match edge_shift(a.3, b.3, band) {
                Ok(e) => {
                    edge.d_line = Some(e.d_line);
                    edge.d_pixel = Some(e.d_pixel);
                    edge.shift_px = Some(e.d_line.hypot(e.d_pixel) * gsd / camera.nadir_gsd_m());
                    edge.confidence = e.confidence;
                    edge.confident = e.confidence >= confidence_ratio;
                }
                Err(e) => edge.error = Some(e.to_string()),
            }
            edges.push(edge);
        }
    }
    let shifts: Vec<f64> = edges
        .iter()
        .filter(|e| e.confident)
        .filter_map(|e| e.shift_px)
        .collect();
    let n = shifts.len();
    SeamReport {
        confident_edges: n,
        rms_px: if n == 0 {
            0.0
        } else {
            (shifts.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt()
        },
        max_px: shifts.iter().cloned().fold(0.0, f64::max),
        edges,
    }
}
