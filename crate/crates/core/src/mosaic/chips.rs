//! Overlap chips between neighbouring frames and the shift measured on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{Link, LinkCorrelator};
use super::{predicted_overlap, FramePointing, MosaicConfig};
use crate::error::{Error, Result};
use crate::geomodel::{GeometrySnapshot, SensorModel};
use crate::projection::{BandView, Raster};
use crate::registration::{phase_correlate, Chip, ShiftEstimate};
use crate::resection::{Correspondence, ResectionContext, Target};

/// Below this predicted overlap no chip is attempted.
pub const MIN_OVERLAP: f64 = 0.05;
/// Largest inset kept between a chip and the strip edges, pixels.
const CHIP_MARGIN: usize = 64;
const MIN_CHIP: usize = 32;
const CHIP_NODE_STEP: usize = 16;

/// Where the reference frame lies as seen from the current frame's detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

/// Co-located chips: `current` straight from the current frame, `reference` resampled from
/// the reference frame into the current frame's pixel geometry through the two models.
#[derive(Debug, Clone)]
pub struct ChipPair {
    pub current: Chip,
    pub reference: Chip,
    pub row0: usize,
    pub col0: usize,
    pub side: Side,
    pub overlap: f64,
}

fn prev_pow2(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

/// Power-of-two extent that fits `n` pixels with a margin on both sides.
fn fitted(n: usize) -> usize {
    prev_pow2(n.saturating_sub(2 * CHIP_MARGIN.min(n / 4)))
}

/// Chip window (row0, col0, rows, cols) centred in the predicted overlap strip.
pub fn strip_window(n: usize, side: Side, overlap: f64) -> Result<(usize, usize, usize, usize)> {
    if !(overlap > MIN_OVERLAP) {
        return Err(Error::InsufficientOverlap { fraction: overlap });
    }
    let w = ((overlap * n as f64).round() as usize).min(n);
    let (short, long) = (fitted(w), fitted(n));
    if short < MIN_CHIP || long < MIN_CHIP {
        return Err(Error::InsufficientOverlap { fraction: overlap });
    }
    let across = (n - long) / 2;
    let near = (w - short) / 2;
    let far = n - w + near;
    Ok(match side {
        Side::Left => (across, near, long, short),
        Side::Right => (across, far, long, short),
        Side::Top => (near, across, short, long),
        Side::Bottom => (far, across, short, long),
    })
}

/// Side of the current detector facing the reference frame.
pub fn side_of(
    current: &SensorModel,
    reference: &SensorModel,
    elev: &crate::projection::ElevationSource,
) -> Result<Side> {
    let c = current.camera().center();
    let g = reference.geolocate_unchecked(c, c, elev)?;
    let (r, col) = current.ground_to_pixel_unbounded(&g)?;
    let (dr, dc) = (r - c, col - c);
    Ok(if dc.abs() >= dr.abs() {
        if dc < 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    } else if dr < 0.0 {
        Side::Top
    } else {
        Side::Bottom
    })
}

/// Cuts the overlap chips of `current` against `reference`.
pub fn extract_overlap_chips(
    current: &Raster,
    current_model: &SensorModel,
    reference: &Raster,
    reference_model: &SensorModel,
    side: Side,
    overlap: f64,
    elev: &crate::projection::ElevationSource,
) -> Result<ChipPair> {
    let n = current_model.camera().detector_pixels;
    if current.width != n || current.height != n || reference.width != n || reference.height != n {
        return Err(Error::Precondition("frame bands must match the detector size".into()));
    }
    let (row0, col0, rows, cols) = strip_window(n, side, overlap)?;
    let insufficient = || Error::InsufficientOverlap { fraction: overlap };
    let cur = Chip::from_band(&BandView::of(current, 0), row0 as isize, col0 as isize, rows, cols)
        .ok_or_else(insufficient)?;

    // reference-pixel positions on a sparse lattice, bilinear in between
    let step = CHIP_NODE_STEP;
    let (nr, nc) = (rows.div_ceil(step) + 1, cols.div_ceil(step) + 1);
    let nodes: Vec<(f64, f64)> = (0..nr * nc)
        .into_par_iter()
        .map(|i| {
            let r = (row0 + (i / nc) * step) as f64;
            let c = (col0 + (i % nc) * step) as f64;
            let g = current_model.geolocate_unchecked(r, c, elev)?;
            reference_model.ground_to_pixel_unbounded(&g)
        })
        .collect::<Result<_>>()?;
    let view = BandView::of(reference, 0);
    let data: Option<Vec<f64>> = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let (kr, fr) = (r / step, (r % step) as f64 / step as f64);
            let (kc, fc) = (c / step, (c % step) as f64 / step as f64);
            let at = |a: usize, b: usize| nodes[a * nc + b];
            let (p00, p01, p10, p11) = (at(kr, kc), at(kr, kc + 1), at(kr + 1, kc), at(kr + 1, kc + 1));
            let lerp = |a: f64, b: f64, c: f64, d: f64| {
                (1.0 - fr) * ((1.0 - fc) * a + fc * b) + fr * ((1.0 - fc) * c + fc * d)
            };
            let q = (lerp(p00.0, p01.0, p10.0, p11.0), lerp(p00.1, p01.1, p10.1, p11.1));
            view.sample(q.0, q.1, None).map(f64::from)
        })
        .collect();
    let reference = Chip::new(rows, cols, data.ok_or_else(insufficient)?)?;
    Ok(ChipPair {
        current: cur,
        reference,
        row0,
        col0,
        side,
        overlap,
    })
}

/// Four corner correspondences of a chip pair whose measured shift is `d`.
///
/// The current frame shows at pixel `p` the ground its model places at `p − d`, so each
/// corner is tied to that ground point.
pub fn link_correspondences(
    pair: &ChipPair,
    d: &ShiftEstimate,
    current_model: &SensorModel,
    elev: &crate::projection::ElevationSource,
) -> Result<Vec<Correspondence>> {
    let (r1, c1) = (
        (pair.row0 + pair.current.rows - 1) as f64,
        (pair.col0 + pair.current.cols - 1) as f64,
    );
    let (r0, c0) = (pair.row0 as f64, pair.col0 as f64);
    [(r0, c0), (r0, c1), (r1, c1), (r1, c0)]
        .iter()
        .map(|&(r, c)| {
            let g = current_model.geolocate_unchecked(r - d.d_line, c - d.d_pixel, elev)?;
            Ok(Correspondence {
                row: r,
                col: c,
                target: Target::Ground(g),
                weight: 1.0,
            })
        })
        .collect()
}

/// What the link correlator needs of one frame.
#[derive(Debug, Clone)]
pub struct FrameLinks<'a> {
    pub band: &'a Raster,
    /// Geometry of `band` as known before any correction.
    pub snapshot: GeometrySnapshot,
    pub pointing: FramePointing,
}

/// Correlates overlap strips of real frame images.
pub struct ImageLinkCorrelator<'a> {
    frames: Vec<FrameLinks<'a>>,
    ctx: &'a ResectionContext,
    cfg: &'a MosaicConfig,
}

impl<'a> ImageLinkCorrelator<'a> {
    pub fn new(frames: Vec<FrameLinks<'a>>, ctx: &'a ResectionContext, cfg: &'a MosaicConfig) -> Self {
        Self { frames, ctx, cfg }
    }

    fn frame(&self, id: usize) -> Result<&FrameLinks<'a>> {
        self.frames
            .get(id)
            .ok_or_else(|| Error::Precondition(format!("frame {id} is unknown")))
    }

    /// Chips and shift of `current` against `reference`, whose geometry is `reference_snap`.
    pub fn measure(
        &self,
        current: usize,
        reference: usize,
        reference_snap: &GeometrySnapshot,
    ) -> Result<(ChipPair, ShiftEstimate)> {
        let (cur, rf) = (self.frame(current)?, self.frame(reference)?);
        let overlap = predicted_overlap(&cur.pointing, &rf.pointing, &self.ctx.camera, self.cfg.overlap_mode)?;
        let cm = SensorModel::new(&cur.snapshot, &self.ctx.camera)?;
        let rm = SensorModel::new(reference_snap, &self.ctx.camera)?;
        let side = side_of(&cm, &rm, &self.ctx.elevation)?;
        let pair = extract_overlap_chips(cur.band, &cm, rf.band, &rm, side, overlap, &self.ctx.elevation)?;
        let mut est = phase_correlate(&pair.reference, &pair.current)?;
        est.confident = est.confidence >= self.cfg.confidence_ratio;
        Ok((pair, est))
    }

    /// Correspondences tying `current` to an already settled `reference`.
    pub fn correspondences(
        &self,
        current: usize,
        reference: usize,
        reference_snap: &GeometrySnapshot,
    ) -> Result<(Vec<Correspondence>, ShiftEstimate)> {
        let (pair, est) = self.measure(current, reference, reference_snap)?;
        if !est.confident {
            return Ok((Vec::new(), est));
        }
        let cm = SensorModel::new(&self.frame(current)?.snapshot, &self.ctx.camera)?;
        Ok((link_correspondences(&pair, &est, &cm, &self.ctx.elevation)?, est))
    }
}

impl LinkCorrelator for ImageLinkCorrelator<'_> {
    fn correlate(&mut self, current: usize, reference: usize, _link: Link) -> Result<ShiftEstimate> {
        let snap = self.frame(reference)?.snapshot.clone();
        Ok(self.measure(current, reference, &snap)?.1)
    }
}
