//! Frame mosaicking: overlap prediction from mirror and platform angles, reference-frame
//! selection with backtracking, per-frame correction by resection against the chosen
//! reference, and single-resampling compositing onto a shared map grid.

mod build;
mod chips;
mod plan;
mod seam;

use serde::{Deserialize, Serialize};

pub use build::{
    build_mosaic, composite, georeference_frames, system_snapshots, FrameOutcome, FrameReport, MosaicFrame,
    MosaicOutput, MosaicReport,
};
pub use chips::{
    extract_overlap_chips, link_correspondences, side_of, strip_window, ChipPair, FrameLinks, ImageLinkCorrelator,
    Side, MIN_OVERLAP,
};
pub use plan::{select_references, Link, LinkCorrelator, RefEntry, RefPlan, ScriptedCorrelator};
pub use seam::{edge_shift, seam_metric, SeamEdge, SeamReport};

use crate::error::{Error, Result};
use crate::geomodel::{CameraConstants, GeometrySnapshot};
use crate::registration::CONFIDENCE_RATIO;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    East,
    West,
}

/// Pointing of one frame at acquisition, as known from telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePointing {
    pub frame_id: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    pub direction: ScanDirection,
    /// NS mirror angle from its reference position, degrees.
    pub m_roll: f64,
    /// EW mirror angle from its reference position, degrees.
    pub m_pitch: f64,
    pub p_roll: f64,
    pub p_pitch: f64,
}

impl FramePointing {
    pub fn from_snapshot(
        frame_id: usize,
        grid_row: usize,
        grid_col: usize,
        direction: ScanDirection,
        snap: &GeometrySnapshot,
        camera: &CameraConstants,
    ) -> Self {
        let lsb = camera.encoder_lsb_deg;
        Self {
            frame_id,
            grid_row,
            grid_col,
            direction,
            m_roll: snap.encoder.ns_counts as f64 * lsb - snap.alignment.ns_ref_angle,
            m_pitch: snap.encoder.ew_counts as f64 * lsb - snap.alignment.ew_ref_angle,
            p_roll: snap.attitude.roll,
            p_pitch: snap.attitude.pitch,
        }
    }
}

/// Pointings for frames given in acquisition order as (id, grid row, grid col, snapshot).
/// The scan direction of a frame follows from its same-row neighbours in that order.
pub fn frame_pointings(
    frames: &[(usize, usize, usize, &GeometrySnapshot)],
    camera: &CameraConstants,
) -> Result<Vec<FramePointing>> {
    for (i, a) in frames.iter().enumerate() {
        if frames[..i].iter().any(|b| (b.1, b.2) == (a.1, a.2)) {
            return Err(Error::Precondition(format!(
                "grid position ({}, {}) is used twice",
                a.1, a.2
            )));
        }
    }
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, &(id, row, col, snap))| {
            let prev = i.checked_sub(1).map(|k| frames[k]).filter(|f| f.1 == row);
            let next = frames.get(i + 1).copied().filter(|f| f.1 == row);
            let direction = match (prev, next) {
                (Some(p), _) if p.2 > col => ScanDirection::West,
                (None, Some(n)) if n.2 < col => ScanDirection::West,
                _ => ScanDirection::East,
            };
            FramePointing::from_snapshot(id, row, col, direction, snap, camera)
        })
        .collect())
}

/// How the NS term of the up-overlap prediction is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Mirror angle differences scaled by each axis's ground gain.
    #[default]
    Consistent,
    /// A factor of 2 on both axes.
    Literal,
}

/// Platform term: ground motion of a platform rotation as a fraction of the frame.
fn platform_term(dp_deg: f64, camera: &CameraConstants) -> f64 {
    dp_deg.abs().to_radians().tan() * camera.altitude_km / camera.igfov_km
}

/// Predicted overlap of `curr` with the frame acquired before it on the same row.
pub fn overlap_with_previous(curr: &FramePointing, prev: &FramePointing, camera: &CameraConstants) -> Result<f64> {
    if curr.grid_row != prev.grid_row || curr.grid_col.abs_diff(prev.grid_col) != 1 {
        return Err(Error::Domain(format!(
            "frames {} and {} are not horizontal neighbours",
            curr.frame_id, prev.frame_id
        )));
    }
    let ground = camera.ew_ground_gain * (curr.m_pitch - prev.m_pitch).abs();
    let over = 1.0 - ground / camera.fov_deg + platform_term(curr.p_pitch - prev.p_pitch, camera);
    Ok(over.clamp(0.0, 1.0))
}

/// Predicted overlap of `curr` with the frame above it, and the value before clamping.
pub fn overlap_with_up_unclamped(
    curr: &FramePointing,
    up: &FramePointing,
    camera: &CameraConstants,
    mode: OverlapMode,
) -> Result<f64> {
    if curr.grid_col != up.grid_col || curr.grid_row.abs_diff(up.grid_row) != 1 {
        return Err(Error::Domain(format!(
            "frames {} and {} are not vertical neighbours",
            curr.frame_id, up.frame_id
        )));
    }
    let gain = match mode {
        OverlapMode::Consistent => camera.ns_ground_gain,
        OverlapMode::Literal => 2.0,
    };
    let ground = gain * (curr.m_roll - up.m_roll).abs();
    Ok(1.0 - ground / camera.fov_deg + platform_term(curr.p_roll - up.p_roll, camera))
}

pub fn overlap_with_up(
    curr: &FramePointing,
    up: &FramePointing,
    camera: &CameraConstants,
    mode: OverlapMode,
) -> Result<f64> {
    Ok(overlap_with_up_unclamped(curr, up, camera, mode)?.clamp(0.0, 1.0))
}

/// Overlap of two grid neighbours, whichever axis they share.
pub fn predicted_overlap(
    a: &FramePointing,
    b: &FramePointing,
    camera: &CameraConstants,
    mode: OverlapMode,
) -> Result<f64> {
    if a.grid_row == b.grid_row {
        overlap_with_previous(a, b, camera)
    } else {
        overlap_with_up(a, b, camera, mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MosaicConfig {
    /// Output cell size, metres.
    pub gsd_m: f64,
    /// Minimum first-to-second peak ratio for a trusted link.
    pub confidence_ratio: f64,
    pub overlap_mode: OverlapMode,
    /// Width of the blending ramp where frames overlap, output cells.
    pub feather_px: usize,
    /// Band used for linking frames.
    pub link_band: usize,
    /// Bands written to the mosaic.
    pub bands: Vec<usize>,
}

impl Default for MosaicConfig {
    fn default() -> Self {
        Self {
            gsd_m: 100.0,
            confidence_ratio: CONFIDENCE_RATIO,
            overlap_mode: OverlapMode::Consistent,
            feather_px: 32,
            link_band: 2,
            bands: vec![2],
        }
    }
}

impl MosaicConfig {
    pub fn validate(&self, band_count: usize) -> Result<()> {
        if !(self.gsd_m > 0.0 && self.gsd_m.is_finite()) {
            return Err(Error::Config(format!("gsd_m {} must be positive", self.gsd_m)));
        }
        if !(self.confidence_ratio >= 1.0) {
            return Err(Error::Config("confidence_ratio must be at least 1".into()));
        }
        if self.bands.is_empty() {
            return Err(Error::Config("no bands selected for the mosaic".into()));
        }
        if let Some(b) = self.bands.iter().chain([&self.link_band]).find(|b| **b >= band_count) {
            return Err(Error::Config(format!("band {b} does not exist ({band_count} bands)")));
        }
        Ok(())
    }
}
