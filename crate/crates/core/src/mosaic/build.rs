//! Per-frame correction against the chosen references and compositing onto one grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chips::{FrameLinks, ImageLinkCorrelator};
use super::plan::{Link, RefPlan};
use super::{FramePointing, MosaicConfig};
use crate::error::{Error, Result};
use crate::geomodel::{GeometrySnapshot, SensorModel};
use crate::projection::{
    footprint_bbox, georeference_window, BandMapping, BandView, MapGrid, Raster, ResampleStats, DEFAULT_NODE_STEP,
};
use crate::registration::ShiftEstimate;
use crate::resection::{resect, ParamSelection, ResectionConfig, ResectionContext};
use crate::simulator::Frame;

/// One frame as handed to the mosaicker.
#[derive(Debug, Clone)]
pub struct MosaicFrame<'a> {
    pub id: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    pub bands: &'a [Raster],
    /// Uncorrected geometry per band.
    pub snapshots: &'a [GeometrySnapshot],
    /// Band-to-band corrections (line, pixel) added to each band's source position.
    pub band_offsets: Vec<(f64, f64)>,
}

impl<'a> MosaicFrame<'a> {
    pub fn from_frame(frame: &'a Frame) -> Self {
        Self {
            id: frame.id,
            grid_row: frame.grid_row,
            grid_col: frame.grid_col,
            bands: &frame.bands,
            snapshots: &frame.snapshots,
            band_offsets: vec![(0.0, 0.0); frame.bands.len()],
        }
    }

    fn check(&self, cfg: &MosaicConfig) -> Result<()> {
        let n = self.bands.len();
        if self.snapshots.len() != n || self.band_offsets.len() != n {
            return Err(Error::Precondition(format!(
                "frame {} has {n} bands but {} snapshots and {} offsets",
                self.id,
                self.snapshots.len(),
                self.band_offsets.len()
            )));
        }
        cfg.validate(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOutcome {
    Corrected,
    /// No reference: georeferenced with uncorrected geometry.
    SystemOnly,
    /// A reference was planned but the correction failed; uncorrected geometry is used.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: usize,
    pub link: Option<Link>,
    pub reference: Option<usize>,
    pub outcome: FrameOutcome,
    /// Shift against the corrected reference before resection.
    pub shift: Option<ShiftEstimate>,
    pub initial_rms_m: Option<f64>,
    pub final_rms_m: Option<f64>,
    pub iterations: Option<usize>,
    pub mirrorcube_roll: f64,
    pub mirrorcube_pitch: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicReport {
    pub frames: Vec<FrameReport>,
    pub system_only: Vec<usize>,
    pub failed: Vec<usize>,
    pub grid_x0: f64,
    pub grid_y0: f64,
    pub gsd_m: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone)]
pub struct MosaicOutput {
    pub mosaic: Raster,
    pub report: MosaicReport,
    /// Geometry of the link band of each frame after correction.
    pub corrected: Vec<GeometrySnapshot>,
    /// Each frame on its own footprint grid, before compositing.
    pub georeferenced: Vec<Raster>,
}

/// Copies the adjusted cube angles of `link` into a band snapshot of the same frame.
fn with_alignment_of(band: &GeometrySnapshot, link: &GeometrySnapshot) -> GeometrySnapshot {
    let mut s = band.clone();
    s.alignment.mirrorcube_to_instr_roll = link.alignment.mirrorcube_to_instr_roll;
    s.alignment.mirrorcube_to_instr_pitch = link.alignment.mirrorcube_to_instr_pitch;
    s
}

/// Georeferences the configured bands of every frame once, each onto the cell-aligned
/// grid of its link-band footprint. `link_snapshots` carries the geometry to use for the
/// link band of each frame; its cube angles are applied to all bands of the frame.
pub fn georeference_frames(
    frames: &[MosaicFrame<'_>],
    link_snapshots: &[GeometrySnapshot],
    ctx: &ResectionContext,
    cfg: &MosaicConfig,
    stats: Option<&ResampleStats>,
) -> Result<Vec<Raster>> {
    if frames.len() != link_snapshots.len() {
        return Err(Error::Precondition("one link snapshot per frame is required".into()));
    }
    frames
        .iter()
        .zip(link_snapshots)
        .map(|(f, link)| {
            f.check(cfg)?;
            let link_model = SensorModel::new(link, &ctx.camera)?;
            let (x0, y0, x1, y1) = footprint_bbox(&link_model, &ctx.lcc, &ctx.elevation)?;
            let grid = MapGrid::aligned(x0, y0, x1, y1, cfg.gsd_m)?;
            let mut out = Raster::nodata_filled(grid.width, grid.height, cfg.bands.len());
            out.nodata = f.bands[cfg.bands[0]].nodata;
            out.geotransform = Some(grid.transform);
            out.lcc = Some(*ctx.lcc.params());
            for (k, &b) in cfg.bands.iter().enumerate() {
                let model = SensorModel::new(&with_alignment_of(&f.snapshots[b], link), &ctx.camera)?;
                let mapping = BandMapping {
                    model: &model,
                    offset: f.band_offsets[b],
                };
                let band = georeference_window(
                    &BandView::of(&f.bands[b], 0),
                    &mapping,
                    &ctx.lcc,
                    &ctx.elevation,
                    &grid,
                    DEFAULT_NODE_STEP,
                    stats,
                );
                let nodata = out.nodata;
                out.band_mut(k).copy_from_slice(&band.data);
                if band.nodata != nodata {
                    for v in out.band_mut(k) {
                        if *v == band.nodata {
                            *v = nodata;
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect()
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

/// Distance in cells to the nearest invalid cell or raster edge, capped at `cap`.
fn inner_distance(valid: &[bool], w: usize, h: usize, cap: usize) -> Vec<u32> {
    let cap = cap as u32;
    let mut d = vec![0u32; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !valid[i] {
                continue;
            }
            let up = if r > 0 { d[i - w] } else { 0 };
            let left = if c > 0 { d[i - 1] } else { 0 };
            d[i] = (up.min(left) + 1).min(cap);
        }
    }
    for r in (0..h).rev() {
        for c in (0..w).rev() {
            let i = r * w + c;
            if !valid[i] {
                continue;
            }
            let down = if r + 1 < h { d[i + w] + 1 } else { 1 };
            let right = if c + 1 < w { d[i + 1] + 1 } else { 1 };
            d[i] = d[i].min(down).min(right);
        }
    }
    d
}

/// Composites georeferenced frames in order onto the union of their grids. A later frame
/// fills nodata and blends in over a ramp of `feather` cells from its own edge.
pub fn composite(frames: &[Raster], feather: usize) -> Result<Raster> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Precondition("nothing to composite".into()))?;
    let gsd = grid_of(first)?.gsd();
    let mut bounds = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for f in frames {
        let g = grid_of(f)?;
        if (g.gsd() - gsd).abs() > 1e-9 * gsd || f.bands != first.bands {
            return Err(Error::Precondition("frames differ in cell size or band count".into()));
        }
        let b = g.bounds();
        bounds = (
            bounds.0.min(b.0),
            bounds.1.min(b.1),
            bounds.2.max(b.2),
            bounds.3.max(b.3),
        );
    }
    let eps = 1e-6 * gsd;
    let grid = MapGrid::aligned(bounds.0 + eps, bounds.1 + eps, bounds.2 - eps, bounds.3 - eps, gsd)?;
    let mut out = Raster::nodata_filled(grid.width, grid.height, first.bands);
    out.nodata = first.nodata;
    out.geotransform = Some(grid.transform);
    out.lcc = first.lcc;
    let nodata = out.nodata;
    for f in frames {
        let g = grid_of(f)?;
        let (r0, c0) = g.offset_in(&grid);
        if r0 < 0 || c0 < 0 || r0 as usize + f.height > grid.height || c0 as usize + f.width > grid.width {
            return Err(Error::Internal("frame grid falls outside the mosaic grid".into()));
        }
        let (r0, c0) = (r0 as usize, c0 as usize);
        let valid: Vec<bool> = (0..f.width * f.height)
            .map(|i| (0..f.bands).all(|b| !f.is_nodata(f.band(b)[i])))
            .collect();
        let dist = inner_distance(&valid, f.width, f.height, feather.max(1));
        for b in 0..f.bands {
            let src = f.band(b);
            let (w, ow) = (f.width, grid.width);
            let dst = &mut out.band_mut(b)[r0 * ow..(r0 + f.height) * ow];
            dst.par_chunks_mut(ow).enumerate().for_each(|(r, line)| {
                for c in 0..w {
                    let i = r * w + c;
                    if !valid[i] {
                        continue;
                    }
                    let o = &mut line[c0 + c];
                    if *o == nodata || feather == 0 {
                        *o = src[i];
                    } else {
                        let t = (dist[i] as f32 / feather as f32).min(1.0);
                        *o = t * src[i] + (1.0 - t) * *o;
                    }
                }
            });
        }
    }
    Ok(out)
}

/// Corrects every frame against its planned reference and composites the result.
///
/// Per-frame failures are recorded in the report and the frame falls back to its
/// uncorrected geometry; only invalid input aborts.
pub fn build_mosaic(
    frames: &[MosaicFrame<'_>],
    pointings: &[FramePointing],
    plan: &RefPlan,
    ctx: &ResectionContext,
    cfg: &MosaicConfig,
    stats: Option<&ResampleStats>,
) -> Result<MosaicOutput> {
    if frames.len() != plan.entries.len() || frames.len() != pointings.len() {
        return Err(Error::Precondition(
            "plan, pointings and frames differ in length".into(),
        ));
    }
    for (i, f) in frames.iter().enumerate() {
        if f.id != i {
            return Err(Error::Precondition(format!("frame at position {i} has id {}", f.id)));
        }
        f.check(cfg)?;
    }
    plan.validate()?;
    let links: Vec<FrameLinks<'_>> = frames
        .iter()
        .zip(pointings)
        .map(|(f, p)| FrameLinks {
            band: &f.bands[cfg.link_band],
            snapshot: f.snapshots[cfg.link_band].clone(),
            pointing: *p,
        })
        .collect();
    let correlator = ImageLinkCorrelator::new(links, ctx, cfg);
    let selection = ParamSelection::default();
    let mut corrected: Vec<Option<GeometrySnapshot>> = vec![None; frames.len()];
    let mut reports: Vec<Option<FrameReport>> = vec![None; frames.len()];

    for id in plan.processing_order()? {
        let entry = &plan.entries[id];
        let system = frames[id].snapshots[cfg.link_band].clone();
        let mut report = FrameReport {
            frame_id: id,
            link: entry.link(),
            reference: entry.reference,
            outcome: FrameOutcome::SystemOnly,
            shift: None,
            initial_rms_m: None,
            final_rms_m: None,
            iterations: None,
            mirrorcube_roll: system.alignment.mirrorcube_to_instr_roll,
            mirrorcube_pitch: system.alignment.mirrorcube_to_instr_pitch,
            error: None,
        };
        let snap = match entry.reference {
            None => system,
            Some(r) => {
                let ref_snap = corrected[r]
                    .clone()
                    .ok_or_else(|| Error::Internal(format!("reference {r} of frame {id} is not settled")))?;
                let attempt = correlator.correspondences(id, r, &ref_snap).and_then(|(corrs, est)| {
                    report.shift = Some(est);
                    if corrs.is_empty() {
                        return Err(Error::Domain(format!(
                            "shift against frame {r} is no longer confident (ratio {:.2})",
                            est.confidence
                        )));
                    }
                    resect(&system, &corrs, &selection, ctx, &ResectionConfig::default())
                });
                match attempt {
                    Ok(res) => {
                        report.outcome = FrameOutcome::Corrected;
                        report.initial_rms_m = Some(res.initial_rms_m);
                        report.final_rms_m = Some(res.final_rms_m);
                        report.iterations = Some(res.iterations);
                        let s = res.snapshots[0].clone();
                        report.mirrorcube_roll = s.alignment.mirrorcube_to_instr_roll;
                        report.mirrorcube_pitch = s.alignment.mirrorcube_to_instr_pitch;
                        s
                    }
                    Err(e) => {
                        log::warn!("frame {id}: correction against frame {r} failed: {e}");
                        report.outcome = FrameOutcome::Failed;
                        report.error = Some(e.to_string());
                        system
                    }
                }
            }
        };
        corrected[id] = Some(snap);
        reports[id] = Some(report);
    }

    let corrected: Vec<GeometrySnapshot> = corrected.into_iter().map(Option::unwrap).collect();
    let georeferenced = georeference_frames(frames, &corrected, ctx, cfg, stats)?;
    let mosaic = composite(&georeferenced, cfg.feather_px)?;
    let frames_report: Vec<FrameReport> = reports.into_iter().map(Option::unwrap).collect();
    let pick = |o: FrameOutcome| {
        frames_report
            .iter()
            .filter(|r| r.outcome == o)
            .map(|r| r.frame_id)
            .collect::<Vec<_>>()
    };
    let t = mosaic.geotransform.expect("composite output is georeferenced");
    let report = MosaicReport {
        system_only: pick(FrameOutcome::SystemOnly),
        failed: pick(FrameOutcome::Failed),
        frames: frames_report,
        grid_x0: t.x0,
        grid_y0: t.y0,
        gsd_m: t.dx,
        width: mosaic.width,
        height: mosaic.height,
    };
    Ok(MosaicOutput {
        mosaic,
        report,
        corrected,
        georeferenced,
    })
}

/// The link-band geometry of each frame without correction.
pub fn system_snapshots(frames: &[MosaicFrame<'_>], cfg: &MosaicConfig) -> Vec<GeometrySnapshot> {
    frames.iter().map(|f| f.snapshots[cfg.link_band].clone()).collect()
}
