//! Single-pass georeferencing of frame bands onto an LCC map grid.

use rayon::prelude::*;

use super::elevation::ElevationSource;
use super::lcc::{Lcc, LccParams};
use super::raster::{GeoTransform, Raster};
use super::resample::{BandView, ResampleStats};
use crate::error::{Error, Result};
use crate::geomodel::{CameraConstants, GeometrySnapshot, SensorModel};

/// Default spacing, in output cells, of the exactly computed mapping nodes.
pub const DEFAULT_NODE_STEP: usize = 16;
const PERIMETER_SAMPLES: usize = 32;

/// A north-up grid of square cells in LCC metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGrid {
    pub transform: GeoTransform,
    pub width: usize,
    pub height: usize,
}

impl MapGrid {
    /// Smallest grid with cell edges on multiples of `gsd` covering the box, so that
    /// grids built independently for different frames share cell centres.
    pub fn aligned(xmin: f64, ymin: f64, xmax: f64, ymax: f64, gsd: f64) -> Result<Self> {
        if !(gsd > 0.0) || !(xmax >= xmin && ymax >= ymin) {
            return Err(Error::Domain(format!(
                "invalid map box [{xmin}, {xmax}] x [{ymin}, {ymax}] at {gsd} m"
            )));
        }
        let x0 = (xmin / gsd).floor() * gsd;
        let y0 = (ymax / gsd).ceil() * gsd;
        let width = (((xmax - x0) / gsd).ceil() as usize).max(1);
        let height = (((y0 - ymin) / gsd).ceil() as usize).max(1);
        Ok(Self {
            transform: GeoTransform {
                x0,
                y0,
                dx: gsd,
                dy: -gsd,
            },
            width,
            height,
        })
    }

    pub fn gsd(&self) -> f64 {
        self.transform.dx
    }

    /// Map bounds (xmin, ymin, xmax, ymax) of the cell edges.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let t = &self.transform;
        (
            t.x0,
            t.y0 + self.height as f64 * t.dy,
            t.x0 + self.width as f64 * t.dx,
            t.y0,
        )
    }

    /// Cell offset (row, col) of this grid's origin inside `outer`, which must share the
    /// cell size and alignment.
    pub fn offset_in(&self, outer: &MapGrid) -> (isize, isize) {
        let g = self.gsd();
        (
            ((outer.transform.y0 - self.transform.y0) / g).round() as isize,
            ((self.transform.x0 - outer.transform.x0) / g).round() as isize,
        )
    }

    /// Part of this grid that also lies inside `other`.
    pub fn intersection(&self, other: &MapGrid) -> Option<MapGrid> {
        let (ax0, ay0, ax1, ay1) = self.bounds();
        let (bx0, by0, bx1, by1) = other.bounds();
        let (x0, y0, x1, y1) = (ax0.max(bx0), ay0.max(by0), ax1.min(bx1), ay1.min(by1));
        let g = self.gsd();
        if x1 - x0 < 0.5 * g || y1 - y0 < 0.5 * g {
            return None;
        }
        MapGrid::aligned(x0 + 1e-6 * g, y0 + 1e-6 * g, x1 - 1e-6 * g, y1 - 1e-6 * g, g).ok()
    }
}

/// Ground → source-pixel map of one band: the sensor model of the band plus a constant
/// detector offset (a band-to-band registration correction).
#[derive(Debug, Clone, Copy)]
pub struct BandMapping<'a> {
    pub model: &'a SensorModel,
    pub offset: (f64, f64),
}

impl<'a> BandMapping<'a> {
    pub fn new(model: &'a SensorModel) -> Self {
        Self {
            model,
            offset: (0.0, 0.0),
        }
    }

    fn pixel_of(&self, lcc: &Lcc, elev: &ElevationSource, x: f64, y: f64) -> Option<(f64, f64)> {
        let mut g = lcc.inverse(x, y).ok()?;
        g.height = elev.height_at(g.lat, g.lon);
        let (r, c) = self.model.ground_to_pixel_unbounded(&g).ok()?;
        Some((r + self.offset.0, c + self.offset.1))
    }
}

/// LCC box of the detector footprint, from geolocated perimeter samples.
pub fn footprint_bbox(model: &SensorModel, lcc: &Lcc, elev: &ElevationSource) -> Result<(f64, f64, f64, f64)> {
    let n = model.camera().detector_pixels as f64;
    let (lo, hi) = (-0.5, n - 0.5);
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..=PERIMETER_SAMPLES {
        let s = lo + (hi - lo) * k as f64 / PERIMETER_SAMPLES as f64;
        for (r, c) in [(lo, s), (hi, s), (s, lo), (s, hi)] {
            let g = model.geolocate_unchecked(r, c, elev)?;
            let (x, y) = lcc.forward(&g)?;
            b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
        }
    }
    Ok(b)
}

pub fn footprint_grid(model: &SensorModel, lcc: &Lcc, gsd: f64, elev: &ElevationSource) -> Result<MapGrid> {
    let (x0, y0, x1, y1) = footprint_bbox(model, lcc, elev)?;
    MapGrid::aligned(x0, y0, x1, y1, gsd)
}

/// Source-pixel coordinates computed exactly on a sparse node lattice and bilinearly
/// interpolated in between.
pub struct PixelLocator {
    step: usize,
    node_cols: usize,
    nodes: Vec<Option<(f64, f64)>>,
}

impl PixelLocator {
    pub fn new(mapping: &BandMapping<'_>, lcc: &Lcc, elev: &ElevationSource, grid: &MapGrid, step: usize) -> Self {
        let step = step.max(1);
        let node_rows = (grid.height.saturating_sub(1)).div_ceil(step) + 1;
        let node_cols = (grid.width.saturating_sub(1)).div_ceil(step) + 1;
        let t = grid.transform;
        let nodes = (0..node_rows * node_cols)
            .into_par_iter()
            .map(|i| {
                let (nr, nc) = (i / node_cols, i % node_cols);
                let x = t.x0 + ((nc * step) as f64 + 0.5) * t.dx;
                let y = t.y0 + ((nr * step) as f64 + 0.5) * t.dy;
                mapping.pixel_of(lcc, elev, x, y)
            })
            .collect();
        Self { step, node_cols, nodes }
    }

    pub fn pixel_at(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let (nr, fr) = (row / self.step, (row % self.step) as f64 / self.step as f64);
        let (nc, fc) = (col / self.step, (col % self.step) as f64 / self.step as f64);
        let node = |r: usize, c: usize| self.nodes.get(r * self.node_cols + c).copied().flatten();
        let p00 = node(nr, nc)?;
        if fr == 0.0 && fc == 0.0 {
            return Some(p00);
        }
        let p01 = if fc > 0.0 { node(nr, nc + 1)? } else { p00 };
        let p10 = if fr > 0.0 { node(nr + 1, nc)? } else { p00 };
        let p11 = if fr > 0.0 && fc > 0.0 {
            node(nr + 1, nc + 1)?
        } else if fr > 0.0 {
            p10
        } else {
            p01
        };
        let lerp =
            |a: f64, b: f64, c: f64, d: f64| (1.0 - fr) * ((1.0 - fc) * a + fc * b) + fr * ((1.0 - fc) * c + fc * d);
        Some((lerp(p00.0, p01.0, p10.0, p11.0), lerp(p00.1, p01.1, p10.1, p11.1)))
    }
}

/// Resamples one band onto `grid`; cells whose source position falls off the detector
/// are nodata. Each valid output cell costs exactly one bicubic interpolation.
pub fn georeference_window(
    src: &BandView<'_>,
    mapping: &BandMapping<'_>,
    lcc: &Lcc,
    elev: &ElevationSource,
    grid: &MapGrid,
    node_step: usize,
    stats: Option<&ResampleStats>,
) -> Raster {
    let locator = PixelLocator::new(mapping, lcc, elev, grid, node_step);
    let mut out = Raster::nodata_filled(grid.width, grid.height, 1);
    out.nodata = src.nodata;
    out.geotransform = Some(grid.transform);
    out.lcc = Some(*lcc.params());
    let nodata = src.nodata;
    out.data.par_chunks_mut(grid.width).enumerate().for_each(|(r, line)| {
        for (c, o) in line.iter_mut().enumerate() {
            *o = locator
                .pixel_at(r, c)
                .and_then(|(pr, pc)| src.sample(pr, pc, stats))
                .unwrap_or(nodata);
        }
    });
    out
}

/// Georeferences one band of a frame onto a footprint-aligned grid at `gsd_m`.
pub fn georeference_frame(
    band: &Raster,
    snap: &GeometrySnapshot,
    camera: &CameraConstants,
    lcc: &LccParams,
    gsd_m: f64,
    elev: &ElevationSource,
) -> Result<Raster> {
    if band.width != camera.detector_pixels || band.height != camera.detector_pixels {
        return Err(Error::Precondition(format!(
            "band is {}x{}, detector is {2}x{2}",
            band.width, band.height, camera.detector_pixels
        )));
    }
    let model = SensorModel::new(snap, camera)?;
    let lcc = Lcc::new(*lcc)?;
    let grid = footprint_grid(&model, &lcc, gsd_m, elev)?;
    Ok(georeference_window(
        &BandView::of(band, 0),
        &BandMapping::new(&model),
        &lcc,
        elev,
        &grid,
        DEFAULT_NODE_STEP,
        None,
    ))
}
