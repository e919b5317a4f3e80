//! Band-to-band registration of a multi-band frame against its reference band.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::ShiftEstimate;
use super::surface::Chip;
use crate::error::{Error, Result};
use crate::projection::{BandView, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BbrConfig {
    /// Chips per side of the square chip grid.
    pub chip_grid: usize,
    pub chip_size: usize,
    pub search_radius: usize,
}

impl Default for BbrConfig {
    fn default() -> Self {
        Self {
            chip_grid: 5,
            chip_size: 256,
            search_radius: 64,
        }
    }
}

impl BbrConfig {
    pub fn validate(&self, detector_pixels: usize) -> Result<()> {
        if self.chip_grid == 0 || self.chip_size > detector_pixels || 2 * self.search_radius >= self.chip_size {
            return Err(Error::Config(format!(
                "BBR chips of {} px with radius {} do not fit a {detector_pixels} px frame",
                self.chip_size, self.search_radius
            )));
        }
        Ok(())
    }

    /// Top-left corners of the chip grid, spread evenly over the frame.
    pub fn chip_origins(&self, detector_pixels: usize) -> Vec<(usize, usize)> {
        let span = (detector_pixels - self.chip_size) as f64;
        let at = |k: usize| (span * (k as f64 + 0.5) / self.chip_grid as f64).round() as usize;
        let mut out = Vec::with_capacity(self.chip_grid * self.chip_grid);
        for i in 0..self.chip_grid {
            for j in 0..self.chip_grid {
                out.push((at(i), at(j)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStatus {
    Reference,
    Corrected,
    /// Every chip was homogeneous or failed; the band is passed through unchanged.
    Uncorrectable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRegistration {
    pub band: usize,
    pub status: BandStatus,
    /// Combined displacement of the band relative to the reference band.
    pub estimate: Option<ShiftEstimate>,
    pub chips_used: usize,
    pub chips_rejected: usize,
    /// Shift applied when resampling, (line, pixel).
    pub applied: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct BbrResult {
    pub bands: Vec<Raster>,
    pub registrations: Vec<BandRegistration>,
}

/// Lower weighted median: the first value whose cumulative weight reaches half the total.
pub fn weighted_median(samples: &mut [(f64, f64)]) -> Option<f64> {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    if samples.is_empty() || !(total > 0.0) {
        return None;
    }
    let mut acc = 0.0;
    for &(v, w) in samples.iter() {
        acc += w;
        if acc >= total / 2.0 {
            return Some(v);
        }
    }
    samples.last().map(|s| s.0)
}

/// Displacement of each band relative to `reference_band`, without resampling.
pub fn estimate_band_shifts(bands: &[Raster], reference_band: usize, cfg: &BbrConfig) -> Result<Vec<BandRegistration>> {
    let reference = bands
        .get(reference_band)
        .ok_or_else(|| Error::Precondition(format!("reference band {reference_band} is missing")))?;
    let n = reference.width;
    if reference.height != n || bands.iter().any(|b| b.width != n || b.height != n) {
        return Err(Error::Precondition("bands must be square and of equal size".into()));
    }
    cfg.validate(n)?;
    let origins = cfg.chip_origins(n);
    let size = cfg.chip_size;
    let ref_view = BandView::of(reference, 0);
    let ref_chips: Vec<Option<Chip>> = origins
        .iter()
        .map(|&(r, c)| Chip::from_band(&ref_view, r as isize, c as isize, size, size))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..bands.len())
        .filter(|&b| b != reference_band)
        .flat_map(|b| (0..origins.len()).map(move |k| (b, k)))
        .collect();
    let results: Vec<(usize, Option<ShiftEstimate>)> = jobs
        .par_iter()
        .map(|&(b, k)| {
            let (r, c) = origins[k];
            let moving = Chip::from_band(&BandView::of(&bands[b], 0), r as isize, c as isize, size, size);
            let est = match (&ref_chips[k], moving) {
                (Some(a), Some(m)) => super::ncc_estimate(a, &m, cfg.search_radius).ok(),
                _ => None,
            };
            (b, est)
        })
        .collect();

    Ok((0..bands.len())
        .map(|band| {
            if band == reference_band {
                return BandRegistration {
                    band,
                    status: BandStatus::Reference,
                    estimate: Some(ShiftEstimate::new(0.0, 0.0, f64::from(u16::MAX))),
                    chips_used: 0,
                    chips_rejected: 0,
                    applied: (0.0, 0.0),
                };
            }
            let ests: Vec<ShiftEstimate> = results
                .iter()
                .filter(|(b, _)| *b == band)
                .filter_map(|(_, e)| *e)
                .collect();
            let rejected = origins.len() - ests.len();
            let mut lines: Vec<(f64, f64)> = ests.iter().map(|e| (e.d_line, e.confidence)).collect();
            let mut pixels: Vec<(f64, f64)> = ests.iter().map(|e| (e.d_pixel, e.confidence)).collect();
            let mut conf: Vec<(f64, f64)> = ests.iter().map(|e| (e.confidence, 1.0)).collect();
            match (
                weighted_median(&mut lines),
                weighted_median(&mut pixels),
                weighted_median(&mut conf),
            ) {
                (Some(dl), Some(dp), Some(c)) => BandRegistration {
                    band,
                    status: BandStatus::Corrected,
                    estimate: Some(ShiftEstimate::new(dl, dp, c)),
                    chips_used: ests.len(),
                    chips_rejected: rejected,
                    applied: (dl, dp),
                },
                _ => BandRegistration {
                    band,
                    status: BandStatus::Uncorrectable,
                    estimate: None,
                    chips_used: 0,
                    chips_rejected: rejected,
                    applied: (0.0, 0.0),
                },
            }
        })
        .collect())
}

/// `out(p) = band(p + d)`: moves content displaced by `d` back onto the reference grid.
pub fn shift_band(band: &Raster, d_line: f64, d_pixel: f64) -> Raster {
    let view = BandView::of(band, 0);
    let mut out = Raster::nodata_filled(band.width, band.height, 1);
    out.nodata = band.nodata;
    out.geotransform = band.geotransform;
    out.lcc = band.lcc;
    let w = band.width;
    out.data.par_chunks_mut(w).enumerate().for_each(|(r, line)| {
        for (c, o) in line.iter_mut().enumerate() {
            if let Some(v) = view.sample(r as f64 + d_line, c as f64 + d_pixel, None) {
                *o = v;
            }
        }
    });
    out
}

/// Estimates every band's shift against the reference band and resamples it away.
pub fn bbr_estimate_and_correct(bands: &[Raster], reference_band: usize, cfg: &BbrConfig) -> Result<BbrResult> {
    let registrations = estimate_band_shifts(bands, reference_band, cfg)?;
    let corrected = registrations
        .iter()
        .zip(bands)
        .map(|(reg, band)| match reg.status {
            BandStatus::Corrected => shift_band(band, reg.applied.0, reg.applied.1),
            _ => band.clone(),
        })
        .collect();
    Ok(BbrResult {
        bands: corrected,
        registrations,
    })
}
