//! Keys cubic-convolution resampling.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use super::raster::Raster;

/// Keys kernel parameter.
pub const KEYS_A: f64 = -0.5;

pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Weights of the four taps at offsets -1, 0, 1, 2 for a fractional phase in [0, 1).
pub fn keys_weights(phase: f64) -> [f64; 4] {
    [
        keys_kernel(phase + 1.0),
        keys_kernel(phase),
        keys_kernel(1.0 - phase),
        keys_kernel(2.0 - phase),
    ]
}

/// Counts interpolation work so tests can assert how often each output pixel was resampled.
#[derive(Debug, Default)]
pub struct ResampleStats {
    pub interpolations: AtomicU64,
    pub source_reads: AtomicU64,
}

impl ResampleStats {
    pub fn interpolations(&self) -> u64 {
        self.interpolations.load(Ordering::Relaxed)
    }

    pub fn source_reads(&self) -> u64 {
        self.source_reads.load(Ordering::Relaxed)
    }
}

/// A single-band view of source samples.
#[derive(Debug, Clone, Copy)]
pub struct BandView<'a> {
    pub data: &'a [f32],
    pub width: usize,
    pub height: usize,
    pub nodata: f32,
}

impl<'a> BandView<'a> {
    pub fn of(r: &'a Raster, band: usize) -> Self {
        Self {
            data: r.band(band),
            width: r.width,
            height: r.height,
            nodata: r.nodata,
        }
    }

    /// Bicubic sample at a fractional (row, col); `None` outside the source or where a
    /// contributing tap is nodata. Taps beyond the border replicate the edge sample.
    pub fn sample(&self, row: f64, col: f64, stats: Option<&ResampleStats>) -> Option<f32> {
        let (h, w) = (self.height as f64, self.width as f64);
        if !(row >= -0.5 && row <= h - 0.5 && col >= -0.5 && col <= w - 0.5) {
            return None;
        }
        let r0 = row.floor();
        let c0 = col.floor();
        let wr = keys_weights(row - r0);
        let wc = keys_weights(col - c0);
        let (r0, c0) = (r0 as isize, c0 as isize);
        let clamp_r = |r: isize| r.clamp(0, self.height as isize - 1) as usize;
        let clamp_c = |c: isize| c.clamp(0, self.width as isize - 1) as usize;
        let mut acc = 0.0;
        for (i, wri) in wr.iter().enumerate() {
            let rr = clamp_r(r0 - 1 + i as isize);
            let line = &self.data[rr * self.width..(rr + 1) * self.width];
            let mut s = 0.0;
            for (j, wcj) in wc.iter().enumerate() {
                let v = line[clamp_c(c0 - 1 + j as isize)];
                if v == self.nodata || v.is_nan() {
                    return None;
                }
                s += wcj * v as f64;
            }
            acc += wri * s;
        }
        if let Some(st) = stats {
            st.interpolations.fetch_add(1, Ordering::Relaxed);
            st.source_reads.fetch_add(16, Ordering::Relaxed);
        }
        Some(acc as f32)
    }
}

/// Resamples every band of `src` at the given sample positions (one output pixel per
/// entry, laid out as `out_height` rows of `out_width`).
pub fn resample_bicubic(
    src: &Raster,
    sample_rows: &[f64],
    sample_cols: &[f64],
    out_width: usize,
    out_height: usize,
) -> Raster {
    assert_eq!(sample_rows.len(), out_width * out_height);
    assert_eq!(sample_cols.len(), out_width * out_height);
    let mut out = Raster::nodata_filled(out_width, out_height, src.bands);
    out.nodata = src.nodata;
    for b in 0..src.bands {
        let view = BandView::of(src, b);
        let nodata = src.nodata;
        out.band_mut(b).par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = view.sample(sample_rows[i], sample_cols[i], None).unwrap_or(nodata);
        });
    }
    out
}
