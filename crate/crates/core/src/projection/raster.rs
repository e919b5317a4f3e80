//! In-memory raster and its on-disk form: raw little-endian f32 band-sequential samples
//! next to a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::lcc::LccParams;
use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f32 = -9999.0;

/// Upper-left corner and cell size of a north-up map grid, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoTransform {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl GeoTransform {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dy < 0.0) {
            return Err(Error::Domain(format!(
                "geotransform must be north-up (dx > 0, dy < 0), got dx={} dy={}",
                self.dx, self.dy
            )));
        }
        Ok(())
    }

    /// Map coordinates of a cell centre.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x0 + (col as f64 + 0.5) * self.dx,
            self.y0 + (row as f64 + 0.5) * self.dy,
        )
    }

    /// Fractional (row, col) of a map coordinate, cell centres at integers.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((y - self.y0) / self.dy - 0.5, (x - self.x0) / self.dx - 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub data: Vec<f32>,
    pub nodata: f32,
    pub geotransform: Option<GeoTransform>,
    pub lcc: Option<LccParams>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    width: usize,
    height: usize,
    bands: usize,
    nodata: f32,
    sample_format: String,
    #[serde(default)]
    geotransform: Option<GeoTransform>,
    #[serde(default)]
    lcc: Option<LccParams>,
}

impl Raster {
    pub fn new(width: usize, height: usize, bands: usize, fill: f32) -> Self {
        Self {
            width,
            height,
            bands,
            data: vec![fill; width * height * bands],
            nodata: DEFAULT_NODATA,
            geotransform: None,
            lcc: None,
        }
    }

    pub fn nodata_filled(width: usize, height: usize, bands: usize) -> Self {
        Self::new(width, height, bands, DEFAULT_NODATA)
    }

    pub fn from_band(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Domain(format!(
                "band of {} samples does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bands: 1,
            data,
            nodata: DEFAULT_NODATA,
            geotransform: None,
            lcc: None,
        })
    }

    pub fn band_len(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.band_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.band_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.band_len() + row * self.width + col]
    }

    pub fn set(&mut self, band: usize, row: usize, col: usize, v: f32) {
        let n = self.band_len();
        self.data[band * n + row * self.width + col] = v;
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Copies one band into a new single-band raster with the same georeferencing.
    pub fn extract_band(&self, b: usize) -> Raster {
        Raster {
            bands: 1,
            data: self.band(b).to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            bands: 0,
            data: Vec::new(),
            nodata: self.nodata,
            geotransform: self.geotransform,
            lcc: self.lcc,
        }
    }

    fn paths(base: &Path) -> (PathBuf, PathBuf) {
        (base.with_extension("raw"), base.with_extension("json"))
    }

    /// Writes `<base>.raw` and `<base>.json`.
    pub fn write(&self, base: &Path) -> Result<()> {
        if let Some(gt) = &self.geotransform {
            gt.validate()?;
        }
        let (raw, json) = Self::paths(base);
        let mut w = BufWriter::new(File::create(&raw).map_err(|e| Error::io(&raw, e))?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&raw, e))?;
        }
        w.flush().map_err(|e| Error::io(&raw, e))?;
        let sidecar = Sidecar {
            width: self.width,
            height: self.height,
            bands: self.bands,
            nodata: self.nodata,
            sample_format: "f32le".into(),
            geotransform: self.geotransform,
            lcc: self.lcc,
        };
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&json, e))?;
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    /// Reads a raster given either member of the `.raw`/`.json` pair.
    pub fn read(base: &Path) -> Result<Self> {
        let (raw, json) = Self::paths(base);
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&json, e))?;
        if s.sample_format != "f32le" {
            return Err(Error::Config(format!(
                "unsupported sample format {} in {}",
                s.sample_format,
                json.display()
            )));
        }
        let n = s.width * s.height * s.bands;
        let mut bytes = Vec::with_capacity(n * 4);
        BufReader::new(File::open(&raw).map_err(|e| Error::io(&raw, e))?)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(&raw, e))?;
        if bytes.len() != n * 4 {
            return Err(Error::Config(format!(
                "{} holds {} bytes, sidecar implies {}",
                raw.display(),
                bytes.len(),
                n * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width: s.width,
            height: s.height,
            bands: s.bands,
            data,
            nodata: s.nodata,
            geotransform: s.geotransform,
            lcc: s.lcc,
        })
    }

    /// 8-bit quicklook with a linear stretch between the `stretch_percent` and
    /// `100 - stretch_percent` percentiles of valid samples. One band gives grey, three RGB.
    pub fn write_png(&self, path: &Path, bands: &[usize], stretch_percent: f64) -> Result<()> {
        if !(bands.len() == 1 || bands.len() == 3) || bands.iter().any(|b| *b >= self.bands) {
            return Err(Error::Domain(format!(
                "quicklook needs one or three valid band indices, got {bands:?}"
            )));
        }
        let stretches: Vec<(f32, f32)> = bands
            .iter()
            .map(|&b| self.percentile_range(b, stretch_percent))
            .collect();
        let mut pixels = Vec::with_capacity(self.band_len() * bands.len());
        for i in 0..self.band_len() {
            for (k, &b) in bands.iter().enumerate() {
                let v = self.band(b)[i];
                let (lo, hi) = stretches[k];
                let byte = if self.is_nodata(v) {
                    0
                } else {
                    (((v - lo) / (hi - lo).max(f32::EPSILON)).clamp(0.0, 1.0) * 254.0 + 1.0) as u8
                };
                pixels.push(byte);
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(if bands.len() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
        let mut writer = enc.write_header().map_err(to_io)?;
        writer.write_image_data(&pixels).map_err(to_io)
    }

    fn percentile_range(&self, band: usize, percent: f64) -> (f32, f32) {
        let mut valid: Vec<f32> = self
            .band(band)
            .iter()
            .copied()
            .filter(|v| !self.is_nodata(*v))
            .collect();
        if valid.is_empty() {
            return (0.0, 1.0);
        }
        valid.sort_by(f32::total_cmp);
        let at = |p: f64| valid[((p / 100.0) * (valid.len() - 1) as f64).round() as usize];
        (at(percent), at(100.0 - percent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Raster::new(5, 3, 2, 0.0);
        for (i, v) in r.data.iter_mut().enumerate() {
            *v = i as f32 * 0.5 - 3.0;
        }
        r.geotransform = Some(GeoTransform {
            x0: -1000.0,
            y0: 2000.0,
            dx: 100.0,
            dy: -100.0,
        });
        r.lcc = Some(LccParams::default());
        let base = dir.path().join("img");
        r.write(&base).unwrap();
        let back = Raster::read(&dir.path().join("img.json")).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rejects_south_up_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Raster::new(2, 2, 1, 1.0);
        r.geotransform = Some(GeoTransform {
            x0: 0.0,
            y0: 0.0,
            dx: 1.0,
            dy: 1.0,
        });
        assert!(r.write(&dir.path().join("a")).is_err());
        r.geotransform = None;
        r.write(&dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("b.raw"), [0u8; 7]).unwrap();
        assert!(Raster::read(&dir.path().join("b")).is_err());
    }

    #[test]
    fn cell_center_and_pixel_are_inverse() {
        let gt = GeoTransform {
            x0: 10.0,
            y0: 50.0,
            dx: 2.0,
            dy: -2.0,
        };
        let (x, y) = gt.cell_center(3, 4);
        assert_eq!((x, y), (19.0, 43.0));
        assert_eq!(gt.to_pixel(x, y), (3.0, 4.0));
    }

    #[test]
    fn png_quicklook() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Raster::new(16, 8, 3, 0.0);
        for (i, v) in r.data.iter_mut().enumerate() {
            *v = (i % 37) as f32;
        }
        r.set(0, 0, 0, DEFAULT_NODATA);
        let p = dir.path().join("q.png");
        r.write_png(&p, &[0, 1, 2], 2.0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
        assert!(r.write_png(&p, &[0, 1], 2.0).is_err());
    }
}
