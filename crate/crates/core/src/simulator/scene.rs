//! Ground scenes the simulator images: a seeded fractal value-noise field or a
//! georeferenced raster, both addressed in LCC metres, with optional flat "cloud" polygons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{BandView, Raster};

/// Sum of value-noise octaves; octave `k` has wavelength `base_wavelength_m / 2^k` and
/// amplitude `persistence^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FractalTexture {
    pub seed: u64,
    pub base_wavelength_m: f64,
    pub octaves: u32,
    pub persistence: f64,
    pub mean: f64,
    pub amplitude: f64,
}

impl Default for FractalTexture {
    fn default() -> Self {
        Self {
            seed: 1,
            base_wavelength_m: 20_480.0,
            octaves: 8,
            persistence: 0.7,
            mean: 100.0,
            amplitude: 60.0,
        }
    }
}

fn hash2(ix: i64, iy: i64, salt: u64) -> f64 {
    // splitmix64 finaliser over the packed lattice coordinates
    let mut z = (ix as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        .wrapping_add(salt.wrapping_mul(0x1656_67B1_9E37_79F9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

impl FractalTexture {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_wavelength_m > 0.0 && self.persistence > 0.0 && self.octaves >= 1) {
            return Err(Error::Config(
                "fractal texture needs a positive wavelength, persistence and octave count".into(),
            ));
        }
        Ok(())
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut wavelength = self.base_wavelength_m;
        for k in 0..self.octaves {
            let (u, v) = (x / wavelength, y / wavelength);
            let (fx, fy) = (u.floor(), v.floor());
            let (ix, iy) = (fx as i64, fy as i64);
            let (tx, ty) = (fade(u - fx), fade(v - fy));
            let salt = self.seed.wrapping_mul(64).wrapping_add(k as u64);
            let a = hash2(ix, iy, salt);
            let b = hash2(ix + 1, iy, salt);
            let c = hash2(ix, iy + 1, salt);
            let d = hash2(ix + 1, iy + 1, salt);
            sum += amp * ((a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty);
            norm += amp;
            amp *= self.persistence;
            wavelength /= 2.0;
        }
        self.mean + self.amplitude * sum / norm
    }

    /// Rasterises the texture on a grid (for export or inspection).
    pub fn to_raster(&self, grid: &crate::projection::MapGrid) -> Raster {
        let mut r = Raster::new(grid.width, grid.height, 1, 0.0);
        r.geotransform = Some(grid.transform);
        for row in 0..grid.height {
            for col in 0..grid.width {
                let (x, y) = grid.transform.cell_center(row, col);
                r.set(0, row, col, self.value(x, y) as f32);
            }
        }
        r
    }
}

/// A polygon in LCC metres rendered at a constant value (a cloud or a featureless area).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatPatch {
    /// Vertices (x, y) in order; the polygon closes itself.
    pub vertices: Vec<(f64, f64)>,
    pub value: f64,
}

impl FlatPatch {
    pub fn rect(xmin: f64, ymin: f64, xmax: f64, ymax: f64, value: f64) -> Self {
        Self {
            vertices: vec![(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)],
            value,
        }
    }

    /// Even-odd rule.
    fn contains(&self, x: f64, y: f64) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            if (a.1 > y) != (b.1 > y) && x < a.0 + (y - a.1) / (b.1 - a.1) * (b.0 - a.0) {
                inside = !inside;
            }
        }
        inside
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    Fractal(FractalTexture),
    Raster(Raster),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub source: SceneSource,
    pub flat_patches: Vec<FlatPatch>,
}

impl Scene {
    pub fn fractal(texture: FractalTexture) -> Self {
        Self {
            source: SceneSource::Fractal(texture),
            flat_patches: Vec::new(),
        }
    }

    pub fn raster(r: Raster) -> Result<Self> {
        let gt = r
            .geotransform
            .ok_or_else(|| Error::Config("scene raster must be georeferenced".into()))?;
        gt.validate()?;
        Ok(Self {
            source: SceneSource::Raster(r),
            flat_patches: Vec::new(),
        })
    }

    /// Scene radiance at an LCC position; `None` off a raster scene.
    pub fn value(&self, x: f64, y: f64) -> Option<f64> {
        if let Some(p) = self.flat_patches.iter().find(|p| p.contains(x, y)) {
            return Some(p.value);
        }
        match &self.source {
            SceneSource::Fractal(t) => Some(t.value(x, y)),
            SceneSource::Raster(r) => {
                let gt = r.geotransform.as_ref()?;
                let (row, col) = gt.to_pixel(x, y);
                BandView::of(r, 0).sample(row, col, None).map(f64::from)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::MapGrid;

    #[test]
    fn fractal_is_deterministic_and_seed_dependent() {
        let a = FractalTexture::default();
        let b = FractalTexture { seed: 2, ..a.clone() };
        assert_eq!(a.value(1234.5, -987.0), a.value(1234.5, -987.0));
        assert_ne!(a.value(1234.5, -987.0), b.value(1234.5, -987.0));
    }

    #[test]
    fn fractal_stays_in_range_and_varies() {
        let t = FractalTexture::default();
        let vals: Vec<f64> = (0..2000).map(|i| t.value(i as f64 * 37.0, i as f64 * 11.0)).collect();
        assert!(vals
            .iter()
            .all(|v| (t.mean - t.amplitude..=t.mean + t.amplitude).contains(v)));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(var > 10.0, "variance {var}");
    }

    #[test]
    fn flat_patch_overrides_texture() {
        let mut s = Scene::fractal(FractalTexture::default());
        s.flat_patches.push(FlatPatch::rect(0.0, 0.0, 100.0, 100.0, 7.0));
        assert_eq!(s.value(50.0, 50.0), Some(7.0));
        assert_ne!(s.value(150.0, 50.0), Some(7.0));
        s.flat_patches.push(FlatPatch {
            vertices: vec![(200.0, 0.0), (300.0, 0.0), (400.0, 100.0), (300.0, 100.0)],
            value: 3.0,
        });
        assert_eq!(s.value(350.0, 90.0), Some(3.0));
        assert_ne!(s.value(210.0, 90.0), Some(3.0));
    }

    #[test]
    fn raster_scene_samples_texture_and_rejects_outside() {
        let t = FractalTexture::default();
        let grid = MapGrid::aligned(0.0, 0.0, 2000.0, 2000.0, 50.0).unwrap();
        let s = Scene::raster(t.to_raster(&grid)).unwrap();
        let (x, y) = grid.transform.cell_center(7, 9);
        assert!((s.value(x, y).unwrap() - t.value(x, y)).abs() < 1e-4);
        assert!(s.value(-500.0, 100.0).is_none());
    }
}
