use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_HEIGHT_M: f64 = -500.0;
const MAX_HEIGHT_M: f64 = 9000.0;

/// Regular latitude/longitude height grid; row 0 lies at `lat_min`, column 0 at `lon_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElevationGrid {
    pub lat_min: f64,
    pub lon_min: f64,
    pub spacing_deg: f64,
    pub rows: usize,
    pub cols: usize,
    pub heights: Vec<f64>,
}

impl ElevationGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_deg > 0.0) {
            return Err(Error::Config("elevation grid spacing must be positive".into()));
        }
        if self.rows < 2 || self.cols < 2 || self.heights.len() != self.rows * self.cols {
            return Err(Error::Config(format!(
                "elevation grid needs at least 2x2 samples and rows*cols heights, got {}x{} with {}",
                self.rows,
                self.cols,
                self.heights.len()
            )));
        }
        if let Some(h) = self
            .heights
            .iter()
            .find(|h| !(MIN_HEIGHT_M..=MAX_HEIGHT_M).contains(*h))
        {
            return Err(Error::Config(format!(
                "elevation {h} m is outside [{MIN_HEIGHT_M}, {MAX_HEIGHT_M}]"
            )));
        }
        Ok(())
    }

    /// Bilinear height; positions beyond the grid take the nearest edge value.
    pub fn height_at(&self, lat: f64, lon: f64) -> f64 {
        let fr = ((lat - self.lat_min) / self.spacing_deg).clamp(0.0, (self.rows - 1) as f64);
        let fc = ((lon - self.lon_min) / self.spacing_deg).clamp(0.0, (self.cols - 1) as f64);
        let r0 = (fr.floor() as usize).min(self.rows - 2);
        let c0 = (fc.floor() as usize).min(self.cols - 2);
        let (wr, wc) = (fr - r0 as f64, fc - c0 as f64);
        let h = |r: usize, c: usize| self.heights[r * self.cols + c];
        (1.0 - wr) * ((1.0 - wc) * h(r0, c0) + wc * h(r0, c0 + 1))
            + wr * ((1.0 - wc) * h(r0 + 1, c0) + wc * h(r0 + 1, c0 + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElevationSource {
    Constant { height_m: f64 },
    Grid(ElevationGrid),
}

impl Default for ElevationSource {
    fn default() -> Self {
        ElevationSource::Constant { height_m: 0.0 }
    }
}

impl ElevationSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            ElevationSource::Constant { height_m } => {
                if !(MIN_HEIGHT_M..=MAX_HEIGHT_M).contains(height_m) {
                    return Err(Error::Config(format!(
                        "elevation {height_m} m is outside [{MIN_HEIGHT_M}, {MAX_HEIGHT_M}]"
                    )));
                }
                Ok(())
            }
            ElevationSource::Grid(g) => g.validate(),
        }
    }

    pub fn height_at(&self, lat: f64, lon: f64) -> f64 {
        match self {
            ElevationSource::Constant { height_m } => *height_m,
            ElevationSource::Grid(g) => g.height_at(lat, lon),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            ElevationSource::Constant { height_m } => Some(*height_m),
            ElevationSource::Grid(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ElevationGrid {
        // height = 100 * lat_index + 10 * lon_index
        let (rows, cols) = (4, 5);
        let heights = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| 100.0 * r as f64 + 10.0 * c as f64))
            .collect();
        ElevationGrid {
            lat_min: 10.0,
            lon_min: 70.0,
            spacing_deg: 0.5,
            rows,
            cols,
            heights,
        }
    }

    #[test]
    fn bilinear_reproduces_planes() {
        let g = ramp();
        assert!(g.validate().is_ok());
        assert!((g.height_at(10.0, 70.0) - 0.0).abs() < 1e-12);
        assert!((g.height_at(10.25, 70.75) - (50.0 + 15.0)).abs() < 1e-9);
        assert!((g.height_at(11.5, 72.0) - (300.0 + 40.0)).abs() < 1e-9);
        // clamped outside
        assert!((g.height_at(50.0, 0.0) - 300.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut g = ramp();
        g.spacing_deg = 0.0;
        assert!(g.validate().is_err());
        let mut g = ramp();
        g.heights[3] = 12_000.0;
        assert!(g.validate().is_err());
        let mut g = ramp();
        g.heights.pop();
        assert!(g.validate().is_err());
    }

    #[test]
    fn json_tagged_form() {
        let s: ElevationSource = serde_json::from_str(r#"{"kind":"constant","height_m":12.5}"#).unwrap();
        assert_eq!(s.constant(), Some(12.5));
    }
}
