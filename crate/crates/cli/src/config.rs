//! Run configuration, read from TOML. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ghrc_core::geomodel::GeodeticPoint;
use ghrc_core::mosaic::MosaicConfig;
use ghrc_core::registration::BbrConfig;
use ghrc_core::resection::ResectionConfig;
use ghrc_core::simulator::{FlatPatch, FractalTexture, SimulationConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aim {
    pub lat: f64,
    pub lon: f64,
}

/// Offsets of the instrument's true alignment from what the processor believes, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentBias {
    pub ew_ref_angle: f64,
    pub ns_ref_angle: f64,
    pub mirrorcube_roll: f64,
    pub mirrorcube_pitch: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub texture: FractalTexture,
    /// Georeferenced raster container used instead of the fractal texture.
    pub raster: Option<PathBuf>,
    pub flat_patches: Vec<FlatPatch>,
    /// Grid positions (row, col) whose true footprints are covered by flat cloud.
    pub cloud_frames: Vec<(usize, usize)>,
    pub cloud_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeorefConfig {
    pub gsd_m: f64,
}

impl Default for GeorefConfig {
    fn default() -> Self {
        Self { gsd_m: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// GCP list; without one, control is synthesised from the truth log.
    pub gcp_file: Option<PathBuf>,
    /// Synthesised control points per frame side.
    pub gcp_grid: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            gcp_file: None,
            gcp_grid: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Encoder-noise seed; overrides `simulation.noise.rng_seed` when set.
    pub seed: Option<u64>,
    /// Ground point the scan is centred on.
    pub aim: Option<Aim>,
    /// Added to `simulation.truth_alignment` on load.
    pub alignment_bias: AlignmentBias,
    pub simulation: SimulationConfig,
    pub scene: SceneConfig,
    pub georef: GeorefConfig,
    pub bbr: BbrConfig,
    pub resection: ResectionConfig,
    pub calibrate: CalibrateConfig,
    pub mosaic: MosaicConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(e.to_string()))
    }

    /// Reads, applies the seed override and validates.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Applies the seed, alignment bias and aim point, then validates every section.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            self.simulation.noise.rng_seed = s;
        }
        let b = self.alignment_bias;
        let t = &mut self.simulation.truth_alignment;
        t.ew_ref_angle += b.ew_ref_angle;
        t.ns_ref_angle += b.ns_ref_angle;
        t.mirrorcube_to_instr_roll += b.mirrorcube_roll;
        t.mirrorcube_to_instr_pitch += b.mirrorcube_pitch;
        if let Some(a) = &self.aim {
            let target = GeodeticPoint::new(a.lat, a.lon, 0.0).map_err(invalid("aim"))?;
            self.simulation.aim_at(&target).map_err(invalid("aim"))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sim = &self.simulation;
        sim.validate().map_err(invalid("simulation"))?;
        self.scene.texture.validate().map_err(invalid("scene.texture"))?;
        if self.scene.flat_patches.iter().any(|p| p.vertices.len() < 3) {
            return Err(CliError::Input(
                "scene.flat_patches: a patch needs at least 3 vertices".into(),
            ));
        }
        let (rows, cols) = (sim.plan.rows, sim.plan.cols);
        if let Some(&(r, c)) = self.scene.cloud_frames.iter().find(|(r, c)| *r >= rows || *c >= cols) {
            return Err(CliError::Input(format!(
                "scene.cloud_frames: ({r}, {c}) is outside the {rows}x{cols} scan"
            )));
        }
        if !(self.georef.gsd_m > 0.0 && self.georef.gsd_m.is_finite()) {
            return Err(CliError::Input("georef.gsd_m must be positive".into()));
        }
        self.bbr.validate(sim.camera.detector_pixels).map_err(invalid("bbr"))?;
        if sim.reference_band >= sim.plan.band_count {
            return Err(CliError::Input("simulation.reference_band is out of range".into()));
        }
        if self.resection.max_iterations == 0 {
            return Err(CliError::Input("resection.max_iterations must be positive".into()));
        }
        if self.calibrate.gcp_grid < 2 {
            return Err(CliError::Input("calibrate.gcp_grid must be at least 2".into()));
        }
        self.mosaic.validate(sim.plan.band_count).map_err(invalid("mosaic"))
    }
}

fn invalid(section: &'static str) -> impl Fn(ghrc_core::Error) -> CliError {
    move |e| CliError::Input(format!("{section}: {e}"))
}
