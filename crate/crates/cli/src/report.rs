//! Cumulative JSON run report, one per output directory. Each stage replaces its own
//! section and leaves the others alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ghrc_core::mosaic::{MosaicReport, OverlapMode, RefPlan, SeamReport};
use ghrc_core::registration::BandRegistration;
use ghrc_core::resection::CalibrationResult;

use crate::CliError;

pub const REPORT_FILE: &str = "run_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub frames: usize,
    pub bands: usize,
    pub detector_pixels: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub cloud_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBbr {
    pub frame_id: usize,
    pub registrations: Vec<BandRegistration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbrReport {
    pub reference_band: usize,
    pub frames: Vec<FrameBbr>,
    /// (frame, band) pairs left uncorrected.
    pub uncorrectable: Vec<(usize, usize)>,
}

impl BbrReport {
    /// Per-band (line, pixel) offsets of one frame, zero where nothing was applied.
    pub fn offsets(&self, frame_id: usize, bands: usize) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); bands];
        if let Some(f) = self.frames.iter().find(|f| f.frame_id == frame_id) {
            for r in &f.registrations {
                if r.band < bands {
                    out[r.band] = r.applied;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeorefFrame {
    pub frame_id: usize,
    pub width: usize,
    pub height: usize,
    pub x0: f64,
    pub y0: f64,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeorefReport {
    pub gsd_m: f64,
    pub bands: Vec<usize>,
    pub band_offsets_from_bbr: bool,
    pub calibrated: bool,
    pub frames: Vec<GeorefFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateReport {
    /// "file" or "truth".
    pub control_source: String,
    pub control_points: usize,
    pub result: CalibrationResult,
    /// Location error after calibration in nadir pixels.
    pub after_rms_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicStageReport {
    pub overlap_mode: OverlapMode,
    pub band_offsets_from_bbr: bool,
    pub calibrated: bool,
    pub plan: RefPlan,
    pub mosaic: MosaicReport,
    pub seams_before: SeamReport,
    pub seams_after: SeamReport,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub measured: String,
    pub threshold: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub simulate: Option<SimulateReport>,
    pub bbr: Option<BbrReport>,
    pub georef: Option<GeorefReport>,
    pub calibrate: Option<CalibrateReport>,
    pub mosaic: Option<MosaicStageReport>,
    pub eval: Option<EvalReport>,
}

impl RunReport {
    /// The report in `dir`, or an empty one if there is none yet.
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(REPORT_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::Input(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(REPORT_FILE);
        let text = serde_json::to_string_pretty(self).expect("report serialises");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    }
}
