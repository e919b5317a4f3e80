//! Synthetic acquisition: a two-axis raster scan of a frame camera over a known scene,
//! with encoder dither, platform drift and per-band timing, plus a truth log.

mod scene;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use scene::{FlatPatch, FractalTexture, Scene, SceneSource};

use crate::error::{Error, Result};
use crate::geomodel::{
    reference_encoder, AlignmentSet, Attitude, CameraConstants, EncoderReading, Ephemeris, GeodeticPoint,
    GeometrySnapshot, SensorModel,
};
use crate::projection::{ElevationSource, Lcc, LccParams, Raster};

const RENDER_NODE_STEP: usize = 16;

/// Raster-scan geometry and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanPlan {
    pub rows: usize,
    pub cols: usize,
    pub ew_step_deg: f64,
    pub ns_step_deg: f64,
    pub boustrophedon: bool,
    pub frame_period_s: f64,
    pub band_count: usize,
    pub band_interval_s: f64,
    /// Mirror-angle offsets from the reference position of the north-west frame.
    pub origin_ew_deg: f64,
    pub origin_ns_deg: f64,
}

impl Default for ScanPlan {
    fn default() -> Self {
        Self {
            rows: 1,
            cols: 1,
            ew_step_deg: 0.07,
            ns_step_deg: 0.14,
            boustrophedon: true,
            frame_period_s: 24.0,
            band_count: 6,
            band_interval_s: 20.0 / 6.0,
            origin_ew_deg: 0.0,
            origin_ns_deg: 0.0,
        }
    }
}

impl ScanPlan {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("scan needs at least one row and one column".into()));
        }
        if !(self.ew_step_deg > 0.0 && self.ns_step_deg > 0.0) {
            return Err(Error::Config("scan steps must be positive".into()));
        }
        if self.band_count == 0 || !(self.band_interval_s >= 0.0) {
            return Err(Error::Config("band timing is invalid".into()));
        }
        if !(self.frame_period_s >= self.band_interval_s * self.band_count as f64) {
            return Err(Error::Config(
                "frame period is shorter than the band acquisition sequence".into(),
            ));
        }
        if !(self.origin_ew_deg.is_finite() && self.origin_ns_deg.is_finite()) {
            return Err(Error::Config("scan origin must be finite".into()));
        }
        Ok(())
    }

    /// Places the scan so that its centre points at the given mirror-angle offsets.
    pub fn centered_on(&mut self, ew_deg: f64, ns_deg: f64) {
        self.origin_ew_deg = ew_deg - self.ew_step_deg * (self.cols - 1) as f64 / 2.0;
        self.origin_ns_deg = ns_deg - self.ns_step_deg * (self.rows - 1) as f64 / 2.0;
    }

    /// Fractional frame-to-frame overlap in EW implied by the step.
    pub fn nominal_overlap(&self, camera: &CameraConstants) -> f64 {
        1.0 - camera.ew_ground_gain * self.ew_step_deg / camera.fov_deg
    }

    pub fn frame_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Acquisition time of a band relative to scan start.
    pub fn band_time(&self, frame_id: usize, band: usize) -> f64 {
        frame_id as f64 * self.frame_period_s + band as f64 * self.band_interval_s
    }
}

/// One frame of the raster scan as commanded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandedPointing {
    pub frame_id: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    pub encoder: EncoderReading,
}

/// Commanded pointing sequence in scan order; column index grows eastward and row index
/// southward.
pub fn plan_raster_scan(
    plan: &ScanPlan,
    alignment: &AlignmentSet,
    camera: &CameraConstants,
) -> Result<Vec<CommandedPointing>> {
    plan.validate()?;
    let lsb = camera.encoder_lsb_deg;
    let base = reference_encoder(alignment, camera)?;
    let origin_ew = (plan.origin_ew_deg / lsb).round() as i64;
    let origin_ns = (plan.origin_ns_deg / lsb).round() as i64;
    let step_ew = (plan.ew_step_deg / lsb).round() as i64;
    let step_ns = (plan.ns_step_deg / lsb).round() as i64;
    let mut out = Vec::with_capacity(plan.frame_count());
    for row in 0..plan.rows {
        for k in 0..plan.cols {
            let col = if plan.boustrophedon && row % 2 == 1 {
                plan.cols - 1 - k
            } else {
                k
            };
            out.push(CommandedPointing {
                frame_id: out.len(),
                grid_row: row,
                grid_col: col,
                encoder: base.offset(origin_ew + step_ew * col as i64, origin_ns + step_ns * row as i64)?,
            });
        }
    }
    Ok(out)
}

/// Uniform integer dither of the settled mirror around its commanded counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderNoiseModel {
    pub pp_counts: u32,
    pub settle_threshold_counts: u32,
    pub rng_seed: u64,
}

impl Default for EncoderNoiseModel {
    fn default() -> Self {
        Self {
            pp_counts: 5,
            settle_threshold_counts: 15,
            rng_seed: 0,
        }
    }
}

impl EncoderNoiseModel {
    pub fn noiseless() -> Self {
        Self {
            pp_counts: 0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.settle_threshold_counts < self.pp_counts {
            return Err(Error::Config(
                "settle threshold must be at least the peak-to-peak noise".into(),
            ));
        }
        Ok(())
    }

    /// Independent random stream for one band of one frame.
    pub fn stream(&self, frame_id: usize, band: usize, band_count: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream((frame_id * band_count + band) as u64);
        rng
    }
}

pub fn sample_encoder<R: Rng + ?Sized>(
    commanded: &EncoderReading,
    model: &EncoderNoiseModel,
    rng: &mut R,
) -> Result<EncoderReading> {
    model.validate()?;
    let pp = model.pp_counts as i64;
    if pp == 0 {
        return Ok(*commanded);
    }
    let d_ew = rng.gen_range(-pp..=pp);
    let d_ns = rng.gen_range(-pp..=pp);
    commanded.offset(d_ew, d_ns)
}

/// Linear platform drift with an optional deterministic zero-mean jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModel {
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
    pub jitter_pp_deg: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            roll_rate: 1e-5,
            pitch_rate: 1e-5,
            yaw_rate: 0.0,
            jitter_pp_deg: 0.0,
        }
    }
}

impl DriftModel {
    pub fn none() -> Self {
        Self {
            roll_rate: 0.0,
            pitch_rate: 0.0,
            yaw_rate: 0.0,
            jitter_pp_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.roll_rate, self.pitch_rate, self.yaw_rate]
            .iter()
            .all(|r| r.is_finite())
            && self.jitter_pp_deg.is_finite()
            && self.jitter_pp_deg >= 0.0;
        if !ok {
            return Err(Error::Config("drift rates and jitter must be finite".into()));
        }
        Ok(())
    }
}

// incommensurate jitter periods, seconds
const JITTER_PERIODS: [f64; 2] = [2.7, 7.3];

pub fn propagate_platform(t: f64, d: &DriftModel, base: &Attitude) -> Result<Attitude> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("time {t} s precedes the scan start")));
    }
    d.validate()?;
    let half = d.jitter_pp_deg / 2.0;
    let w = |p: f64| std::f64::consts::TAU * t / p;
    let jitter_roll = half * w(JITTER_PERIODS[0]).sin();
    let jitter_pitch = half * w(JITTER_PERIODS[1]).sin();
    Ok(Attitude {
        roll: base.roll + d.roll_rate * t + jitter_roll,
        pitch: base.pitch + d.pitch_rate * t + jitter_pitch,
        yaw: base.yaw + d.yaw_rate * t,
    })
}

/// Whether the processor's attitude telemetry includes the platform drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeKnowledge {
    /// Telemetry reports the undrifted base attitude.
    #[default]
    Base,
    Drifted,
}

/// Everything needed to simulate a scan, except the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub plan: ScanPlan,
    pub noise: EncoderNoiseModel,
    pub drift: DriftModel,
    pub camera: CameraConstants,
    pub satellite_lon_deg: f64,
    pub epoch_s: f64,
    pub base_attitude: Attitude,
    /// Alignment actually realised by the instrument.
    pub truth_alignment: AlignmentSet,
    /// Alignment the processor believes (used for commanding and telemetry).
    pub processor_alignment: AlignmentSet,
    pub attitude_knowledge: AttitudeKnowledge,
    pub reference_band: usize,
    pub elevation: ElevationSource,
    pub lcc: LccParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            plan: ScanPlan::default(),
            noise: EncoderNoiseModel::default(),
            drift: DriftModel::default(),
            camera: CameraConstants::default(),
            satellite_lon_deg: 55.0,
            epoch_s: 0.0,
            base_attitude: Attitude::default(),
            truth_alignment: AlignmentSet::prelaunch(),
            processor_alignment: AlignmentSet::prelaunch(),
            attitude_knowledge: AttitudeKnowledge::Base,
            reference_band: 2,
            elevation: ElevationSource::default(),
            lcc: LccParams::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.noise.validate()?;
        self.drift.validate()?;
        self.camera.validate()?;
        self.base_attitude.validate()?;
        self.truth_alignment.validate()?;
        self.processor_alignment.validate()?;
        self.elevation.validate()?;
        self.lcc.validate()?;
        if self.reference_band >= self.plan.band_count {
            return Err(Error::Config(format!(
                "reference band {} does not exist ({} bands)",
                self.reference_band, self.plan.band_count
            )));
        }
        Ok(())
    }

    pub fn ephemeris(&self) -> Ephemeris {
        Ephemeris::geostationary(self.satellite_lon_deg, self.epoch_s)
    }

    /// Scan-centre mirror offsets that aim the centre pixel at `target` (processor's
    /// belief, base attitude, scan start).
    pub fn aim_offsets(&self, target: &GeodeticPoint) -> Result<(f64, f64)> {
        let align = &self.processor_alignment;
        let base = reference_encoder(align, &self.camera)?;
        let lsb = self.camera.encoder_lsb_deg;
        let c = self.camera.center();
        let at = |ew: f64, ns: f64| -> Result<Vector2<f64>> {
            let mut a = align.clone();
            a.ew_ref_angle = base.ew_counts as f64 * lsb - ew;
            a.ns_ref_angle = base.ns_counts as f64 * lsb - ns;
            let snap = GeometrySnapshot {
                ephemeris: self.ephemeris(),
                attitude: self.base_attitude,
                encoder: base,
                alignment: a,
                time: self.epoch_s,
            };
            let g = SensorModel::new(&snap, &self.camera)?.geolocate_at_height(c, c, target.height)?;
            Ok(Vector2::new(g.lat - target.lat, g.lon - target.lon))
        };
        let mut p = Vector2::new(0.0, 0.0);
        let h = 1e-4;
        for _ in 0..30 {
            let r = at(p.x, p.y)?;
            if r.abs().max() < 1e-9 {
                return Ok((p.x, p.y));
            }
            let jx = (at(p.x + h, p.y)? - r) / h;
            let jy = (at(p.x, p.y + h)? - r) / h;
            let step = Matrix2::from_columns(&[jx, jy])
                .try_inverse()
                .ok_or_else(|| Error::Internal("singular aiming Jacobian".into()))?
                * r;
            p -= step;
        }
        Err(Error::NonConvergence { iterations: 30 })
    }

    /// Re-centres the scan on a ground point.
    pub fn aim_at(&mut self, target: &GeodeticPoint) -> Result<()> {
        let (ew, ns) = self.aim_offsets(target)?;
        self.plan.centered_on(ew, ns);
        Ok(())
    }
}

/// Ground truth of one band exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub frame_id: usize,
    pub band: usize,
    pub time_s: f64,
    pub commanded: EncoderReading,
    pub realized: EncoderReading,
    pub attitude: Attitude,
    /// Position of this band's image content relative to the reference band, pixels
    /// (line, pixel): the ground seen at the reference band's centre appears here
    /// at centre + shift.
    pub shift_line: f64,
    pub shift_pixel: f64,
    /// Ground under the detector corners (top-left, top-right, bottom-right, bottom-left).
    pub corners: [GeodeticPoint; 4],
    pub snapshot: GeometrySnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLog {
    pub reference_band: usize,
    pub records: Vec<TruthRecord>,
}

impl TruthLog {
    pub fn record(&self, frame_id: usize, band: usize) -> Option<&TruthRecord> {
        self.records.iter().find(|r| r.frame_id == frame_id && r.band == band)
    }
}

/// One multi-band exposure as delivered to the processor.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    /// Single-band detector images, one per band.
    pub bands: Vec<Raster>,
    /// Telemetry geometry per band as known to the processor.
    pub snapshots: Vec<GeometrySnapshot>,
}

/// Truth and telemetry geometry of one band exposure.
#[derive(Debug, Clone)]
pub struct BandGeometry {
    pub band: usize,
    pub time_s: f64,
    pub realized: EncoderReading,
    pub truth: GeometrySnapshot,
    pub telemetry: GeometrySnapshot,
}

/// Deterministic scan simulator; frames can be produced in any order.
pub struct ScanSimulator<'a> {
    cfg: &'a SimulationConfig,
    scene: &'a Scene,
    lcc: Lcc,
    pointings: Vec<CommandedPointing>,
}

impl<'a> ScanSimulator<'a> {
    pub fn new(cfg: &'a SimulationConfig, scene: &'a Scene) -> Result<Self> {
        cfg.validate()?;
        if let SceneSource::Fractal(t) = &scene.source {
            t.validate()?;
        }
        Ok(Self {
            cfg,
            scene,
            lcc: Lcc::new(cfg.lcc)?,
            pointings: plan_raster_scan(&cfg.plan, &cfg.processor_alignment, &cfg.camera)?,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        self.cfg
    }

    pub fn pointings(&self) -> &[CommandedPointing] {
        &self.pointings
    }

    pub fn frame_count(&self) -> usize {
        self.pointings.len()
    }

    /// Realised and telemetry geometry of every band of a frame.
    pub fn band_geometry(&self, frame_id: usize) -> Result<Vec<BandGeometry>> {
        let cfg = self.cfg;
        let p = self
            .pointings
            .get(frame_id)
            .ok_or_else(|| Error::Precondition(format!("no frame {frame_id} in the scan")))?;
        let eph = cfg.ephemeris();
        (0..cfg.plan.band_count)
            .map(|band| {
                let time_s = cfg.plan.band_time(frame_id, band);
                let mut rng = cfg.noise.stream(frame_id, band, cfg.plan.band_count);
                let realized = sample_encoder(&p.encoder, &cfg.noise, &mut rng)?;
                let drifted = propagate_platform(time_s, &cfg.drift, &cfg.base_attitude)?;
                let truth = GeometrySnapshot {
                    ephemeris: eph,
                    attitude: drifted,
                    encoder: realized,
                    alignment: cfg.truth_alignment.clone(),
                    time: cfg.epoch_s + time_s,
                };
                let telemetry = GeometrySnapshot {
                    attitude: match cfg.attitude_knowledge {
                        AttitudeKnowledge::Base => cfg.base_attitude,
                        AttitudeKnowledge::Drifted => drifted,
                    },
                    encoder: p.encoder,
                    alignment: cfg.processor_alignment.clone(),
                    ..truth.clone()
                };
                Ok(BandGeometry {
                    band,
                    time_s,
                    realized,
                    truth,
                    telemetry,
                })
            })
            .collect()
    }

    /// Truth records of a frame without rendering any pixels.
    pub fn truth_records(&self, frame_id: usize) -> Result<Vec<TruthRecord>> {
        let geo = self.band_geometry(frame_id)?;
        self.records_from(frame_id, &geo)
    }

    fn records_from(&self, frame_id: usize, geo: &[BandGeometry]) -> Result<Vec<TruthRecord>> {
        let cfg = self.cfg;
        let cam = &cfg.camera;
        let elev = &cfg.elevation;
        let c = cam.center();
        let reference = SensorModel::new(&geo[cfg.reference_band].truth, cam)?;
        let anchor = reference.geolocate_unchecked(c, c, elev)?;
        let (lo, hi) = (-0.5, cam.detector_pixels as f64 - 0.5);
        geo.iter()
            .map(|g| {
                let model = SensorModel::new(&g.truth, cam)?;
                let (r, col) = model.ground_to_pixel_unbounded(&anchor)?;
                let corner = |r: f64, c: f64| model.geolocate_unchecked(r, c, elev);
                Ok(TruthRecord {
                    frame_id,
                    band: g.band,
                    time_s: g.time_s,
                    commanded: self.pointings[frame_id].encoder,
                    realized: g.realized,
                    attitude: g.truth.attitude,
                    shift_line: r - c,
                    shift_pixel: col - c,
                    corners: [corner(lo, lo)?, corner(lo, hi)?, corner(hi, hi)?, corner(hi, lo)?],
                    snapshot: g.truth.clone(),
                })
            })
            .collect()
    }

    /// A flat patch covering the true reference-band footprint of a frame. The outline
    /// follows the detector edges every 64 pixels, so no pixel of the frame sees past it.
    pub fn cloud_over(&self, frame_id: usize, value: f64) -> Result<FlatPatch> {
        let geo = self.band_geometry(frame_id)?;
        let model = SensorModel::new(&geo[self.cfg.reference_band].truth, &self.cfg.camera)?;
        let n = self.cfg.camera.detector_pixels as f64;
        let steps = (self.cfg.camera.detector_pixels / 64).max(1);
        let (lo, hi) = (-0.5, n - 0.5);
        let at = |k: usize| lo + (hi - lo) * k as f64 / steps as f64;
        let outline = (0..steps)
            .map(|k| (lo, at(k)))
            .chain((0..steps).map(|k| (at(k), hi)))
            .chain((0..steps).map(|k| (hi, at(steps - k))))
            .chain((0..steps).map(|k| (at(steps - k), lo)));
        let vertices = outline
            .map(|(r, c)| self.lcc.forward(&model.geolocate_unchecked(r, c, &self.cfg.elevation)?))
            .collect::<Result<_>>()?;
        Ok(FlatPatch { vertices, value })
    }

    /// Renders every band of one frame.
    pub fn acquire(&self, frame_id: usize) -> Result<(Frame, Vec<TruthRecord>)> {
        self.acquire_bands(frame_id, &(0..self.cfg.plan.band_count).collect::<Vec<_>>())
    }

    /// Renders a subset of the bands of one frame; the others are left empty (0×0).
    pub fn acquire_bands(&self, frame_id: usize, bands: &[usize]) -> Result<(Frame, Vec<TruthRecord>)> {
        let geo = self.band_geometry(frame_id)?;
        let records = self.records_from(frame_id, &geo)?;
        let mut images = Vec::with_capacity(geo.len());
        for g in &geo {
            images.push(if bands.contains(&g.band) {
                acquire_frame(self.scene, &self.lcc, &self.cfg.elevation, &self.cfg.camera, &g.truth)?
            } else {
                Raster::new(0, 0, 1, 0.0)
            });
        }
        let p = &self.pointings[frame_id];
        Ok((
            Frame {
                id: frame_id,
                grid_row: p.grid_row,
                grid_col: p.grid_col,
                bands: images,
                snapshots: geo.into_iter().map(|g| g.telemetry).collect(),
            },
            records,
        ))
    }
}

/// Renders one detector image of the scene seen through `truth`.
///
/// Detector pixels are mapped to LCC coordinates exactly on a node lattice every 16
/// pixels and bilinearly in between; the scene is then sampled at each pixel centre.
pub fn acquire_frame(
    scene: &Scene,
    lcc: &Lcc,
    elev: &ElevationSource,
    camera: &CameraConstants,
    truth: &GeometrySnapshot,
) -> Result<Raster> {
    let model = SensorModel::new(truth, camera)?;
    let n = camera.detector_pixels;
    let step = RENDER_NODE_STEP;
    let nodes_per_side = (n - 1).div_ceil(step) + 1;
    let nodes: Vec<(f64, f64)> = (0..nodes_per_side * nodes_per_side)
        .into_par_iter()
        .map(|i| {
            let (r, c) = ((i / nodes_per_side) * step, (i % nodes_per_side) * step);
            let g = model.geolocate_unchecked(r as f64, c as f64, elev)?;
            lcc.forward(&g)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0f32; n * n];
    let missing = data
        .par_chunks_mut(n)
        .enumerate()
        .map(|(row, line)| {
            let (nr, fr) = (row / step, (row % step) as f64 / step as f64);
            let mut missing = 0usize;
            for (col, px) in line.iter_mut().enumerate() {
                let (nc, fc) = (col / step, (col % step) as f64 / step as f64);
                let node = |a: usize, b: usize| nodes[(nr + a) * nodes_per_side + nc + b];
                let (p00, p01) = (node(0, 0), if fc > 0.0 { node(0, 1) } else { node(0, 0) });
                let (p10, p11) = if fr > 0.0 {
                    (node(1, 0), if fc > 0.0 { node(1, 1) } else { node(1, 0) })
                } else {
                    (p00, p01)
                };
                let lerp = |a: f64, b: f64, c: f64, d: f64| {
                    (1.0 - fr) * ((1.0 - fc) * a + fc * b) + fr * ((1.0 - fc) * c + fc * d)
                };
                let x = lerp(p00.0, p01.0, p10.0, p11.0);
                let y = lerp(p00.1, p01.1, p10.1, p11.1);
                match scene.value(x, y) {
                    Some(v) => *px = v as f32,
                    None => missing += 1,
                }
            }
            missing
        })
        .sum::<usize>();
    if missing > 0 {
        return Err(Error::Domain(format!(
            "{missing} detector pixels fall outside the scene"
        )));
    }
    Raster::from_band(n, n, data)
}

/// Simulates and renders a whole scan into memory.
pub fn acquire_scan(cfg: &SimulationConfig, scene: &Scene) -> Result<(Vec<Frame>, TruthLog)> {
    let sim = ScanSimulator::new(cfg, scene)?;
    let mut frames = Vec::with_capacity(sim.frame_count());
    let mut records = Vec::new();
    for id in 0..sim.frame_count() {
        let (f, r) = sim.acquire(id)?;
        frames.push(f);
        records.extend(r);
    }
    Ok((
        frames,
        TruthLog {
            reference_band: cfg.reference_band,
            records,
        },
    ))
}

#[cfg(test)]
mod tests;
