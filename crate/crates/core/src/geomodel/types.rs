use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{self, rows3};
use crate::error::{Error, Result};

/// Full-circle encoder resolution.
pub const ENCODER_BITS: u32 = 21;
pub const ENCODER_MAX_COUNTS: u32 = (1 << ENCODER_BITS) - 1;
pub const ENCODER_LSB_DEG: f64 = 360.0 / (1u64 << ENCODER_BITS) as f64;

/// Look angles of a detector element in the focal plane, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorLookAngles {
    pub psi_y: f64,
    pub psi_z: f64,
}

impl DetectorLookAngles {
    pub fn new(psi_y: f64, psi_z: f64) -> Result<Self> {
        if !(psi_y.abs() < 90.0 && psi_z.abs() < 90.0) {
            return Err(Error::Domain(format!(
                "look angles ({psi_y}, {psi_z}) must lie strictly inside (-90, 90) degrees"
            )));
        }
        Ok(Self { psi_y, psi_z })
    }
}

/// Mirror axis tilts (alpha, gamma) and surface wedge angles (beta, psi), degrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorDistortion {
    pub alpha: f64,
    pub beta_wedge: f64,
    pub gamma: f64,
    pub psi_wedge: f64,
}

impl MirrorDistortion {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta_wedge", self.beta_wedge),
            ("gamma", self.gamma),
            ("psi_wedge", self.psi_wedge),
        ] {
            if !(v.abs() < 1.0) {
                return Err(Error::Config(format!(
                    "mirror distortion {name} = {v} deg exceeds the 1 deg limit"
                )));
            }
        }
        Ok(())
    }
}

/// Raw scan-mirror encoder counts for the two axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderReading {
    pub ew_counts: u32,
    pub ns_counts: u32,
}

impl EncoderReading {
    pub fn new(ew_counts: u32, ns_counts: u32) -> Result<Self> {
        let reading = Self { ew_counts, ns_counts };
        reading.validate()?;
        Ok(reading)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ew_counts > ENCODER_MAX_COUNTS || self.ns_counts > ENCODER_MAX_COUNTS {
            return Err(Error::Domain(format!(
                "encoder reading {self:?} does not fit in {ENCODER_BITS} bits"
            )));
        }
        Ok(())
    }

    /// Counts nearest to the given mirror angles.
    pub fn from_angles(ew_deg: f64, ns_deg: f64, lsb_deg: f64) -> Result<Self> {
        let to_counts = |deg: f64| -> Result<u32> {
            let c = (deg / lsb_deg).round();
            if !(0.0..=ENCODER_MAX_COUNTS as f64).contains(&c) {
                return Err(Error::Domain(format!(
                    "mirror angle {deg} deg is outside the encoder range"
                )));
            }
            Ok(c as u32)
        };
        Self::new(to_counts(ew_deg)?, to_counts(ns_deg)?)
    }

    pub fn offset(&self, d_ew: i64, d_ns: i64) -> Result<Self> {
        let shift = |c: u32, d: i64| -> Result<u32> {
            let v = c as i64 + d;
            if v < 0 || v > ENCODER_MAX_COUNTS as i64 {
                return Err(Error::Domain(format!("encoder offset {d} leaves the range")));
            }
            Ok(v as u32)
        };
        Self::new(shift(self.ew_counts, d_ew)?, shift(self.ns_counts, d_ns)?)
    }
}

/// Mirror angles derived from the encoder: `m_pitch` is the EW axis, `m_roll` the NS axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorPointing {
    pub m_roll: f64,
    pub m_pitch: f64,
}

impl MirrorPointing {
    pub fn from_encoder(encoder: &EncoderReading, lsb_deg: f64) -> Self {
        Self {
            m_roll: encoder.ns_counts as f64 * lsb_deg,
            m_pitch: encoder.ew_counts as f64 * lsb_deg,
        }
    }
}

/// Platform attitude relative to the orbital frame, degrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.roll.abs() < 5.0 && self.pitch.abs() < 5.0 && self.yaw.abs() < 5.0) {
            return Err(Error::Domain(format!(
                "attitude {self:?} exceeds the 5 deg station-keeping envelope"
            )));
        }
        Ok(())
    }
}

/// Satellite state. Position in km, velocity in km/s, both in Earth-fixed axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ephemeris {
    pub position_ecef: [f64; 3],
    pub velocity_ecef: [f64; 3],
    pub epoch: f64,
}

impl Ephemeris {
    pub const GEO_RADIUS_KM: f64 = 42164.137;

    /// Station-kept geostationary satellite over `lon_deg` (zero Earth-relative velocity).
    pub fn geostationary(lon_deg: f64, epoch: f64) -> Self {
        let lon = lon_deg.to_radians();
        Self {
            position_ecef: [Self::GEO_RADIUS_KM * lon.cos(), Self::GEO_RADIUS_KM * lon.sin(), 0.0],
            velocity_ecef: [0.0; 3],
            epoch,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position_ecef)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::from(self.velocity_ecef)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.position().norm();
        if !(41000.0..=43500.0).contains(&r) {
            return Err(Error::Domain(format!(
                "ephemeris radius {r:.3} km is outside the geostationary envelope"
            )));
        }
        Ok(())
    }
}

/// Multiplication order of the platform roll/pitch/yaw rotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeOrder {
    #[default]
    RollPitchYaw,
    YawPitchRoll,
}

/// Multiplication order of the two scan-mirror axis rotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorOrder {
    #[default]
    NsThenEw,
    EwThenNs,
}

/// Calibrated instrument alignment: focal-plane and sensor rotation blocks, mirror cube
/// mounting angles and encoder reference angles.
///
/// `mirror_fold` is the fixed angle between the telescope axis and the mirror normal at
/// the reference position (45 deg for the flight geometry, 0 for the bare retro-reflecting
/// fixture used in unit tests).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentSet {
    #[serde(with = "rows3")]
    pub focal_to_sensor: Matrix3<f64>,
    #[serde(with = "rows3")]
    pub sensor_to_instr: Matrix3<f64>,
    pub mirrorcube_to_instr_roll: f64,
    pub mirrorcube_to_instr_pitch: f64,
    pub ew_ref_angle: f64,
    pub ns_ref_angle: f64,
    #[serde(default)]
    pub mirror_fold: f64,
    #[serde(default)]
    pub mirror_distortion: MirrorDistortion,
    #[serde(default)]
    pub attitude_order: AttitudeOrder,
    #[serde(default)]
    pub mirror_order: MirrorOrder,
}

impl AlignmentSet {
    pub const PRELAUNCH_EW_REF: f64 = 195.44;
    pub const PRELAUNCH_NS_REF: f64 = 15.79;
    pub const FLIGHT_FOLD: f64 = 45.0;

    /// Identity rotations, zero mounting angles and zero fold.
    pub fn identity() -> Self {
        Self {
            focal_to_sensor: Matrix3::identity(),
            sensor_to_instr: Matrix3::identity(),
            mirrorcube_to_instr_roll: 0.0,
            mirrorcube_to_instr_pitch: 0.0,
            ew_ref_angle: 0.0,
            ns_ref_angle: 0.0,
            mirror_fold: 0.0,
            mirror_distortion: MirrorDistortion::default(),
            attitude_order: AttitudeOrder::default(),
            mirror_order: MirrorOrder::default(),
        }
    }

    /// Flight geometry with the pre-launch encoder reference angles.
    pub fn prelaunch() -> Self {
        Self {
            ew_ref_angle: Self::PRELAUNCH_EW_REF,
            ns_ref_angle: Self::PRELAUNCH_NS_REF,
            mirror_fold: Self::FLIGHT_FOLD,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<()> {
        rotation::check_rotation(&self.focal_to_sensor, "focal_to_sensor")?;
        rotation::check_rotation(&self.sensor_to_instr, "sensor_to_instr")?;
        for (name, v) in [
            ("mirrorcube_to_instr_roll", self.mirrorcube_to_instr_roll),
            ("mirrorcube_to_instr_pitch", self.mirrorcube_to_instr_pitch),
            ("ew_ref_angle", self.ew_ref_angle),
            ("ns_ref_angle", self.ns_ref_angle),
            ("mirror_fold", self.mirror_fold),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        self.mirror_distortion.validate()
    }
}

/// Everything needed to geolocate one exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySnapshot {
    pub ephemeris: Ephemeris,
    pub attitude: Attitude,
    pub encoder: EncoderReading,
    pub alignment: AlignmentSet,
    pub time: f64,
}

impl GeometrySnapshot {
    pub fn validate(&self) -> Result<()> {
        self.ephemeris.validate()?;
        self.attitude.validate()?;
        self.encoder.validate()?;
        self.alignment.validate()
    }

    pub fn mirror_pointing(&self, lsb_deg: f64) -> MirrorPointing {
        MirrorPointing::from_encoder(&self.encoder, lsb_deg)
    }
}

/// Latitude/longitude in degrees, height in metres above WGS-84.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodeticPoint {
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
}

impl GeodeticPoint {
    pub fn new(lat: f64, lon: f64, height: f64) -> Result<Self> {
        if !(lat.abs() <= 90.0) || !lon.is_finite() || !height.is_finite() {
            return Err(Error::Domain(format!(
                "invalid geodetic point ({lat}, {lon}, {height})"
            )));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
            height,
        })
    }
}

/// Wraps a longitude into (-180, 180].
pub fn normalize_lon(lon: f64) -> f64 {
    let mut l = lon.rem_euclid(360.0);
    if l > 180.0 {
        l -= 360.0;
    }
    l
}

/// Fixed camera and scan-mechanism constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConstants {
    pub fov_deg: f64,
    pub altitude_km: f64,
    pub igfov_km: f64,
    pub detector_pixels: usize,
    pub encoder_lsb_deg: f64,
    pub ew_ground_gain: f64,
    pub ns_ground_gain: f64,
}

impl Default for CameraConstants {
    fn default() -> Self {
        Self {
            fov_deg: 0.176,
            altitude_km: 35786.0,
            igfov_km: 110.0,
            detector_pixels: 2048,
            encoder_lsb_deg: ENCODER_LSB_DEG,
            ew_ground_gain: 2.0,
            ns_ground_gain: 1.0,
        }
    }
}

impl CameraConstants {
    /// Same pixel pitch with a smaller (or larger) square detector.
    pub fn with_detector_pixels(pixels: usize) -> Self {
        let base = Self::default();
        let scale = pixels as f64 / base.detector_pixels as f64;
        Self {
            fov_deg: base.fov_deg * scale,
            igfov_km: base.igfov_km * scale,
            detector_pixels: pixels,
            ..base
        }
    }

    pub fn ifov_deg(&self) -> f64 {
        self.fov_deg / self.detector_pixels as f64
    }

    /// Ground sample distance at nadir, metres.
    pub fn nadir_gsd_m(&self) -> f64 {
        self.ifov_deg().to_radians() * self.altitude_km * 1000.0
    }

    /// Continuous pixel coordinate of the detector centre.
    pub fn center(&self) -> f64 {
        (self.detector_pixels as f64 - 1.0) / 2.0
    }

    /// Whether a continuous pixel coordinate lies on the detector.
    pub fn contains(&self, row: f64, col: f64) -> bool {
        let hi = self.detector_pixels as f64 - 0.5;
        (-0.5..=hi).contains(&row) && (-0.5..=hi).contains(&col)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detector_pixels < 8 {
            return Err(Error::Config("detector_pixels must be at least 8".into()));
        }
        for (name, v) in [
            ("fov_deg", self.fov_deg),
            ("altitude_km", self.altitude_km),
            ("igfov_km", self.igfov_km),
            ("encoder_lsb_deg", self.encoder_lsb_deg),
            ("ew_ground_gain", self.ew_ground_gain),
            ("ns_ground_gain", self.ns_ground_gain),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
