//! Rigid geolocation model of the scan-mirror frame camera.
//!
//! A detector pixel is turned into a focal-plane look vector, rotated into the
//! instrument frame, reflected off the current scan-mirror normal, carried through the
//! spacecraft, orbital and inertial frames into Earth-fixed coordinates and intersected
//! with the (optionally elevated) WGS-84 ellipsoid.

mod ellipsoid;
mod frames;
mod mirror;
mod rotation;
mod types;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

pub use ellipsoid::{
    ecef_to_geodetic, geodetic_to_ecef, intersect_ellipsoid, Intersection, WGS84_A_KM, WGS84_B_KM, WGS84_E2, WGS84_F,
};
pub use frames::{
    ecef_to_inertial, gmst, instrument_to_ecef, instrument_to_spacecraft, orbital_to_inertial, spacecraft_to_orbital,
    EARTH_ROTATION_RATE,
};
pub use mirror::{
    ew_axis, look_vector, mirror_normal_current, mirror_normal_ref, mirror_to_instrument, ns_axis,
    pixel_to_look_angles, reflect, scan_rotation, to_instrument,
};
pub use rotation::{check_rotation, orthonormality_error, rot_axis, rot_x, rot_y, rot_z, rows3};
pub use types::{
    normalize_lon, AlignmentSet, Attitude, AttitudeOrder, CameraConstants, DetectorLookAngles, EncoderReading,
    Ephemeris, GeodeticPoint, GeometrySnapshot, MirrorDistortion, MirrorOrder, MirrorPointing, ENCODER_BITS,
    ENCODER_LSB_DEG, ENCODER_MAX_COUNTS,
};

pub(crate) use mirror::{look_angles_to_pixel, look_angles_unchecked};

use crate::error::{Error, Result};
use crate::projection::ElevationSource;

const MEAN_EARTH_RADIUS_M: f64 = 6_371_000.0;
const HEIGHT_TOL_M: f64 = 0.1;
const MAX_HEIGHT_ITERATIONS: usize = 10;
const MAX_INVERSE_ITERATIONS: usize = 20;
const INVERSE_STEP_TOL_PX: f64 = 1e-6;

/// A snapshot with its full rotation chain evaluated once.
///
/// The whole chain from focal-plane look vector to Earth-fixed line of sight is a single
/// orthogonal matrix (proper rotations and one reflection), cached here.
#[derive(Debug, Clone)]
pub struct SensorModel {
    camera: CameraConstants,
    position: Vector3<f64>,
    look_to_ecef: Matrix3<f64>,
}

impl SensorModel {
    pub fn new(snap: &GeometrySnapshot, camera: &CameraConstants) -> Result<Self> {
        snap.alignment.validate()?;
        snap.encoder.validate()?;
        let align = &snap.alignment;
        let n_hat = mirror_normal_current(
            &snap.encoder,
            (align.ew_ref_angle, align.ns_ref_angle),
            &align.mirror_distortion,
            align,
            camera.encoder_lsb_deg,
        )?;
        let look_to_instr = align.sensor_to_instr * align.focal_to_sensor;
        let instr_to_ecef = instrument_to_ecef(&snap.attitude, &snap.ephemeris, snap.time, align.attitude_order)?;
        Ok(Self {
            camera: camera.clone(),
            position: snap.ephemeris.position(),
            look_to_ecef: instr_to_ecef * mirror::reflection_matrix(&n_hat) * look_to_instr,
        })
    }

    pub fn camera(&self) -> &CameraConstants {
        &self.camera
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    /// Earth-fixed line of sight of a (possibly off-detector) pixel coordinate.
    pub fn line_of_sight(&self, row: f64, col: f64) -> Vector3<f64> {
        self.look_to_ecef * look_vector(look_angles_unchecked(row, col, &self.camera))
    }

    pub fn geolocate_at_height(&self, row: f64, col: f64, height_m: f64) -> Result<GeodeticPoint> {
        Ok(intersect_ellipsoid(&self.position, &self.line_of_sight(row, col), height_m)?.point)
    }

    /// Geolocation without the detector bounds check.
    pub fn geolocate_unchecked(&self, row: f64, col: f64, elevation: &ElevationSource) -> Result<GeodeticPoint> {
        if let Some(h) = elevation.constant() {
            return self.geolocate_at_height(row, col, h);
        }
        let u = self.line_of_sight(row, col);
        let mut h = 0.0;
        for _ in 0..MAX_HEIGHT_ITERATIONS {
            let hit = intersect_ellipsoid(&self.position, &u, h)?;
            let next = elevation.height_at(hit.point.lat, hit.point.lon);
            if (next - h).abs() < HEIGHT_TOL_M {
                return Ok(intersect_ellipsoid(&self.position, &u, next)?.point);
            }
            h = next;
        }
        Ok(intersect_ellipsoid(&self.position, &u, h)?.point)
    }

    pub fn geolocate(&self, row: f64, col: f64, elevation: &ElevationSource) -> Result<GeodeticPoint> {
        pixel_to_look_angles(row, col, &self.camera)?;
        self.geolocate_unchecked(row, col, elevation)
    }

    /// Closed-form projection of a ground point through the inverse rotation chain.
    fn project(&self, pt: &GeodeticPoint) -> Result<(f64, f64)> {
        let v = geodetic_to_ecef(pt) - self.position;
        let u = self.look_to_ecef.transpose() * v;
        if u.x >= 0.0 {
            return Err(Error::Domain("ground point lies behind the focal plane".into()));
        }
        let angles = DetectorLookAngles {
            psi_y: (u.y / -u.x).atan().to_degrees(),
            psi_z: (u.z / -u.x).atan().to_degrees(),
        };
        Ok(look_angles_to_pixel(angles, &self.camera))
    }

    fn ground_residual(&self, row: f64, col: f64, target: &GeodeticPoint) -> Result<Vector2<f64>> {
        let p = self.geolocate_at_height(row, col, target.height)?;
        let m_per_deg = MEAN_EARTH_RADIUS_M.to_radians();
        Ok(Vector2::new(
            (p.lat - target.lat) * m_per_deg,
            normalize_lon(p.lon - target.lon) * m_per_deg * target.lat.to_radians().cos(),
        ))
    }

    /// Pixel coordinate of a ground point, not restricted to the detector.
    ///
    /// Gauss-Newton on the two pixel coordinates with a forward-difference Jacobian,
    /// started from the closed-form projection.
    pub fn ground_to_pixel_unbounded(&self, pt: &GeodeticPoint) -> Result<(f64, f64)> {
        let (mut row, mut col) = self.project(pt)?;
        let step = 1e-2;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let r0 = self.ground_residual(row, col, pt)?;
            let dr = (self.ground_residual(row + step, col, pt)? - r0) / step;
            let dc = (self.ground_residual(row, col + step, pt)? - r0) / step;
            let jac = Matrix2::from_columns(&[dr, dc]);
            let delta = jac
                .try_inverse()
                .ok_or_else(|| Error::Internal("singular pixel Jacobian".into()))?
                * r0;
            row -= delta.x;
            col -= delta.y;
            if delta.abs().max() < INVERSE_STEP_TOL_PX {
                return Ok((row, col));
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_INVERSE_ITERATIONS,
        })
    }

    pub fn ground_to_pixel(&self, pt: &GeodeticPoint) -> Result<(f64, f64)> {
        let (row, col) = self.ground_to_pixel_unbounded(pt)?;
        if !self.camera.contains(row, col) {
            return Err(Error::OutsideFrame { row, col });
        }
        Ok((row, col))
    }
}

/// Ground location of a detector pixel.
pub fn geolocate(
    row: f64,
    col: f64,
    snap: &GeometrySnapshot,
    camera: &CameraConstants,
    elevation: &ElevationSource,
) -> Result<GeodeticPoint> {
    SensorModel::new(snap, camera)?.geolocate(row, col, elevation)
}

/// Detector pixel that images a ground point.
pub fn ground_to_pixel(pt: &GeodeticPoint, snap: &GeometrySnapshot, camera: &CameraConstants) -> Result<(f64, f64)> {
    SensorModel::new(snap, camera)?.ground_to_pixel(pt)
}

/// Straight-line distance between two points in metres; equal to the surface distance to
/// within 1e-6 relative for points less than 10 km apart.
pub fn ground_distance_m(a: &GeodeticPoint, b: &GeodeticPoint) -> f64 {
    (geodetic_to_ecef(a) - geodetic_to_ecef(b)).norm() * 1000.0
}

/// Encoder reading that places the mirror exactly at its reference angles (to within one LSB).
pub fn reference_encoder(align: &AlignmentSet, camera: &CameraConstants) -> Result<EncoderReading> {
    EncoderReading::from_angles(align.ew_ref_angle, align.ns_ref_angle, camera.encoder_lsb_deg)
}

#[cfg(test)]
mod tests;
