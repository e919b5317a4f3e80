//! Focal-plane look vectors, the scan-mirror normal and the reflection off the mirror.

use nalgebra::{Matrix3, Vector3};

use super::rotation::{check_rotation, rot_axis, rot_x, rot_z};
use super::types::{AlignmentSet, CameraConstants, DetectorLookAngles, EncoderReading, MirrorDistortion, MirrorOrder};
use crate::error::{Error, Result};

/// Focal-plane look vector `[-1, tan ψy, tan ψz]`.
pub fn look_vector(angles: DetectorLookAngles) -> Vector3<f64> {
    Vector3::new(-1.0, angles.psi_y.to_radians().tan(), angles.psi_z.to_radians().tan())
}

/// Linear pixel → look-angle map centred on the detector. Columns drive ψy, rows ψz.
pub fn pixel_to_look_angles(row: f64, col: f64, consts: &CameraConstants) -> Result<DetectorLookAngles> {
    if !consts.contains(row, col) {
        return Err(Error::Domain(format!(
            "pixel ({row}, {col}) is outside the {0}x{0} detector",
            consts.detector_pixels
        )));
    }
    Ok(look_angles_unchecked(row, col, consts))
}

/// Same map without the detector bounds check; used when extrapolating mapping grids.
pub(crate) fn look_angles_unchecked(row: f64, col: f64, consts: &CameraConstants) -> DetectorLookAngles {
    let c = consts.center();
    let ifov = consts.ifov_deg();
    DetectorLookAngles {
        psi_y: (col - c) * ifov,
        psi_z: (row - c) * ifov,
    }
}

/// Inverse of [`look_angles_unchecked`].
pub(crate) fn look_angles_to_pixel(angles: DetectorLookAngles, consts: &CameraConstants) -> (f64, f64) {
    let c = consts.center();
    let ifov = consts.ifov_deg();
    (angles.psi_z / ifov + c, angles.psi_y / ifov + c)
}

/// Rotates a focal-plane vector into the instrument frame.
pub fn to_instrument(u_look: &Vector3<f64>, align: &AlignmentSet) -> Result<Vector3<f64>> {
    check_rotation(&align.focal_to_sensor, "focal_to_sensor")?;
    check_rotation(&align.sensor_to_instr, "sensor_to_instr")?;
    Ok(align.sensor_to_instr * (align.focal_to_sensor * u_look))
}

/// Mirror normal in the mirror frame when the mirror sits at its reference position.
pub fn mirror_normal_ref(d: &MirrorDistortion) -> Vector3<f64> {
    let tilt = (d.alpha + d.beta_wedge).to_radians();
    let azimuth = (d.gamma + d.psi_wedge).to_radians();
    Vector3::new(tilt.cos() * azimuth.cos(), tilt.cos() * azimuth.sin(), tilt.sin())
}

/// EW rotation axis of the mirror, in mirror coordinates.
pub fn ew_axis() -> Vector3<f64> {
    Vector3::z()
}

/// NS rotation axis of the mirror, in mirror coordinates: the telescope axis seen through
/// the fold, so that an NS rotation spins the mirror about the incoming beam.
pub fn ns_axis(fold_deg: f64) -> Vector3<f64> {
    let f = fold_deg.to_radians();
    Vector3::new(f.cos(), -f.sin(), 0.0)
}

/// Mirror cube → instrument rotation built from the cube roll/pitch and the fold.
pub fn mirror_to_instrument(align: &AlignmentSet) -> Matrix3<f64> {
    rot_x(align.mirrorcube_to_instr_roll) * rot_z(align.mirrorcube_to_instr_pitch) * rot_z(align.mirror_fold)
}

/// Rotation applied by the scan mechanism for the given mirror angle offsets (degrees).
pub fn scan_rotation(ew_deg: f64, ns_deg: f64, align: &AlignmentSet) -> Matrix3<f64> {
    let ew = rot_axis(&ew_axis(), ew_deg);
    let ns = rot_axis(&ns_axis(align.mirror_fold), ns_deg);
    match align.mirror_order {
        MirrorOrder::NsThenEw => ns * ew,
        MirrorOrder::EwThenNs => ew * ns,
    }
}

/// Unit mirror normal in the instrument frame for the current encoder reading.
pub fn mirror_normal_current(
    encoder: &EncoderReading,
    ref_angles: (f64, f64),
    d: &MirrorDistortion,
    align: &AlignmentSet,
    encoder_lsb_deg: f64,
) -> Result<Vector3<f64>> {
    let ew = encoder.ew_counts as f64 * encoder_lsb_deg - ref_angles.0;
    let ns = encoder.ns_counts as f64 * encoder_lsb_deg - ref_angles.1;
    let n = mirror_to_instrument(align) * scan_rotation(ew, ns, align) * mirror_normal_ref(d);
    let norm = n.norm();
    if !(norm > 0.0) {
        return Err(Error::Internal("mirror normal has zero length".into()));
    }
    Ok(n / norm)
}

/// Reflects `u` off a mirror with unit normal `n_hat`.
pub fn reflect(u: &Vector3<f64>, n_hat: &Vector3<f64>) -> Result<Vector3<f64>> {
    if (n_hat.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "mirror normal must be unit length, got |n| = {}",
            n_hat.norm()
        )));
    }
    Ok(u - 2.0 * n_hat * u.dot(n_hat))
}

/// Householder matrix of the reflection, `I − 2 n nᵀ`.
pub(crate) fn reflection_matrix(n_hat: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - 2.0 * n_hat * n_hat.transpose()
}
