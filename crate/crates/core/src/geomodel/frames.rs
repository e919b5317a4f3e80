//! Instrument → spacecraft → orbital → inertial → Earth-fixed chain.
//!
//! Axis conventions:
//! - orbital frame: x (roll) completes the triad ≈ along-track, y (pitch) ⟂ nadir and
//!   velocity, z (yaw) toward the Earth centre;
//! - instrument frame: after the 45° fold the boresight leaves along +y; +y maps to
//!   spacecraft +z (nadir), −x to spacecraft +x (east for a prograde orbit) and +z to
//!   spacecraft +y (south).

use nalgebra::{Matrix3, Vector3};

use super::rotation::{rot_x, rot_y, rot_z};
use super::types::{Attitude, AttitudeOrder, Ephemeris};
use crate::error::{Error, Result};

/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_0e-5;

/// Fixed mount of the instrument on the spacecraft bus.
pub fn instrument_to_spacecraft() -> Matrix3<f64> {
    Matrix3::new(-1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0)
}

/// Sidereal angle in radians, linear in time with zero at `t = 0`.
///
/// Simulator and processor share this function, so its absolute accuracy never enters
/// a closed-loop result.
pub fn gmst(t: f64) -> f64 {
    (EARTH_ROTATION_RATE * t).rem_euclid(std::f64::consts::TAU)
}

pub fn spacecraft_to_orbital(att: &Attitude, order: AttitudeOrder) -> Matrix3<f64> {
    match order {
        AttitudeOrder::RollPitchYaw => rot_x(att.roll) * rot_y(att.pitch) * rot_z(att.yaw),
        AttitudeOrder::YawPitchRoll => rot_z(att.yaw) * rot_y(att.pitch) * rot_x(att.roll),
    }
}

/// Orbital → inertial direction cosine matrix from an inertial state.
pub fn orbital_to_inertial(pos: &Vector3<f64>, vel: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = pos.norm();
    let v = vel.norm();
    if !(r > 0.0 && v > 0.0) {
        return Err(Error::Domain("ephemeris position and velocity must be non-zero".into()));
    }
    let yaw = -pos / r;
    let pitch = yaw.cross(vel);
    let pn = pitch.norm();
    if pn <= 1e-12 * r * v {
        return Err(Error::Domain("ephemeris position and velocity are parallel".into()));
    }
    let pitch = pitch / pn;
    let roll = pitch.cross(&yaw);
    Ok(Matrix3::from_columns(&[roll, pitch, yaw]))
}

/// Earth-fixed → inertial rotation at time `t`.
pub fn ecef_to_inertial(t: f64) -> Matrix3<f64> {
    rot_z(gmst(t).to_degrees())
}

/// Instrument → Earth-fixed rotation at time `t`.
///
/// The orbital frame is built from the inertial state, so the chain is
/// `E(t)ᵀ · O(E(t)·p, E(t)·v) · A · M` with `E` the sidereal rotation. `O` is
/// equivariant under rotations, so the sidereal rotation cancels exactly and the frame is
/// evaluated directly in Earth-fixed axes; exposures with identical geometry at
/// different times then give bit-identical chains.
pub fn instrument_to_ecef(att: &Attitude, eph: &Ephemeris, t: f64, order: AttitudeOrder) -> Result<Matrix3<f64>> {
    if !t.is_finite() {
        return Err(Error::Domain("snapshot time must be finite".into()));
    }
    let p = eph.position();
    let omega = Vector3::new(0.0, 0.0, EARTH_ROTATION_RATE);
    // inertial velocity expressed in Earth-fixed axes
    let v_inertial = eph.velocity() + omega.cross(&p);
    Ok(orbital_to_inertial(&p, &v_inertial)? * spacecraft_to_orbital(att, order) * instrument_to_spacecraft())
}
