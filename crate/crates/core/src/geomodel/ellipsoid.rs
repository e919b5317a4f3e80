//! WGS-84 ellipsoid: line-of-sight intersection and geodetic conversions (km).

use nalgebra::Vector3;

use super::types::{normalize_lon, GeodeticPoint};
use crate::error::{Error, Result};

pub const WGS84_A_KM: f64 = 6378.137;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_B_KM: f64 = WGS84_A_KM * (1.0 - WGS84_F);
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    pub point: GeodeticPoint,
    pub ecef: Vector3<f64>,
    /// Scale factor along `u`; kilometres when `u` is a unit vector.
    pub lambda: f64,
}

/// Nearest intersection of `p + λu` (λ > 0) with the ellipsoid inflated by `target_height` metres.
///
/// The axes are scaled to turn the ellipsoid into the unit sphere; the returned height is
/// the inflation height of the surface that was hit.
pub fn intersect_ellipsoid(p_ecef: &Vector3<f64>, u_ecef: &Vector3<f64>, target_height: f64) -> Result<Intersection> {
    if !(u_ecef.norm() > 0.0) {
        return Err(Error::Domain("line-of-sight vector has zero length".into()));
    }
    let h = target_height / 1000.0;
    let scale = Vector3::new(1.0 / (WGS84_A_KM + h), 1.0 / (WGS84_A_KM + h), 1.0 / (WGS84_B_KM + h));
    let ps = p_ecef.component_mul(&scale);
    let us = u_ecef.component_mul(&scale);
    let a = us.norm_squared();
    let b = ps.dot(&us);
    let c = ps.norm_squared() - 1.0;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return Err(Error::MissesEarth);
    }
    let q = -(b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let lambda = [r1, r2].into_iter().filter(|l| *l > 0.0).fold(f64::INFINITY, f64::min);
    if !lambda.is_finite() {
        return Err(Error::MissesEarth);
    }
    let ecef = p_ecef + u_ecef * lambda;
    let (lat, lon, _) = ecef_to_geodetic(&ecef);
    Ok(Intersection {
        point: GeodeticPoint {
            lat,
            lon,
            height: target_height,
        },
        ecef,
        lambda,
    })
}

/// Iterative ECEF (km) → geodetic (deg, deg, m).
pub fn ecef_to_geodetic(x: &Vector3<f64>) -> (f64, f64, f64) {
    let lon = x.y.atan2(x.x);
    let p = x.x.hypot(x.y);
    let mut lat = x.z.atan2(p * (1.0 - WGS84_E2));
    let mut h = 0.0;
    for _ in 0..30 {
        let s = lat.sin();
        let n = WGS84_A_KM / (1.0 - WGS84_E2 * s * s).sqrt();
        h = if lat.cos().abs() > 1e-9 {
            p / lat.cos() - n
        } else {
            x.z.abs() - WGS84_B_KM
        };
        let next = x.z.atan2(p * (1.0 - WGS84_E2 * n / (n + h)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    (lat.to_degrees(), normalize_lon(lon.to_degrees()), h * 1000.0)
}

/// Geodetic (deg, deg, m) → ECEF (km).
pub fn geodetic_to_ecef(pt: &GeodeticPoint) -> Vector3<f64> {
    let (slat, clat) = pt.lat.to_radians().sin_cos();
    let (slon, clon) = pt.lon.to_radians().sin_cos();
    let n = WGS84_A_KM / (1.0 - WGS84_E2 * slat * slat).sqrt();
    let h = pt.height / 1000.0;
    Vector3::new(
        (n + h) * clat * clon,
        (n + h) * clat * slon,
        (n * (1.0 - WGS84_E2) + h) * slat,
    )
}
