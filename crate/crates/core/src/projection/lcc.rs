//! Ellipsoidal Lambert conformal conic projection (one or two standard parallels).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{normalize_lon, GeodeticPoint, WGS84_A_KM, WGS84_E2};

const A_M: f64 = WGS84_A_KM * 1000.0;
const MAX_LAT_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LccParams {
    pub std_parallel_1: f64,
    pub std_parallel_2: f64,
    pub lat_origin: f64,
    pub lon_origin: f64,
    pub false_easting: f64,
    pub false_northing: f64,
}

impl Default for LccParams {
    /// Conventional zone for the Indian subcontinent.
    fn default() -> Self {
        Self {
            std_parallel_1: 12.472944,
            std_parallel_2: 35.172806,
            lat_origin: 24.0,
            lon_origin: 80.0,
            false_easting: 0.0,
            false_northing: 0.0,
        }
    }
}

impl LccParams {
    pub fn validate(&self) -> Result<()> {
        let (p1, p2) = (self.std_parallel_1, self.std_parallel_2);
        if !(p1.abs() < 90.0 && p2.abs() < 90.0 && self.lat_origin.abs() < 90.0) {
            return Err(Error::Config("LCC latitudes must lie strictly inside (-90, 90)".into()));
        }
        if p1 + p2 == 0.0 {
            return Err(Error::Config(
                "LCC standard parallels symmetric about the equator give a cylinder, not a cone".into(),
            ));
        }
        if !(self.lon_origin.is_finite() && self.false_easting.is_finite() && self.false_northing.is_finite()) {
            return Err(Error::Config("LCC origin must be finite".into()));
        }
        Ok(())
    }
}

fn m(phi: f64) -> f64 {
    let s = phi.sin();
    phi.cos() / (1.0 - WGS84_E2 * s * s).sqrt()
}

fn t(phi: f64) -> f64 {
    let e = WGS84_E2.sqrt();
    let es = e * phi.sin();
    (FRAC_PI_4 - phi / 2.0).tan() / ((1.0 - es) / (1.0 + es)).powf(e / 2.0)
}

/// Cone constants derived once from the parameters.
#[derive(Debug, Clone, Copy)]
pub struct Lcc {
    params: LccParams,
    n: f64,
    af: f64,
    rho0: f64,
}

impl Lcc {
    pub fn new(params: LccParams) -> Result<Self> {
        params.validate()?;
        let phi1 = params.std_parallel_1.to_radians();
        let phi2 = params.std_parallel_2.to_radians();
        let (m1, t1) = (m(phi1), t(phi1));
        let n = if (phi1 - phi2).abs() < 1e-12 {
            phi1.sin()
        } else {
            (m1.ln() - m(phi2).ln()) / (t1.ln() - t(phi2).ln())
        };
        let af = A_M * m1 / (n * t1.powf(n));
        let rho0 = af * t(params.lat_origin.to_radians()).powf(n);
        Ok(Self { params, n, af, rho0 })
    }

    pub fn params(&self) -> &LccParams {
        &self.params
    }

    pub fn forward(&self, pt: &GeodeticPoint) -> Result<(f64, f64)> {
        if !(pt.lat.abs() < 90.0) || !pt.lon.is_finite() {
            return Err(Error::Domain(format!(
                "latitude {} is not projectable (poles are excluded)",
                pt.lat
            )));
        }
        let rho = self.af * t(pt.lat.to_radians()).powf(self.n);
        let theta = self.n * normalize_lon(pt.lon - self.params.lon_origin).to_radians();
        Ok((
            self.params.false_easting + rho * theta.sin(),
            self.params.false_northing + self.rho0 - rho * theta.cos(),
        ))
    }

    pub fn inverse(&self, x: f64, y: f64) -> Result<GeodeticPoint> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Domain("projected coordinates must be finite".into()));
        }
        let sign = self.n.signum();
        let dx = x - self.params.false_easting;
        let dy = self.rho0 - (y - self.params.false_northing);
        let rho = sign * dx.hypot(dy);
        if rho == 0.0 {
            return Ok(GeodeticPoint {
                lat: 90.0 * sign,
                lon: normalize_lon(self.params.lon_origin),
                height: 0.0,
            });
        }
        let theta = (sign * dx).atan2(sign * dy);
        let dlon = theta / self.n;
        if dlon.abs() > std::f64::consts::PI {
            return Err(Error::Domain(format!(
                "({x}, {y}) lies in the gap of the developed cone"
            )));
        }
        let tt = (rho / self.af).powf(1.0 / self.n);
        if !(tt.is_finite() && tt > 0.0) {
            return Err(Error::Domain(format!("({x}, {y}) is outside the projection")));
        }
        let e = WGS84_E2.sqrt();
        let mut phi = FRAC_PI_2 - 2.0 * tt.atan();
        for _ in 0..MAX_LAT_ITERATIONS {
            let es = e * phi.sin();
            let next = FRAC_PI_2 - 2.0 * (tt * ((1.0 - es) / (1.0 + es)).powf(e / 2.0)).atan();
            let done = (next - phi).abs() < 1e-15;
            phi = next;
            if done {
                return Ok(GeodeticPoint {
                    lat: phi.to_degrees(),
                    lon: normalize_lon(self.params.lon_origin + dlon.to_degrees()),
                    height: 0.0,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_LAT_ITERATIONS,
        })
    }

    /// Point scale factor of the projection at a latitude.
    pub fn scale_factor(&self, lat: f64) -> f64 {
        let phi = lat.to_radians();
        self.af * t(phi).powf(self.n) * self.n / (A_M * m(phi))
    }
}

pub fn lcc_forward(pt: &GeodeticPoint, p: &LccParams) -> Result<(f64, f64)> {
    Lcc::new(*p)?.forward(pt)
}

pub fn lcc_inverse(x: f64, y: f64, p: &LccParams) -> Result<GeodeticPoint> {
    Lcc::new(*p)?.inverse(x, y)
}
