//! Subpixel refinement of correlation peaks.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::surface::CorrelationSurface;
use crate::error::{Error, Result};

/// Refined peak position relative to the zero shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubpixelPeak {
    pub d_line: f64,
    pub d_pixel: f64,
    /// The 3×3 fit had no interior maximum; the integer peak was returned.
    pub fallback: bool,
}

/// Offset of the maximum of the least-squares biquadratic through a 3×3 neighbourhood
/// (`v[1][1]` is the centre). `None` when the fitted quadratic has no maximum.
pub fn biquadratic_offset(v: &[[f64; 3]; 3]) -> Option<(f64, f64)> {
    // f(y, x) = a + b x + c y + d x² + e x y + g y², x and y in {-1, 0, 1}.
    // The 3×3 design is orthogonal after centring, so the normal equations are closed form.
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (i, row) in v.iter().enumerate() {
        for (j, &f) in row.iter().enumerate() {
            let (y, x) = (i as f64 - 1.0, j as f64 - 1.0);
            sx += x * f;
            sy += y * f;
            sxy += x * y * f;
            sxx += (x * x - 2.0 / 3.0) * f;
            syy += (y * y - 2.0 / 3.0) * f;
        }
    }
    let b = sx / 6.0;
    let c = sy / 6.0;
    let e = sxy / 4.0;
    let d = sxx / 2.0;
    let g = syy / 2.0;
    let hess = Matrix2::new(2.0 * d, e, e, 2.0 * g);
    // maximum needs a negative definite Hessian
    if !(hess[(0, 0)] < 0.0 && hess.determinant() > 0.0) {
        return None;
    }
    let p = hess.try_inverse()? * Vector2::new(-b, -c);
    Some((p.y, p.x))
}

/// Biquadratic refinement around the integer maximum of a surface.
pub fn subpixel_peak(surface: &CorrelationSurface) -> Result<SubpixelPeak> {
    let (r, c) = surface.argmax();
    if r == 0 || c == 0 || r + 1 == surface.rows || c + 1 == surface.cols {
        return Err(Error::PeakOnEdge);
    }
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = surface.at(r + i - 1, c + j - 1);
        }
    }
    let (il, ip) = surface.shift_of(r, c);
    Ok(refine(il, ip, &v))
}

pub(crate) fn refine(line: f64, pixel: f64, v: &[[f64; 3]; 3]) -> SubpixelPeak {
    match biquadratic_offset(v) {
        Some((dl, dp)) => SubpixelPeak {
            d_line: line + dl.clamp(-0.5, 0.5),
            d_pixel: pixel + dp.clamp(-0.5, 0.5),
            fallback: false,
        },
        None => SubpixelPeak {
            d_line: line,
            d_pixel: pixel,
            fallback: true,
        },
    }
}
