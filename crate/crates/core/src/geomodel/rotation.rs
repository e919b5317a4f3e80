//! Elementary rotations (angles in degrees, active right-handed convention).

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

pub const ORTHONORMAL_TOL: f64 = 1e-12;

pub fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_axis(axis: &Vector3<f64>, deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), deg.to_radians()).into_inner()
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

pub fn check_rotation(r: &Matrix3<f64>, name: &str) -> Result<()> {
    let err = orthonormality_error(r);
    if !(err < ORTHONORMAL_TOL) || (r.determinant() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{name} is not a proper rotation (orthonormality error {err:e})"
        )));
    }
    Ok(())
}

/// Serde adapter writing a 3×3 matrix as three row arrays.
pub mod rows3 {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementary_rotations_are_orthonormal() {
        for deg in [-170.0, -33.3, 0.0, 0.01, 45.0, 90.0, 123.4] {
            for r in [rot_x(deg), rot_y(deg), rot_z(deg)] {
                assert!(orthonormality_error(&r) < ORTHONORMAL_TOL);
                assert!((r.determinant() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn axis_rotation_matches_elementary() {
        let a = rot_axis(&Vector3::z(), 30.0);
        assert!((a - rot_z(30.0)).abs().max() < 1e-15);
    }

    #[test]
    fn rejects_scaled_matrix() {
        let m = Matrix3::identity() * 1.001;
        assert!(check_rotation(&m, "m").is_err());
    }
}
