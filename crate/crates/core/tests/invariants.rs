//! Geometric invariants over random inputs.

use nalgebra::Vector3;
use proptest::prelude::*;

use ghrc_core::geomodel::{
    orthonormality_error, reference_encoder, reflect, rot_axis, rot_x, rot_y, rot_z, AlignmentSet, Attitude,
    CameraConstants, Ephemeris, GeodeticPoint, GeometrySnapshot, SensorModel,
};
use ghrc_core::projection::{BandView, ElevationSource, Lcc, LccParams, Raster};

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

fn nadir() -> GeometrySnapshot {
    let alignment = AlignmentSet::prelaunch();
    GeometrySnapshot {
        ephemeris: Ephemeris::geostationary(55.0, 0.0),
        attitude: Attitude::default(),
        encoder: reference_encoder(&alignment, &CameraConstants::default()).unwrap(),
        alignment,
        time: 0.0,
    }
}

proptest! {
    #[test]
    fn composed_rotations_stay_orthonormal(
        a in -180.0f64..180.0, b in -180.0f64..180.0, c in -180.0f64..180.0,
        axis in unit(), t in -180.0f64..180.0,
    ) {
        let r = rot_x(a) * rot_y(b) * rot_z(c) * rot_axis(&axis, t);
        prop_assert!(orthonormality_error(&r) <= 1e-12);
    }

    #[test]
    fn reflecting_twice_is_identity(u in (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0), n in unit()) {
        let u = Vector3::new(u.0, u.1, u.2);
        let back = reflect(&reflect(&u, &n).unwrap(), &n).unwrap();
        prop_assert!((back - u).abs().max() <= 1e-12 * u.norm().max(1.0));
    }

    #[test]
    fn geolocation_inverts(
        ew in -12_000i64..12_000, ns in -12_000i64..12_000,
        row in 0.0f64..2047.0, col in 0.0f64..2047.0, h in -100.0f64..3000.0,
    ) {
        let cam = CameraConstants::default();
        let base = nadir();
        let mut s = base.clone();
        s.encoder = base.encoder.offset(ew, ns).unwrap();
        let m = SensorModel::new(&s, &cam).unwrap();
        let g = m.geolocate(row, col, &ElevationSource::Constant { height_m: h }).unwrap();
        let (r2, c2) = m.ground_to_pixel(&g).unwrap();
        prop_assert!((r2 - row).abs() <= 1e-3 && (c2 - col).abs() <= 1e-3);
    }

    #[test]
    fn lcc_inverts(lat in -10.0f64..60.0, lon in 40.0f64..120.0) {
        let lcc = Lcc::new(LccParams::default()).unwrap();
        let (x, y) = lcc.forward(&GeodeticPoint::new(lat, lon, 0.0).unwrap()).unwrap();
        let g = lcc.inverse(x, y).unwrap();
        prop_assert!((g.lat - lat).abs() <= 1e-9 && (g.lon - lon).abs() <= 1e-9);
    }

    #[test]
    fn bicubic_reproduces_knots(
        (w, h, data, r, c) in (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(-1000.0f32..1000.0, w * h), 0..h, 0..w)
        }),
    ) {
        let raster = Raster::from_band(w, h, data.clone()).unwrap();
        prop_assert_eq!(BandView::of(&raster, 0).sample(r as f64, c as f64, None), Some(data[r * w + c]));
    }
}
