use super::*;
use crate::projection::{ElevationGrid, ElevationSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FLAT: ElevationSource = ElevationSource::Constant { height_m: 0.0 };

/// Flight alignment whose reference angles sit exactly on encoder counts, with the
/// mirror at its reference position over a satellite at `lon`.
fn nadir_snapshot(lon: f64) -> GeometrySnapshot {
    let lsb = ENCODER_LSB_DEG;
    let mut alignment = AlignmentSet::prelaunch();
    let enc = reference_encoder(&alignment, &CameraConstants::default()).unwrap();
    alignment.ew_ref_angle = enc.ew_counts as f64 * lsb;
    alignment.ns_ref_angle = enc.ns_counts as f64 * lsb;
    GeometrySnapshot {
        ephemeris: Ephemeris::geostationary(lon, 0.0),
        attitude: Attitude::default(),
        encoder: enc,
        alignment,
        time: 0.0,
    }
}

fn center(cam: &CameraConstants) -> f64 {
    cam.center()
}

#[test]
fn center_pixel_at_reference_hits_subsatellite_point() {
    let cam = CameraConstants::default();
    let snap = nadir_snapshot(55.0);
    let c = center(&cam);
    let g = geolocate(c, c, &snap, &cam, &FLAT).unwrap();
    assert!(g.lat.abs() < 1e-9, "{g:?}");
    assert!((g.lon - 55.0).abs() < 1e-9, "{g:?}");
}

#[test]
fn sensor_chain_is_orthogonal() {
    let mut snap = nadir_snapshot(80.0);
    snap.attitude = Attitude::new(0.02, -0.01, 0.03);
    snap.encoder = snap.encoder.offset(2500, -1300).unwrap();
    let model = SensorModel::new(&snap, &CameraConstants::default()).unwrap();
    let m = model.look_to_ecef;
    assert!(orthonormality_error(&m) < 1e-12);
    // a single reflection in the chain
    assert!((m.determinant() + 1.0).abs() < 1e-12);
}

/// Angle between the lines of sight of the centre pixel for two snapshots, degrees.
fn los_angle(a: &GeometrySnapshot, b: &GeometrySnapshot, cam: &CameraConstants) -> f64 {
    let c = center(cam);
    let ua = SensorModel::new(a, cam).unwrap().line_of_sight(c, c).normalize();
    let ub = SensorModel::new(b, cam).unwrap().line_of_sight(c, c).normalize();
    ua.dot(&ub).clamp(-1.0, 1.0).acos().to_degrees()
}

#[test]
fn mirror_steps_scale_by_ground_gains() {
    let cam = CameraConstants::default();
    let base = nadir_snapshot(55.0);
    let counts = 200i64;
    let delta = counts as f64 * cam.encoder_lsb_deg;
    let c = center(&cam);
    let g0 = geolocate(c, c, &base, &cam, &FLAT).unwrap();

    let mut ew = base.clone();
    ew.encoder = base.encoder.offset(counts, 0).unwrap();
    let ratio = los_angle(&base, &ew, &cam) / delta;
    assert!((ratio - cam.ew_ground_gain).abs() < 1e-3, "EW ratio {ratio}");
    let g = geolocate(c, c, &ew, &cam, &FLAT).unwrap();
    assert!(g.lon > g0.lon, "positive EW counts look east");
    assert!((g.lat - g0.lat).abs() < 1e-3 * (g.lon - g0.lon));

    let mut ns = base.clone();
    ns.encoder = base.encoder.offset(0, counts).unwrap();
    let ratio = los_angle(&base, &ns, &cam) / delta;
    assert!((ratio - cam.ns_ground_gain).abs() < 1e-3, "NS ratio {ratio}");
    let g = geolocate(c, c, &ns, &cam, &FLAT).unwrap();
    assert!(g.lat < g0.lat, "positive NS counts look south");
    assert!((g.lon - g0.lon).abs() < 1e-3 * (g.lat - g0.lat).abs());
}

#[test]
fn fifteen_counts_move_sixty_and_thirty_pixels() {
    let cam = CameraConstants::default();
    let base = nadir_snapshot(55.0);
    let c = center(&cam);
    let g0 = geolocate(c, c, &base, &cam, &FLAT).unwrap();
    let gsd = cam.nadir_gsd_m();
    let mut ew = base.clone();
    ew.encoder = base.encoder.offset(15, 0).unwrap();
    let px_ew = ground_distance_m(&g0, &geolocate(c, c, &ew, &cam, &FLAT).unwrap()) / gsd;
    assert!((px_ew - 60.0).abs() <= 3.0, "{px_ew}");
    let mut ns = base.clone();
    ns.encoder = base.encoder.offset(0, 15).unwrap();
    let px_ns = ground_distance_m(&g0, &geolocate(c, c, &ns, &cam, &FLAT).unwrap()) / gsd;
    assert!((px_ns - 30.0).abs() <= 1.5, "{px_ns}");
}

#[test]
fn detector_axes_point_east_and_south() {
    let cam = CameraConstants::default();
    let snap = nadir_snapshot(55.0);
    let model = SensorModel::new(&snap, &cam).unwrap();
    let c = center(&cam);
    let g0 = model.geolocate(c, c, &FLAT).unwrap();
    let right = model.geolocate(c, c + 100.0, &FLAT).unwrap();
    let down = model.geolocate(c + 100.0, c, &FLAT).unwrap();
    assert!(right.lon > g0.lon);
    assert!(down.lat < g0.lat);
    // one detector pixel spans one nadir GSD
    let px = ground_distance_m(&g0, &right) / 100.0;
    assert!((px / cam.nadir_gsd_m() - 1.0).abs() < 1e-3, "{px}");
}

#[test]
fn ew_offset_grows_monotonically_with_psi_y() {
    let cam = CameraConstants::default();
    let model = SensorModel::new(&nadir_snapshot(55.0), &cam).unwrap();
    let c = center(&cam);
    let mut last = f64::NEG_INFINITY;
    for k in 0..=64 {
        let col = -0.5 + k as f64 * 32.0;
        let g = model.geolocate(c, col.min(2047.5), &FLAT).unwrap();
        assert!(g.lon > last);
        last = g.lon;
    }
}

#[test]
fn ground_to_pixel_roundtrip() {
    let cam = CameraConstants::default();
    let mut snap = nadir_snapshot(74.0);
    snap.encoder = snap.encoder.offset(-3000, -2200).unwrap();
    snap.attitude = Attitude::new(0.003, -0.002, 0.01);
    snap.time = 5400.0;
    snap.ephemeris.epoch = 5400.0;
    let model = SensorModel::new(&snap, &cam).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (r, c) = (rng.gen_range(0.0..2047.0), rng.gen_range(0.0..2047.0));
        let h = rng.gen_range(-100.0..3000.0);
        let g = model
            .geolocate(r, c, &ElevationSource::Constant { height_m: h })
            .unwrap();
        let (r2, c2) = ground_to_pixel(&g, &snap, &cam).unwrap();
        assert!((r2 - r).abs() < 1e-3 && (c2 - c).abs() < 1e-3, "{r} {c} -> {r2} {c2}");
    }
}

#[test]
fn subsatellite_point_maps_to_detector_center() {
    let cam = CameraConstants::default();
    let snap = nadir_snapshot(55.0);
    let (r, c) = ground_to_pixel(&GeodeticPoint::new(0.0, 55.0, 0.0).unwrap(), &snap, &cam).unwrap();
    assert!((r - cam.center()).abs() < 1e-6 && (c - cam.center()).abs() < 1e-6);
}

#[test]
fn distant_point_is_outside_frame() {
    let cam = CameraConstants::default();
    let snap = nadir_snapshot(55.0);
    let res = ground_to_pixel(&GeodeticPoint::new(0.0, 57.0, 0.0).unwrap(), &snap, &cam);
    assert!(matches!(res, Err(Error::OutsideFrame { .. })), "{res:?}");
}

#[test]
fn terrain_iteration_lands_on_the_surface() {
    let cam = CameraConstants::default();
    let mut snap = nadir_snapshot(55.0);
    snap.encoder = snap.encoder.offset(4000, -9000).unwrap();
    let (rows, cols) = (21, 21);
    let heights = (0..rows * cols)
        .map(|i| 500.0 + 40.0 * (i % cols) as f64 + 25.0 * (i / cols) as f64)
        .collect();
    let dem = ElevationSource::Grid(ElevationGrid {
        lat_min: 0.0,
        lon_min: 50.0,
        spacing_deg: 0.5,
        rows,
        cols,
        heights,
    });
    let model = SensorModel::new(&snap, &cam).unwrap();
    let g = model.geolocate(100.0, 1900.0, &dem).unwrap();
    assert!((g.height - dem.height_at(g.lat, g.lon)).abs() < 0.1);
    let flat = model.geolocate(100.0, 1900.0, &FLAT).unwrap();
    assert!(ground_distance_m(&g, &flat) > 50.0);
    let (r, c) = model.ground_to_pixel(&g).unwrap();
    assert!((r - 100.0).abs() < 1e-3 && (c - 1900.0).abs() < 1e-3);
}

#[test]
fn off_detector_pixels_are_rejected() {
    let cam = CameraConstants::default();
    let snap = nadir_snapshot(55.0);
    assert!(matches!(
        geolocate(-1.0, 5.0, &snap, &cam, &FLAT),
        Err(Error::Domain(_))
    ));
}

#[test]
fn pointing_off_the_disk_misses_the_earth() {
    let cam = CameraConstants::default();
    let mut snap = nadir_snapshot(55.0);
    // 9 deg of mirror EW = 18 deg on the sky, beyond the 8.7 deg Earth radius
    let counts = (9.0 / cam.encoder_lsb_deg) as i64;
    snap.encoder = snap.encoder.offset(counts, 0).unwrap();
    let c = center(&cam);
    assert!(matches!(geolocate(c, c, &snap, &cam, &FLAT), Err(Error::MissesEarth)));
}

#[test]
fn snapshot_json_roundtrip() {
    let mut snap = nadir_snapshot(55.0);
    snap.alignment.mirrorcube_to_instr_roll = 0.012;
    let text = serde_json::to_string(&snap).unwrap();
    let back: GeometrySnapshot = serde_json::from_str(&text).unwrap();
    assert_eq!(back, snap);
    let cam: CameraConstants =
        serde_json::from_str(&serde_json::to_string(&CameraConstants::default()).unwrap()).unwrap();
    assert_eq!(cam, CameraConstants::default());
    assert!(serde_json::from_str::<Attitude>(r#"{"roll":0,"pitch":0,"yaw":0,"bogus":1}"#).is_err());
}

#[test]
fn encoder_constants() {
    assert!((ENCODER_LSB_DEG - 1.7166137695e-4).abs() < 1e-12);
    assert_eq!(ENCODER_MAX_COUNTS, 2_097_151);
    let cam = CameraConstants::default();
    assert!((cam.ifov_deg() - 8.59375e-5).abs() < 1e-12);
    assert!((cam.nadir_gsd_m() - 53.674).abs() < 0.01);
}
