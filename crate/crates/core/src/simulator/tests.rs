use super::*;
use crate::geomodel::{ground_distance_m, ENCODER_LSB_DEG};
use crate::projection::MapGrid;

fn quiet_config(pixels: usize) -> SimulationConfig {
    SimulationConfig {
        noise: EncoderNoiseModel::noiseless(),
        drift: DriftModel::none(),
        camera: CameraConstants::with_detector_pixels(pixels),
        ..Default::default()
    }
}

fn india() -> GeodeticPoint {
    GeodeticPoint::new(24.0, 80.0, 0.0).unwrap()
}

#[test]
fn single_frame_plan_points_at_origin() {
    let plan = ScanPlan::default();
    let align = AlignmentSet::prelaunch();
    let cam = CameraConstants::default();
    let seq = plan_raster_scan(&plan, &align, &cam).unwrap();
    assert_eq!(seq.len(), 1);
    assert_eq!(seq[0].encoder, reference_encoder(&align, &cam).unwrap());
}

#[test]
fn default_steps_give_twenty_percent_overlap() {
    let plan = ScanPlan::default();
    let overlap = plan.nominal_overlap(&CameraConstants::default());
    let expected = 1.0 - (2.0 * 0.07) / 0.176;
    assert!((overlap - expected).abs() < 1e-12);
    assert!((overlap - 0.2045).abs() < 1e-4);
}

#[test]
fn boustrophedon_rows_alternate() {
    let plan = ScanPlan {
        rows: 3,
        cols: 4,
        ..Default::default()
    };
    let cam = CameraConstants::default();
    let seq = plan_raster_scan(&plan, &AlignmentSet::prelaunch(), &cam).unwrap();
    assert_eq!(seq.len(), 12);
    let cols: Vec<usize> = seq.iter().map(|p| p.grid_col).collect();
    assert_eq!(cols, vec![0, 1, 2, 3, 3, 2, 1, 0, 0, 1, 2, 3]);
    let step = (0.07 / cam.encoder_lsb_deg).round() as u32;
    // row 0 east: counts grow; row 1 west: counts fall
    assert_eq!(seq[1].encoder.ew_counts - seq[0].encoder.ew_counts, step);
    assert_eq!(seq[4].encoder.ew_counts - seq[5].encoder.ew_counts, step);
    let ns_step = (0.14 / cam.encoder_lsb_deg).round() as u32;
    assert_eq!(seq[4].encoder.ns_counts - seq[3].encoder.ns_counts, ns_step);
    assert_eq!(seq[4].encoder.ew_counts, seq[3].encoder.ew_counts);
}

#[test]
fn plan_rejects_empty_grid_and_bad_steps() {
    let align = AlignmentSet::prelaunch();
    let cam = CameraConstants::default();
    let bad = ScanPlan {
        rows: 0,
        ..Default::default()
    };
    assert!(matches!(plan_raster_scan(&bad, &align, &cam), Err(Error::Config(_))));
    let bad = ScanPlan {
        ew_step_deg: 0.0,
        ..Default::default()
    };
    assert!(plan_raster_scan(&bad, &align, &cam).is_err());
}

#[test]
fn noiseless_encoder_returns_commanded() {
    let cmd = EncoderReading::new(1000, 2000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let got = sample_encoder(&cmd, &EncoderNoiseModel::noiseless(), &mut rng).unwrap();
    assert_eq!(got, cmd);
}

#[test]
fn encoder_noise_is_bounded_and_hits_both_ends() {
    let cmd = EncoderReading::new(100_000, 200_000).unwrap();
    let model = EncoderNoiseModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for _ in 0..100_000 {
        let r = sample_encoder(&cmd, &model, &mut rng).unwrap();
        for d in [r.ew_counts as i64 - 100_000, r.ns_counts as i64 - 200_000] {
            assert!(d.unsigned_abs() <= model.settle_threshold_counts as u64);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    assert_eq!((lo, hi), (-5, 5));
}

#[test]
fn noise_threshold_below_amplitude_is_rejected() {
    let model = EncoderNoiseModel {
        pp_counts: 20,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cmd = EncoderReading::new(1000, 1000).unwrap();
    assert!(matches!(sample_encoder(&cmd, &model, &mut rng), Err(Error::Config(_))));
}

#[test]
fn worst_band_to_band_noise_is_forty_pixels_ew() {
    let cam = CameraConstants::default();
    let px = cam.ew_ground_gain * 10.0 * ENCODER_LSB_DEG / cam.ifov_deg();
    assert!((px - 40.0).abs() < 0.1, "{px}");
    let px = cam.ns_ground_gain * 10.0 * ENCODER_LSB_DEG / cam.ifov_deg();
    assert!((px - 20.0).abs() < 0.05, "{px}");
}

#[test]
fn drift_propagation() {
    let base = Attitude::new(0.01, -0.02, 0.003);
    let d = DriftModel::default();
    assert_eq!(propagate_platform(0.0, &d, &base).unwrap(), base);
    let a = propagate_platform(20.0, &d, &base).unwrap();
    assert!((a.roll - base.roll - 2e-4).abs() < 1e-15);
    assert!((a.pitch - base.pitch - 2e-4).abs() < 1e-15);
    assert_eq!(a.yaw, base.yaw);
    assert_eq!(propagate_platform(500.0, &DriftModel::none(), &base).unwrap(), base);
    assert!(propagate_platform(-1.0, &d, &base).is_err());
}

#[test]
fn jitter_is_zero_mean_and_bounded() {
    let d = DriftModel {
        jitter_pp_deg: 1e-4,
        ..DriftModel::none()
    };
    let base = Attitude::default();
    let samples: Vec<f64> = (0..20_000)
        .map(|i| propagate_platform(i as f64 * 0.0731, &d, &base).unwrap().roll)
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    assert!(mean.abs() < 2e-7, "{mean}");
    assert!(samples.iter().all(|v| v.abs() <= 5e-5 + 1e-18));
}

#[test]
fn twenty_seconds_of_drift_moves_nadir_by_125_m() {
    let cam = CameraConstants::default();
    let cfg = SimulationConfig::default();
    let snap0 = {
        let sim_cfg = quiet_config(2048);
        let scene = Scene::fractal(FractalTexture::default());
        let sim = ScanSimulator::new(&sim_cfg, &scene).unwrap();
        sim.band_geometry(0).unwrap()[0].truth.clone()
    };
    let c = cam.center();
    for d in [
        DriftModel {
            roll_rate: 1e-5,
            ..DriftModel::none()
        },
        DriftModel {
            pitch_rate: 1e-5,
            ..DriftModel::none()
        },
    ] {
        let mut moved = snap0.clone();
        moved.attitude = propagate_platform(20.0, &d, &cfg.base_attitude).unwrap();
        let g0 = SensorModel::new(&snap0, &cam)
            .unwrap()
            .geolocate_at_height(c, c, 0.0)
            .unwrap();
        let g1 = SensorModel::new(&moved, &cam)
            .unwrap()
            .geolocate_at_height(c, c, 0.0)
            .unwrap();
        let m = ground_distance_m(&g0, &g1);
        // near nadir the platform rotation maps 1:1 into line-of-sight rotation
        assert!((m - 124.9).abs() < 1.0, "{m}");
    }
}

#[test]
fn aiming_centres_the_scan_on_target() {
    let mut cfg = quiet_config(2048);
    cfg.plan.rows = 3;
    cfg.plan.cols = 3;
    cfg.aim_at(&india()).unwrap();
    let scene = Scene::fractal(FractalTexture::default());
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    let centre = sim.band_geometry(4).unwrap().remove(0).telemetry;
    let c = cfg.camera.center();
    let g = SensorModel::new(&centre, &cfg.camera)
        .unwrap()
        .geolocate_at_height(c, c, 0.0)
        .unwrap();
    // within one encoder count of the requested pointing (~8 km at most)
    assert!(ground_distance_m(&g, &india()) < 10_000.0, "{g:?}");
}

#[test]
fn noiseless_bands_are_identical() {
    let mut cfg = quiet_config(96);
    cfg.aim_at(&india()).unwrap();
    let scene = Scene::fractal(FractalTexture::default());
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    let (frame, truth) = sim.acquire(0).unwrap();
    assert_eq!(frame.bands.len(), 6);
    for b in &frame.bands[1..] {
        assert_eq!(b.data, frame.bands[0].data);
    }
    for r in &truth {
        assert!(r.shift_line.abs() < 1e-6 && r.shift_pixel.abs() < 1e-6);
    }
}

#[test]
fn truth_shifts_follow_encoder_deltas() {
    let mut cfg = SimulationConfig {
        drift: DriftModel::none(),
        ..Default::default()
    };
    cfg.plan.rows = 2;
    cfg.plan.cols = 3;
    cfg.aim_at(&india()).unwrap();
    let scene = Scene::fractal(FractalTexture::default());
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    let cam = &cfg.camera;
    let px_per_count = cam.encoder_lsb_deg / cam.ifov_deg();
    let mut checked = 0;
    for f in 0..sim.frame_count() {
        let recs = sim.truth_records(f).unwrap();
        let r0 = &recs[cfg.reference_band];
        for r in &recs {
            let d_ew = r.realized.ew_counts as f64 - r0.realized.ew_counts as f64;
            let d_ns = r.realized.ns_counts as f64 - r0.realized.ns_counts as f64;
            let expect_px = cam.ew_ground_gain * d_ew * px_per_count;
            let expect_ln = cam.ns_ground_gain * d_ns * px_per_count;
            // The off-nadir NS angle rotates the image by a few degrees, so compare the
            // displacement length; content moves against the mirror motion.
            let got = r.shift_line.hypot(r.shift_pixel);
            let want = expect_ln.hypot(expect_px);
            assert!((got - want).abs() <= 0.02 * want + 1e-6, "{got} vs {want}");
            assert!(r.shift_line * expect_ln + r.shift_pixel * expect_px <= 0.0);
            checked += 1;
        }
    }
    assert_eq!(checked, 36);
}

#[test]
fn realized_counts_stay_within_threshold() {
    let mut cfg = SimulationConfig::default();
    cfg.plan.rows = 2;
    cfg.plan.cols = 2;
    cfg.aim_at(&india()).unwrap();
    let scene = Scene::fractal(FractalTexture::default());
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    for f in 0..4 {
        for r in sim.truth_records(f).unwrap() {
            let th = cfg.noise.settle_threshold_counts as i64;
            assert!((r.realized.ew_counts as i64 - r.commanded.ew_counts as i64).abs() <= th);
            assert!((r.realized.ns_counts as i64 - r.commanded.ns_counts as i64).abs() <= th);
        }
    }
}

#[test]
fn scan_is_deterministic_ordered_and_complete() {
    let mut cfg = SimulationConfig {
        camera: CameraConstants::with_detector_pixels(64),
        ..Default::default()
    };
    cfg.plan.rows = 2;
    cfg.plan.cols = 2;
    cfg.plan.ew_step_deg = 0.07 * 64.0 / 2048.0;
    cfg.plan.ns_step_deg = 0.14 * 64.0 / 2048.0;
    cfg.noise.rng_seed = 9;
    cfg.aim_at(&india()).unwrap();
    let scene = Scene::fractal(FractalTexture::default());
    let (a, ta) = acquire_scan(&cfg, &scene).unwrap();
    let (b, tb) = acquire_scan(&cfg, &scene).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(ta, tb);
    assert_eq!(serde_json::to_string(&ta).unwrap(), serde_json::to_string(&tb).unwrap());
    for (fa, fb) in a.iter().zip(&b) {
        for (x, y) in fa.bands.iter().zip(&fb.bands) {
            assert_eq!(x.data, y.data);
        }
    }
    let times: Vec<f64> = ta.records.iter().map(|r| r.time_s).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    // drift accumulates across the whole scan
    let first = &ta.records[0].attitude;
    let last = &ta.records.last().unwrap().attitude;
    assert!(last.roll > first.roll && last.pitch > first.pitch);
}

#[test]
fn footprint_off_raster_scene_is_a_domain_error() {
    let mut cfg = quiet_config(64);
    cfg.aim_at(&india()).unwrap();
    // a small texture patch far from the footprint
    let grid = MapGrid::aligned(2e6, 2e6, 2.01e6, 2.01e6, 100.0).unwrap();
    let scene = Scene::raster(FractalTexture::default().to_raster(&grid)).unwrap();
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    assert!(matches!(sim.acquire(0), Err(Error::Domain(_))));
}

#[test]
fn config_roundtrips_through_toml() {
    let cfg = SimulationConfig::default();
    let text = toml::to_string(&cfg).unwrap();
    let back: SimulationConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert!(toml::from_str::<SimulationConfig>("bogus = 1").is_err());
}
