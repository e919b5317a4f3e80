//! Registration accuracy on the procedural texture and on simulated frames.

use ghrc_core::geomodel::{CameraConstants, GeodeticPoint};
use ghrc_core::registration::{estimate_band_shifts, ncc_estimate, phase_correlate, BbrConfig, Chip};
use ghrc_core::simulator::{DriftModel, EncoderNoiseModel, FractalTexture, ScanSimulator, Scene, SimulationConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GSD: f64 = 60.0;

/// Chip of the texture displaced by `d`: `chip(p) = base(p - d)`.
fn chip(t: &FractalTexture, n: usize, dl: f64, dp: f64) -> Chip {
    Chip::from_fn(n, n, |r, c| t.value((c as f64 - dp) * GSD, -(r as f64 - dl) * GSD))
}

fn india() -> GeodeticPoint {
    GeodeticPoint::new(24.0, 80.0, 0.0).unwrap()
}

#[test]
fn ncc_translation_recovery_rms() {
    let t = FractalTexture::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reference = chip(&t, 128, 0.0, 0.0);
    let mut sq = 0.0;
    for _ in 0..200 {
        let (dl, dp) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let e = ncc_estimate(&reference, &chip(&t, 128, dl, dp), 24).unwrap();
        sq += (e.d_line - dl).powi(2) + (e.d_pixel - dp).powi(2);
    }
    let rms = (sq / 200.0).sqrt();
    assert!(rms < 0.15, "NCC RMS error {rms} px");
}

#[test]
fn phase_translation_recovery_rms() {
    let t = FractalTexture::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sq = 0.0;
    for _ in 0..200 {
        let (dl, dp) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let e = phase_correlate(&chip(&t, 128, 0.0, 0.0), &chip(&t, 128, dl, dp)).unwrap();
        assert!(e.confident, "{e:?}");
        sq += (e.d_line - dl).powi(2) + (e.d_pixel - dp).powi(2);
    }
    let rms = (sq / 200.0).sqrt();
    assert!(rms < 0.3, "phase correlation RMS error {rms} px");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimates_are_antisymmetric(dl in -15.0f64..15.0, dp in -15.0f64..15.0, seed in 0u64..1000) {
        let t = FractalTexture { seed, ..Default::default() };
        let a = chip(&t, 96, 0.0, 0.0);
        let b = chip(&t, 96, dl, dp);
        let ab = ncc_estimate(&a, &b, 20).unwrap();
        let ba = ncc_estimate(&b, &a, 20).unwrap();
        prop_assert!((ab.d_line + ba.d_line).abs() < 0.1);
        prop_assert!((ab.d_pixel + ba.d_pixel).abs() < 0.1);
        let ab = phase_correlate(&a, &b).unwrap();
        let ba = phase_correlate(&b, &a).unwrap();
        prop_assert!((ab.d_line + ba.d_line).abs() < 0.1);
        prop_assert!((ab.d_pixel + ba.d_pixel).abs() < 0.1);
    }
}

fn noisy_config(pixels: usize, seed: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig {
        camera: CameraConstants::with_detector_pixels(pixels),
        ..Default::default()
    };
    cfg.noise.rng_seed = seed;
    cfg.aim_at(&india()).unwrap();
    cfg
}

#[test]
fn band_estimates_match_truth_log() {
    let cfg = noisy_config(640, 5);
    let scene = Scene::fractal(FractalTexture::default());
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    let bbr = BbrConfig {
        chip_grid: 2,
        chip_size: 256,
        search_radius: 64,
    };
    let (frame, truth) = sim.acquire(0).unwrap();
    let regs = estimate_band_shifts(&frame.bands, cfg.reference_band, &bbr).unwrap();
    for (reg, t) in regs.iter().zip(&truth) {
        let e = reg.estimate.unwrap();
        let err = (e.d_line - t.shift_line).hypot(e.d_pixel - t.shift_pixel);
        assert!(
            err < 0.1,
            "band {}: estimate ({}, {}) truth ({}, {})",
            t.band,
            e.d_line,
            e.d_pixel,
            t.shift_line,
            t.shift_pixel
        );
    }
}

#[test]
fn large_injected_shifts_are_recovered() {
    // fifteen counts is the settle threshold: 60 px EW, 30 px NS
    let mut cfg = noisy_config(640, 0);
    cfg.noise = EncoderNoiseModel::noiseless();
    cfg.drift = DriftModel::none();
    let scene = Scene::fractal(FractalTexture::default());
    let sim = ScanSimulator::new(&cfg, &scene).unwrap();
    let geo = sim.band_geometry(0).unwrap();
    let lcc = ghrc_core::projection::Lcc::new(cfg.lcc).unwrap();
    let reference = &geo[cfg.reference_band].truth;
    let mut bands = Vec::new();
    let mut injected = Vec::new();
    for (d_ew, d_ns) in [(0, 0), (15, 15), (-15, -15), (15, -15)] {
        let mut snap = reference.clone();
        snap.encoder = snap.encoder.offset(d_ew, d_ns).unwrap();
        bands.push(ghrc_core::simulator::acquire_frame(&scene, &lcc, &cfg.elevation, &cfg.camera, &snap).unwrap());
        injected.push((d_ew, d_ns));
    }
    let bbr = BbrConfig {
        chip_grid: 2,
        chip_size: 256,
        search_radius: 64,
    };
    let regs = estimate_band_shifts(&bands, 0, &bbr).unwrap();
    let k = cfg.camera.encoder_lsb_deg / cfg.camera.ifov_deg();
    for (reg, (d_ew, d_ns)) in regs.iter().zip(injected).skip(1) {
        let e = reg.estimate.unwrap();
        let expect = (2.0 * k * d_ew as f64).hypot(k * d_ns as f64);
        let got = e.d_line.hypot(e.d_pixel);
        assert!((got - expect).abs() < 0.02 * expect, "{got} vs {expect}");
        assert!(e.d_pixel.abs() > 55.0 && e.d_line.abs() > 25.0, "{e:?}");
    }
}
