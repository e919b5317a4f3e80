//! simulate, bbr, georef, calibrate and mosaic.
//!
//! Layout of an output directory:
//! `frames/` raw multi-band frames and `frames/index.json` with their telemetry,
//! `truth.json`, `bbr/` band-registered frames, `georef/` per-frame map rasters,
//! `mosaic/` the mosaic, its quicklook and the reference plan, and `run_report.json`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ghrc_core::geomodel::{GeometrySnapshot, SensorModel};
use ghrc_core::mosaic::{
    build_mosaic, frame_pointings, georeference_frames, overlap_with_up_unclamped, seam_metric, select_references,
    FrameLinks, FramePointing, ImageLinkCorrelator, MosaicConfig, MosaicFrame, OverlapMode, SeamReport, MIN_OVERLAP,
};
use ghrc_core::projection::{Lcc, Raster};
use ghrc_core::registration::{bbr_estimate_and_correct, BandStatus};
use ghrc_core::resection::{
    calibrate_alignment, load_gcps, CalibrationResult, Correspondence, ResectionContext, Target,
};
use ghrc_core::simulator::{Frame, ScanSimulator, Scene, TruthLog};

use crate::config::RunConfig;
use crate::report::{
    BbrReport, CalibrateReport, FrameBbr, GeorefFrame, GeorefReport, MosaicStageReport, RunReport, SimulateReport,
};
use crate::{CliError, Outcome};

pub const TRUTH_FILE: &str = "truth.json";
const INDEX_FILE: &str = "index.json";

/// Telemetry and grid position of one stored frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub id: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    pub snapshots: Vec<GeometrySnapshot>,
}

fn output_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Output(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    std::fs::write(path, text + "\n").map_err(output_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e} (has the producing stage run?)", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(output_err(path))
}

fn frame_base(out: &Path, sub: &str, id: usize) -> PathBuf {
    out.join(sub).join(format!("frame_{id:03}"))
}

fn write_raster(r: &Raster, base: &Path) -> Result<(), CliError> {
    r.write(base).map_err(|e| CliError::Output(e.to_string()))
}

/// Stacks equally sized single-band rasters into one multi-band raster.
pub fn stack(bands: &[Raster]) -> Result<Raster, CliError> {
    let first = bands
        .first()
        .ok_or_else(|| CliError::Input("no bands to stack".into()))?;
    if bands
        .iter()
        .any(|b| b.width != first.width || b.height != first.height || b.bands != 1)
    {
        return Err(CliError::Input("bands differ in size".into()));
    }
    Ok(Raster {
        bands: bands.len(),
        data: bands.iter().flat_map(|b| b.data.iter().copied()).collect(),
        ..first.clone()
    })
}

pub fn read_index(out: &Path) -> Result<Vec<FrameMeta>, CliError> {
    read_json(&out.join("frames").join(INDEX_FILE))
}

pub fn read_truth(out: &Path) -> Result<TruthLog, CliError> {
    read_json(&out.join(TRUTH_FILE))
}

/// Reads a stored frame, keeping only `keep` bands in memory (the others become 0x0).
fn read_frame(out: &Path, meta: &FrameMeta, keep: &BTreeSet<usize>) -> Result<Frame, CliError> {
    let stacked = Raster::read(&frame_base(out, "frames", meta.id))?;
    if stacked.bands != meta.snapshots.len() {
        return Err(CliError::Input(format!(
            "frame {} holds {} bands but its index lists {}",
            meta.id,
            stacked.bands,
            meta.snapshots.len()
        )));
    }
    let bands = (0..stacked.bands)
        .map(|b| {
            if keep.contains(&b) {
                stacked.extract_band(b)
            } else {
                Raster::new(0, 0, 1, 0.0)
            }
        })
        .collect();
    Ok(Frame {
        id: meta.id,
        grid_row: meta.grid_row,
        grid_col: meta.grid_col,
        bands,
        snapshots: meta.snapshots.clone(),
    })
}

fn context(cfg: &RunConfig) -> Result<ResectionContext, CliError> {
    let sim = &cfg.simulation;
    Ok(ResectionContext {
        camera: sim.camera.clone(),
        lcc: Lcc::new(sim.lcc)?,
        elevation: sim.elevation.clone(),
    })
}

/// Replaces the mirror reference angles with calibrated ones.
fn apply_calibration(snap: &GeometrySnapshot, cal: Option<&CalibrationResult>) -> GeometrySnapshot {
    let mut s = snap.clone();
    if let Some(c) = cal {
        s.alignment.ew_ref_angle = c.ew_ref_angle;
        s.alignment.ns_ref_angle = c.ns_ref_angle;
    }
    s
}

fn build_scene(cfg: &RunConfig) -> Result<(Scene, Vec<usize>), CliError> {
    let mut scene = match &cfg.scene.raster {
        Some(path) => Scene::raster(Raster::read(path)?)?,
        None => Scene::fractal(cfg.scene.texture.clone()),
    };
    scene.flat_patches = cfg.scene.flat_patches.clone();
    let mut clouded = Vec::new();
    let mut clouds = Vec::new();
    {
        let sim = ScanSimulator::new(&cfg.simulation, &scene)?;
        for &(row, col) in &cfg.scene.cloud_frames {
            let p = sim
                .pointings()
                .iter()
                .find(|p| (p.grid_row, p.grid_col) == (row, col))
                .ok_or_else(|| CliError::Input(format!("no frame at grid position ({row}, {col})")))?;
            clouds.push(sim.cloud_over(p.frame_id, cfg.scene.cloud_value)?);
            clouded.push(p.frame_id);
        }
    }
    scene.flat_patches.extend(clouds);
    clouded.sort_unstable();
    Ok((scene, clouded))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (scene, clouded) = build_scene(cfg)?;
    let sim = ScanSimulator::new(&cfg.simulation, &scene)?;
    make_dir(&out.join("frames"))?;
    let mut index = Vec::with_capacity(sim.frame_count());
    let mut records = Vec::new();
    for id in 0..sim.frame_count() {
        let (frame, truth) = sim.acquire(id)?;
        write_raster(&stack(&frame.bands)?, &frame_base(out, "frames", id))?;
        index.push(FrameMeta {
            id,
            grid_row: frame.grid_row,
            grid_col: frame.grid_col,
            snapshots: frame.snapshots,
        });
        records.extend(truth);
        log::info!("simulated frame {id} of {}", sim.frame_count());
    }
    write_json(&out.join("frames").join(INDEX_FILE), &index)?;
    let truth = TruthLog {
        reference_band: cfg.simulation.reference_band,
        records,
    };
    write_json(&out.join(TRUTH_FILE), &truth)?;
    let plan = &cfg.simulation.plan;
    let mut report = RunReport::load(out)?;
    report.simulate = Some(SimulateReport {
        frames: index.len(),
        bands: plan.band_count,
        detector_pixels: cfg.simulation.camera.detector_pixels,
        rows: plan.rows,
        cols: plan.cols,
        seed: cfg.simulation.noise.rng_seed,
        cloud_frames: clouded,
    });
    report.save(out)?;
    Ok(Outcome::Success)
}

pub fn bbr(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let index = read_index(out)?;
    let reference = cfg.simulation.reference_band;
    make_dir(&out.join("bbr"))?;
    let mut frames = Vec::with_capacity(index.len());
    let mut uncorrectable = Vec::new();
    for meta in &index {
        let all: BTreeSet<usize> = (0..meta.snapshots.len()).collect();
        let frame = read_frame(out, meta, &all)?;
        let res = bbr_estimate_and_correct(&frame.bands, reference, &cfg.bbr)?;
        for r in &res.registrations {
            if r.status == BandStatus::Uncorrectable {
                log::warn!("frame {}: band {} could not be registered", meta.id, r.band);
                uncorrectable.push((meta.id, r.band));
            }
        }
        write_raster(&stack(&res.bands)?, &frame_base(out, "bbr", meta.id))?;
        frames.push(FrameBbr {
            frame_id: meta.id,
            registrations: res.registrations,
        });
        log::info!("registered bands of frame {}", meta.id);
    }
    let mut report = RunReport::load(out)?;
    let partial = !uncorrectable.is_empty();
    report.bbr = Some(BbrReport {
        reference_band: reference,
        frames,
        uncorrectable,
    });
    report.save(out)?;
    Ok(if partial { Outcome::Partial } else { Outcome::Success })
}

/// Band offsets from a previous BBR stage, or zeros.
fn band_offsets(report: &RunReport, meta: &FrameMeta) -> Vec<(f64, f64)> {
    match &report.bbr {
        Some(b) => b.offsets(meta.id, meta.snapshots.len()),
        None => vec![(0.0, 0.0); meta.snapshots.len()],
    }
}

pub fn georef(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let index = read_index(out)?;
    let report = RunReport::load(out)?;
    let cal = report.calibrate.as_ref().map(|c| c.result.clone());
    let ctx = context(cfg)?;
    let band_count = cfg.simulation.plan.band_count;
    let gcfg = MosaicConfig {
        gsd_m: cfg.georef.gsd_m,
        link_band: cfg.simulation.reference_band,
        bands: (0..band_count).collect(),
        ..cfg.mosaic.clone()
    };
    make_dir(&out.join("georef"))?;
    let all: BTreeSet<usize> = (0..band_count).collect();
    let mut frames = Vec::with_capacity(index.len());
    for meta in &index {
        let frame = read_frame(out, meta, &all)?;
        let snapshots: Vec<GeometrySnapshot> = frame
            .snapshots
            .iter()
            .map(|s| apply_calibration(s, cal.as_ref()))
            .collect();
        let mf = MosaicFrame {
            snapshots: &snapshots,
            band_offsets: band_offsets(&report, meta),
            ..MosaicFrame::from_frame(&frame)
        };
        let link = snapshots[gcfg.link_band].clone();
        let geo = georeference_frames(&[mf], &[link], &ctx, &gcfg, None)?.remove(0);
        let t = geo.geotransform.expect("georeferenced");
        let link_band = geo.band(gcfg.link_band);
        let valid = link_band.iter().filter(|v| !geo.is_nodata(**v)).count();
        frames.push(GeorefFrame {
            frame_id: meta.id,
            width: geo.width,
            height: geo.height,
            x0: t.x0,
            y0: t.y0,
            valid_fraction: valid as f64 / link_band.len().max(1) as f64,
        });
        write_raster(&geo, &frame_base(out, "georef", meta.id))?;
        log::info!("georeferenced frame {}", meta.id);
    }
    let mut report = report;
    report.georef = Some(GeorefReport {
        gsd_m: gcfg.gsd_m,
        bands: gcfg.bands.clone(),
        band_offsets_from_bbr: report.bbr.is_some(),
        calibrated: cal.is_some(),
        frames,
    });
    report.save(out)?;
    Ok(Outcome::Success)
}

/// Ground control on a `grid`×`grid` lattice of each frame's reference band, located
/// through the true geometry.
fn truth_control(
    cfg: &RunConfig,
    truth: &TruthLog,
    index: &[FrameMeta],
    ctx: &ResectionContext,
) -> Result<Vec<Vec<Correspondence>>, CliError> {
    let n = ctx.camera.detector_pixels as f64;
    let g = cfg.calibrate.gcp_grid;
    let at = |k: usize| 0.1 * n + 0.8 * (n - 1.0) * k as f64 / (g - 1) as f64;
    index
        .iter()
        .map(|meta| {
            let rec = truth
                .record(meta.id, truth.reference_band)
                .ok_or_else(|| CliError::Input(format!("truth log has no record for frame {}", meta.id)))?;
            let model = SensorModel::new(&rec.snapshot, &ctx.camera)?;
            let mut corrs = Vec::with_capacity(g * g);
            for i in 0..g {
                for j in 0..g {
                    let (row, col) = (at(i), at(j));
                    corrs.push(Correspondence {
                        row,
                        col,
                        target: Target::Ground(model.geolocate(row, col, &ctx.elevation)?),
                        weight: 1.0,
                    });
                }
            }
            Ok(corrs)
        })
        .collect()
}

pub fn calibrate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let index = read_index(out)?;
    let ctx = context(cfg)?;
    let reference = cfg.simulation.reference_band;
    let (source, control) = match &cfg.calibrate.gcp_file {
        Some(path) => {
            let gcps = load_gcps(path)?;
            let mut control = vec![Vec::new(); index.len()];
            for g in &gcps {
                let slot = index
                    .iter()
                    .position(|m| m.id == g.frame_id)
                    .ok_or_else(|| CliError::Input(format!("GCP names unknown frame {}", g.frame_id)))?;
                control[slot].push(g.correspondence()?);
            }
            ("file", control)
        }
        None => ("truth", truth_control(cfg, &read_truth(out)?, &index, &ctx)?),
    };
    let frames: Vec<(GeometrySnapshot, Vec<Correspondence>)> = index
        .iter()
        .zip(control)
        .map(|(m, c)| (m.snapshots[reference].clone(), c))
        .collect();
    let result = calibrate_alignment(&frames, &ctx, &cfg.resection)?;
    log::info!(
        "calibrated reference angles: EW {:.6}, NS {:.6}; location RMS {:.1} m -> {:.2} m",
        result.ew_ref_angle,
        result.ns_ref_angle,
        result.before.rms_m,
        result.after.rms_m
    );
    let converged = result.resection.converged;
    let mut report = RunReport::load(out)?;
    report.calibrate = Some(CalibrateReport {
        control_source: source.into(),
        control_points: frames.iter().map(|f| f.1.len()).sum(),
        after_rms_px: result.after.rms_m / ctx.camera.nadir_gsd_m(),
        result,
    });
    report.save(out)?;
    Ok(if converged { Outcome::Success } else { Outcome::Partial })
}

/// Vertical neighbours whose predicted overlap is too small to link.
fn overlap_warnings(pointings: &[FramePointing], cfg: &RunConfig) -> Vec<String> {
    let mut warnings = Vec::new();
    for p in pointings {
        let Some(up) = pointings
            .iter()
            .find(|u| u.grid_col == p.grid_col && u.grid_row + 1 == p.grid_row)
        else {
            continue;
        };
        let Ok(raw) = overlap_with_up_unclamped(p, up, &cfg.simulation.camera, cfg.mosaic.overlap_mode) else {
            continue;
        };
        if raw <= MIN_OVERLAP {
            let mode = match cfg.mosaic.overlap_mode {
                OverlapMode::Literal => " (literal overlap mode doubles the NS mirror step)",
                OverlapMode::Consistent => "",
            };
            warnings.push(format!(
                "predicted overlap of frame {} with frame {} above is {raw:.3}, clamped to {:.3}{mode}",
                p.frame_id,
                up.frame_id,
                raw.clamp(0.0, 1.0)
            ));
        }
    }
    warnings
}

fn seams(
    frames: &[MosaicFrame<'_>],
    snapshots: &[GeometrySnapshot],
    ctx: &ResectionContext,
    mcfg: &MosaicConfig,
) -> Result<SeamReport, CliError> {
    let link_only = MosaicConfig {
        bands: vec![mcfg.link_band],
        ..mcfg.clone()
    };
    let geo = georeference_frames(frames, snapshots, ctx, &link_only, None)?;
    let keyed: Vec<_> = frames
        .iter()
        .zip(&geo)
        .map(|(f, r)| (f.id, f.grid_row, f.grid_col, r))
        .collect();
    Ok(seam_metric(&keyed, 0, &ctx.camera, mcfg.confidence_ratio))
}

pub fn mosaic(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let index = read_index(out)?;
    let report = RunReport::load(out)?;
    let cal = report.calibrate.as_ref().map(|c| c.result.clone());
    let ctx = context(cfg)?;
    let mcfg = &cfg.mosaic;
    let mut keep: BTreeSet<usize> = mcfg.bands.iter().copied().collect();
    keep.insert(mcfg.link_band);
    let mut frames = Vec::with_capacity(index.len());
    let mut snapshots = Vec::with_capacity(index.len());
    for meta in &index {
        frames.push(read_frame(out, meta, &keep)?);
        snapshots.push(
            meta.snapshots
                .iter()
                .map(|s| apply_calibration(s, cal.as_ref()))
                .collect::<Vec<_>>(),
        );
    }
    let mframes: Vec<MosaicFrame<'_>> = frames
        .iter()
        .zip(&snapshots)
        .zip(&index)
        .map(|((f, s), meta)| MosaicFrame {
            snapshots: s,
            band_offsets: band_offsets(&report, meta),
            ..MosaicFrame::from_frame(f)
        })
        .collect();
    let keyed: Vec<_> = mframes
        .iter()
        .map(|f| (f.id, f.grid_row, f.grid_col, &f.snapshots[mcfg.link_band]))
        .collect();
    let pointings = frame_pointings(&keyed, &ctx.camera)?;
    let warnings = overlap_warnings(&pointings, cfg);
    for w in &warnings {
        log::warn!("{w}");
    }
    let links = mframes
        .iter()
        .zip(&pointings)
        .map(|(f, p)| FrameLinks {
            band: &f.bands[mcfg.link_band],
            snapshot: f.snapshots[mcfg.link_band].clone(),
            pointing: *p,
        })
        .collect();
    let mut correlator = ImageLinkCorrelator::new(links, &ctx, mcfg);
    let plan = select_references(&pointings, &mut correlator, mcfg.confidence_ratio)?;
    let system: Vec<GeometrySnapshot> = mframes.iter().map(|f| f.snapshots[mcfg.link_band].clone()).collect();
    let seams_before = seams(&mframes, &system, &ctx, mcfg)?;
    let built = build_mosaic(&mframes, &pointings, &plan, &ctx, mcfg, None)?;
    let seams_after = seams(&mframes, &built.corrected, &ctx, mcfg)?;
    log::info!(
        "seams over {} confident edges: RMS {:.2} px before, {:.2} px after correction",
        seams_after.confident_edges,
        seams_before.rms_px,
        seams_after.rms_px
    );

    let dir = out.join("mosaic");
    make_dir(&dir)?;
    write_raster(&built.mosaic, &dir.join("mosaic"))?;
    let quick: Vec<usize> = if built.mosaic.bands >= 3 {
        vec![2, 1, 0]
    } else {
        vec![0]
    };
    built
        .mosaic
        .write_png(&dir.join("mosaic.png"), &quick, 1.0)
        .map_err(|e| CliError::Output(e.to_string()))?;
    write_json(&dir.join("ref_plan.json"), &plan)?;

    // the first frame has nothing to link to; any other frame without correction counts
    let root = index.first().map(|m| m.id);
    let degraded = !built.report.failed.is_empty() || built.report.system_only.iter().any(|&id| Some(id) != root);
    let mut report = report;
    report.mosaic = Some(MosaicStageReport {
        overlap_mode: mcfg.overlap_mode,
        band_offsets_from_bbr: report.bbr.is_some(),
        calibrated: cal.is_some(),
        plan,
        mosaic: built.report,
        seams_before,
        seams_after,
        warnings,
    });
    report.save(out)?;
    Ok(if degraded { Outcome::Partial } else { Outcome::Success })
}
