//! Compares the run report against the truth log and prints a PASS/FAIL table.

use std::path::Path;

use ghrc_core::registration::BandStatus;
use ghrc_core::simulator::TruthLog;

use crate::config::RunConfig;
use crate::report::{EvalReport, EvalRow, RunReport};
use crate::stages::read_truth;
use crate::{CliError, Outcome};

/// Band residual bound and the fraction of bands that must meet it.
pub const BBR_RESIDUAL_PX: f64 = 0.25;
pub const BBR_FRACTION: f64 = 0.98;
/// Worst band misregistration the encoder dither allows, pixels (EW, NS).
pub const BBR_BUDGET_PX: (f64, f64) = (40.0, 20.0);
pub const SEAM_RMS_PX: f64 = 1.0;
pub const CALIBRATION_RMS_PX: f64 = 1.0;

fn row(name: &str, measured: String, threshold: &str, pass: bool) -> EvalRow {
    EvalRow {
        name: name.into(),
        measured,
        threshold: threshold.into(),
        pass,
    }
}

/// Residuals |applied − true| of every non-reference band, pixels. Bands left uncorrected
/// count with their full true shift.
pub fn bbr_residuals(report: &RunReport, truth: &TruthLog) -> Result<Vec<f64>, CliError> {
    let Some(bbr) = &report.bbr else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for f in &bbr.frames {
        for r in f.registrations.iter().filter(|r| r.status != BandStatus::Reference) {
            let t = truth
                .record(f.frame_id, r.band)
                .ok_or_else(|| CliError::Input(format!("truth log lacks frame {} band {}", f.frame_id, r.band)))?;
            out.push((r.applied.0 - t.shift_line).hypot(r.applied.1 - t.shift_pixel));
        }
    }
    Ok(out)
}

pub fn evaluate(report: &RunReport, truth: &TruthLog) -> Result<Vec<EvalRow>, CliError> {
    let mut rows = Vec::new();
    let residuals = bbr_residuals(report, truth)?;
    if !residuals.is_empty() {
        let good = residuals.iter().filter(|r| **r <= BBR_RESIDUAL_PX).count();
        let frac = good as f64 / residuals.len() as f64;
        rows.push(row(
            "band registration residual <= 0.25 px",
            format!("{:.1}% of {} bands", 100.0 * frac, residuals.len()),
            ">= 98%",
            frac >= BBR_FRACTION,
        ));
    }
    let reference = truth.reference_band;
    let others: Vec<_> = truth.records.iter().filter(|r| r.band != reference).collect();
    if !others.is_empty() {
        let ew = others.iter().map(|r| r.shift_pixel.abs()).fold(0.0, f64::max);
        let ns = others.iter().map(|r| r.shift_line.abs()).fold(0.0, f64::max);
        rows.push(row(
            "band misregistration within budget",
            format!("max {ew:.1} px EW, {ns:.1} px NS"),
            "<= 40 px EW, <= 20 px NS",
            ew <= BBR_BUDGET_PX.0 && ns <= BBR_BUDGET_PX.1,
        ));
    }
    if let Some(c) = &report.calibrate {
        rows.push(row(
            "location error after calibration",
            format!("{:.3} px RMS ({:.0} m before)", c.after_rms_px, c.result.before.rms_m),
            "< 1 px",
            c.after_rms_px < CALIBRATION_RMS_PX,
        ));
    }
    if let Some(m) = &report.mosaic {
        let s = &m.seams_after;
        rows.push(row(
            "mosaic seam RMS after correction",
            format!(
                "{:.3} px over {} confident edges ({:.2} px before)",
                s.rms_px, s.confident_edges, m.seams_before.rms_px
            ),
            "< 1 px",
            s.confident_edges > 0 && s.rms_px < SEAM_RMS_PX,
        ));
        if let Some(sim) = report.simulate.as_ref().filter(|s| !s.cloud_frames.is_empty()) {
            let listed = sim.cloud_frames.iter().all(|id| m.mosaic.system_only.contains(id));
            rows.push(row(
                "clouded frames kept on system geometry",
                format!("clouded {:?}, system-only {:?}", sim.cloud_frames, m.mosaic.system_only),
                "all clouded frames listed",
                listed,
            ));
        }
    }
    Ok(rows)
}

pub fn eval(_cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut report = RunReport::load(out)?;
    let truth = read_truth(out)?;
    let rows = evaluate(&report, &truth)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "nothing to evaluate in {}: run bbr, calibrate or mosaic first",
            out.display()
        )));
    }
    for r in &rows {
        println!(
            "{}  {}: {} (required {})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.threshold
        );
    }
    let all = rows.iter().all(|r| r.pass);
    report.eval = Some(EvalReport { rows });
    report.save(out)?;
    Ok(if all { Outcome::Success } else { Outcome::Partial })
}
