//! Damped Gauss-Newton adjustment of selected geometric-model parameters from
//! image↔ground or image↔image correspondences, and shared alignment-angle calibration
//! across frames.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{ground_distance_m, CameraConstants, GeodeticPoint, GeometrySnapshot, SensorModel};
use crate::projection::{ElevationSource, Lcc};

/// An adjustable model parameter, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    MirrorcubeRoll,
    MirrorcubePitch,
    EwRefAngle,
    NsRefAngle,
    AttitudeRoll,
    AttitudePitch,
    AttitudeYaw,
}

impl Param {
    pub fn get(&self, s: &GeometrySnapshot) -> f64 {
        match self {
            Param::MirrorcubeRoll => s.alignment.mirrorcube_to_instr_roll,
            Param::MirrorcubePitch => s.alignment.mirrorcube_to_instr_pitch,
            Param::EwRefAngle => s.alignment.ew_ref_angle,
            Param::NsRefAngle => s.alignment.ns_ref_angle,
            Param::AttitudeRoll => s.attitude.roll,
            Param::AttitudePitch => s.attitude.pitch,
            Param::AttitudeYaw => s.attitude.yaw,
        }
    }

    pub fn set(&self, s: &mut GeometrySnapshot, v: f64) {
        match self {
            Param::MirrorcubeRoll => s.alignment.mirrorcube_to_instr_roll = v,
            Param::MirrorcubePitch => s.alignment.mirrorcube_to_instr_pitch = v,
            Param::EwRefAngle => s.alignment.ew_ref_angle = v,
            Param::NsRefAngle => s.alignment.ns_ref_angle = v,
            Param::AttitudeRoll => s.attitude.roll = v,
            Param::AttitudePitch => s.attitude.pitch = v,
            Param::AttitudeYaw => s.attitude.yaw = v,
        }
    }
}

/// Ordered, duplicate-free list of parameters to adjust.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSelection(pub Vec<Param>);

impl Default for ParamSelection {
    fn default() -> Self {
        Self(vec![Param::MirrorcubeRoll, Param::MirrorcubePitch])
    }
}

impl ParamSelection {
    pub fn alignment_angles() -> Self {
        Self(vec![Param::EwRefAngle, Param::NsRefAngle])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Config("parameter selection is empty".into()));
        }
        for (i, p) in self.0.iter().enumerate() {
            if self.0[..i].contains(p) {
                return Err(Error::Config(format!("parameter {p:?} is selected twice")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self, s: &GeometrySnapshot) -> Vec<f64> {
        self.0.iter().map(|p| p.get(s)).collect()
    }

    pub fn apply(&self, s: &GeometrySnapshot, beta: &[f64]) -> GeometrySnapshot {
        let mut out = s.clone();
        for (p, v) in self.0.iter().zip(beta) {
            p.set(&mut out, *v);
        }
        out
    }
}

/// What a frame pixel should map to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Ground(GeodeticPoint),
    /// A pixel of a frame whose geometry is already settled.
    ReferencePixel {
        row: f64,
        col: f64,
        snapshot: Box<GeometrySnapshot>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub row: f64,
    pub col: f64,
    pub target: Target,
    pub weight: f64,
}

impl Correspondence {
    pub fn gcp(row: f64, col: f64, ground: GeodeticPoint) -> Self {
        Self {
            row,
            col,
            target: Target::Ground(ground),
            weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::Precondition(format!(
                "correspondence weight {} must be positive",
                self.weight
            )));
        }
        if let Target::Ground(g) = &self.target {
            GeodeticPoint::new(g.lat, g.lon, g.height)?;
        }
        Ok(())
    }
}

/// Shared geometry needed to evaluate residuals.
#[derive(Debug, Clone)]
pub struct ResectionContext {
    pub camera: CameraConstants,
    pub lcc: Lcc,
    pub elevation: ElevationSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResectionConfig {
    pub max_iterations: usize,
    /// Stop once the parameter step is shorter than this, degrees.
    pub step_tolerance_deg: f64,
    /// Central-difference step, degrees.
    pub fd_step_deg: f64,
    pub initial_damping: f64,
}

impl Default for ResectionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance_deg: 1e-7,
            fd_step_deg: 1e-6,
            initial_damping: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResectionResult {
    pub params: Vec<(Param, f64)>,
    pub snapshots: Vec<GeometrySnapshot>,
    pub initial_rms_m: f64,
    pub final_rms_m: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Correspondences dropped because their line of sight missed the Earth.
    pub excluded: usize,
}

/// Stacked residuals `√w · (target − model)` in LCC metres, two per correspondence.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub values: DVector<f64>,
    pub excluded: usize,
}

impl Residuals {
    pub fn rms(&self) -> f64 {
        let used = self.values.len() / 2 - self.excluded;
        if used == 0 {
            return 0.0;
        }
        (self.values.norm_squared() / used as f64).sqrt()
    }
}

/// A correspondence with its target already on the ground.
#[derive(Debug, Clone, Copy)]
struct Resolved {
    row: f64,
    col: f64,
    target: GeodeticPoint,
    xy: (f64, f64),
    sqrt_w: f64,
}

fn resolve(corrs: &[Correspondence], ctx: &ResectionContext) -> Result<Vec<Resolved>> {
    if corrs.is_empty() {
        return Err(Error::Precondition("no correspondences".into()));
    }
    corrs
        .iter()
        .map(|c| {
            c.validate()?;
            let target = match &c.target {
                Target::Ground(g) => *g,
                Target::ReferencePixel { row, col, snapshot } => {
                    SensorModel::new(snapshot, &ctx.camera)?.geolocate_unchecked(*row, *col, &ctx.elevation)?
                }
            };
            Ok(Resolved {
                row: c.row,
                col: c.col,
                target,
                xy: ctx.lcc.forward(&target)?,
                sqrt_w: c.weight.sqrt(),
            })
        })
        .collect()
}

/// Model positions of all correspondences of one frame in LCC metres; `None` where the
/// line of sight misses the Earth.
fn model_points(snap: &GeometrySnapshot, pts: &[Resolved], ctx: &ResectionContext) -> Result<Vec<Option<(f64, f64)>>> {
    let model = SensorModel::new(snap, &ctx.camera)?;
    pts.par_iter()
        .map(|p| match model.geolocate_at_height(p.row, p.col, p.target.height) {
            Ok(g) => Ok(Some(ctx.lcc.forward(&g)?)),
            Err(Error::MissesEarth) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// One frame's snapshot and correspondences inside a (possibly shared) adjustment.
struct Block {
    snap: GeometrySnapshot,
    pts: Vec<Resolved>,
}

struct Problem<'a> {
    blocks: Vec<Block>,
    selection: &'a ParamSelection,
    ctx: &'a ResectionContext,
}

impl Problem<'_> {
    fn rows(&self) -> usize {
        2 * self.blocks.iter().map(|b| b.pts.len()).sum::<usize>()
    }

    /// Model positions for parameters `beta`, stacked over blocks.
    fn model(&self, beta: &[f64]) -> Result<Vec<Option<(f64, f64)>>> {
        let mut out = Vec::with_capacity(self.rows() / 2);
        for b in &self.blocks {
            out.extend(model_points(&self.selection.apply(&b.snap, beta), &b.pts, self.ctx)?);
        }
        Ok(out)
    }

    fn points(&self) -> impl Iterator<Item = &Resolved> {
        self.blocks.iter().flat_map(|b| b.pts.iter())
    }

    fn residuals(&self, beta: &[f64]) -> Result<Residuals> {
        let model = self.model(beta)?;
        let mut values = DVector::zeros(self.rows());
        let mut excluded = 0;
        for (i, (m, p)) in model.iter().zip(self.points()).enumerate() {
            match m {
                Some((x, y)) => {
                    values[2 * i] = p.sqrt_w * (p.xy.0 - x);
                    values[2 * i + 1] = p.sqrt_w * (p.xy.1 - y);
                }
                None => excluded += 1,
            }
        }
        if excluded * 2 == self.rows() {
            return Err(Error::MissesEarth);
        }
        Ok(Residuals { values, excluded })
    }

    /// ∂(√w · model)/∂β by central differences.
    fn jacobian(&self, beta: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
        if steps.len() != beta.len() || steps.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Precondition("finite-difference steps must be positive".into()));
        }
        let mut j = DMatrix::zeros(self.rows(), beta.len());
        for k in 0..beta.len() {
            let mut plus = beta.to_vec();
            let mut minus = beta.to_vec();
            plus[k] += steps[k];
            minus[k] -= steps[k];
            let (mp, mm) = (self.model(&plus)?, self.model(&minus)?);
            for (i, ((a, b), p)) in mp.iter().zip(&mm).zip(self.points()).enumerate() {
                if let (Some(a), Some(b)) = (a, b) {
                    j[(2 * i, k)] = p.sqrt_w * (a.0 - b.0) / (2.0 * steps[k]);
                    j[(2 * i + 1, k)] = p.sqrt_w * (a.1 - b.1) / (2.0 * steps[k]);
                }
            }
        }
        Ok(j)
    }
}

/// Residuals of one frame for the parameter values `beta`.
pub fn residuals(
    beta: &[f64],
    correspondences: &[Correspondence],
    snap: &GeometrySnapshot,
    selection: &ParamSelection,
    ctx: &ResectionContext,
) -> Result<Residuals> {
    selection.validate()?;
    let problem = Problem {
        blocks: vec![Block {
            snap: snap.clone(),
            pts: resolve(correspondences, ctx)?,
        }],
        selection,
        ctx,
    };
    problem.residuals(beta)
}

/// Jacobian of the weighted model positions with respect to `beta`, metres per degree.
pub fn jacobian_fd(
    beta: &[f64],
    correspondences: &[Correspondence],
    snap: &GeometrySnapshot,
    selection: &ParamSelection,
    ctx: &ResectionContext,
    steps: &[f64],
) -> Result<DMatrix<f64>> {
    selection.validate()?;
    let problem = Problem {
        blocks: vec![Block {
            snap: snap.clone(),
            pts: resolve(correspondences, ctx)?,
        }],
        selection,
        ctx,
    };
    problem.jacobian(beta, steps)
}

/// Solves `(JᵀJ + λI) δβ = Jᵀ r`.
pub fn solve_update(j: &DMatrix<f64>, r: &DVector<f64>, damping: f64) -> Result<DVector<f64>> {
    if j.nrows() != r.len() || !(damping >= 0.0) {
        return Err(Error::Precondition(
            "Jacobian and residual sizes differ or damping is negative".into(),
        ));
    }
    let n = j.ncols();
    let normal = j.transpose() * j + DMatrix::identity(n, n) * damping;
    let rhs = j.transpose() * r;
    let svd = normal.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::SingularNormalEquations);
    }
    svd.solve(&rhs, 0.0).map_err(|e| Error::Internal(e.to_string()))
}

fn run(
    problem: &Problem<'_>,
    beta0: Vec<f64>,
    cfg: &ResectionConfig,
) -> Result<(Vec<f64>, f64, f64, usize, bool, usize)> {
    let steps = vec![cfg.fd_step_deg; beta0.len()];
    let mut beta = beta0;
    let mut res = problem.residuals(&beta)?;
    let initial_rms = res.rms();
    let mut cost = res.values.norm_squared();
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let j = problem.jacobian(&beta, &steps)?;
        let scale = (j.transpose() * &j).trace() / beta.len() as f64;
        let delta = match solve_update(&j, &res.values, lambda) {
            Ok(d) => d,
            Err(Error::SingularNormalEquations) if lambda == 0.0 && scale > 0.0 => {
                lambda = 1e-6 * scale;
                solve_update(&j, &res.values, lambda)?
            }
            Err(e) => return Err(e),
        };
        let trial: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
        let small = delta.norm() < cfg.step_tolerance_deg;
        match problem.residuals(&trial) {
            Ok(next) if next.values.norm_squared() <= cost => {
                beta = trial;
                cost = next.values.norm_squared();
                res = next;
                lambda /= 2.0;
            }
            Ok(_) | Err(Error::MissesEarth) => {
                lambda = (10.0 * lambda).max(1e-6 * scale);
            }
            Err(e) => return Err(e),
        }
        if small {
            converged = true;
            break;
        }
    }
    Ok((beta, initial_rms, res.rms(), iterations, converged, res.excluded))
}

fn check_counts(n: usize, selection: &ParamSelection) -> Result<()> {
    if n < selection.len().div_ceil(2) {
        return Err(Error::Precondition(format!(
            "{n} correspondences cannot determine {} parameters",
            selection.len()
        )));
    }
    Ok(())
}

/// Adjusts the selected parameters of one frame so its pixels land on their targets.
///
/// Returns `NonConvergence` only when the iteration cap is hit; the best iterate is in the
/// result either way via `converged`.
pub fn resect(
    snap: &GeometrySnapshot,
    correspondences: &[Correspondence],
    selection: &ParamSelection,
    ctx: &ResectionContext,
    cfg: &ResectionConfig,
) -> Result<ResectionResult> {
    resect_shared(&[(snap.clone(), correspondences.to_vec())], selection, ctx, cfg)
}

/// One parameter vector shared by several frames (alignment calibration). Starting
/// values come from the first frame.
pub fn resect_shared(
    frames: &[(GeometrySnapshot, Vec<Correspondence>)],
    selection: &ParamSelection,
    ctx: &ResectionContext,
    cfg: &ResectionConfig,
) -> Result<ResectionResult> {
    selection.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::Precondition("no frames to adjust".into()))?;
    let blocks = frames
        .iter()
        .map(|(s, c)| {
            Ok(Block {
                snap: s.clone(),
                pts: resolve(c, ctx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_counts(blocks.iter().map(|b| b.pts.len()).sum(), selection)?;
    let problem = Problem { blocks, selection, ctx };
    let (beta, initial_rms_m, final_rms_m, iterations, converged, excluded) =
        run(&problem, selection.values(&first.0), cfg)?;
    Ok(ResectionResult {
        params: selection.0.iter().copied().zip(beta.iter().copied()).collect(),
        snapshots: problem.blocks.iter().map(|b| selection.apply(&b.snap, &beta)).collect(),
        initial_rms_m,
        final_rms_m,
        iterations,
        converged,
        excluded,
    })
}

/// Distances between model geolocations and ground control, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationStats {
    pub count: usize,
    pub mean_m: f64,
    pub rms_m: f64,
    pub max_m: f64,
}

pub fn location_stats(
    frames: &[(GeometrySnapshot, Vec<Correspondence>)],
    ctx: &ResectionContext,
) -> Result<LocationStats> {
    let mut d = Vec::new();
    for (snap, corrs) in frames {
        let model = SensorModel::new(snap, &ctx.camera)?;
        for p in resolve(corrs, ctx)? {
            let g = model.geolocate_at_height(p.row, p.col, p.target.height)?;
            d.push(ground_distance_m(&g, &p.target));
        }
    }
    let n = d.len() as f64;
    Ok(LocationStats {
        count: d.len(),
        mean_m: d.iter().sum::<f64>() / n,
        rms_m: (d.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
        max_m: d.iter().cloned().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub ew_ref_angle: f64,
    pub ns_ref_angle: f64,
    pub before: LocationStats,
    pub after: LocationStats,
    pub resection: ResectionResult,
}

/// Fits one shared pair of mirror reference angles to ground control spread over frames.
pub fn calibrate_alignment(
    frames: &[(GeometrySnapshot, Vec<Correspondence>)],
    ctx: &ResectionContext,
    cfg: &ResectionConfig,
) -> Result<CalibrationResult> {
    let used = frames.iter().filter(|(_, c)| !c.is_empty()).count();
    if used < 3 {
        return Err(Error::Precondition(format!(
            "calibration needs control in at least 3 frames, got {used}"
        )));
    }
    let frames: Vec<_> = frames.iter().filter(|(_, c)| !c.is_empty()).cloned().collect();
    let before = location_stats(&frames, ctx)?;
    let selection = ParamSelection::alignment_angles();
    let resection = resect_shared(&frames, &selection, ctx, cfg)?;
    let after_frames: Vec<_> = resection
        .snapshots
        .iter()
        .cloned()
        .zip(frames.iter().map(|(_, c)| c.clone()))
        .collect();
    let after = location_stats(&after_frames, ctx)?;
    Ok(CalibrationResult {
        ew_ref_angle: resection.params[0].1,
        ns_ref_angle: resection.params[1].1,
        before,
        after,
        resection,
    })
}

/// One ground control point as stored in a GCP file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcpRecord {
    pub frame_id: usize,
    pub row: f64,
    pub col: f64,
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl GcpRecord {
    pub fn correspondence(&self) -> Result<Correspondence> {
        let c = Correspondence {
            row: self.row,
            col: self.col,
            target: Target::Ground(GeodeticPoint::new(self.lat, self.lon, self.height)?),
            weight: self.weight,
        };
        c.validate()?;
        Ok(c)
    }
}

pub fn load_gcps(path: &Path) -> Result<Vec<GcpRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn save_gcps(path: &Path, gcps: &[GcpRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(gcps).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
