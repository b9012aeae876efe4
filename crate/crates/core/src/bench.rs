//! End-to-end localization benchmark.
//!
//! For every trajectory pose: crop the map around the pose, voxel-downsample
//! the crop, simulate a scan from the pose, add range noise, then register the
//! scan against the crop from `trials` perturbed initial poses with both ICP
//! variants. Each variant's record keeps every trial's error plus the medians.
//!
//! The crop is shifted so the pose sits at the origin before anything else
//! happens. Errors are unchanged by this shift, and left perturbations then
//! rotate about the sensor instead of the distant map origin.
//!
//! Random streams are keyed by `(seed, pose_id, purpose, trial)`, so poses can
//! be evaluated in any order and on any number of threads with identical
//! results.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::ply::read_ply;
use crate::cloud::trajectory::{read_trajectory, StampedPose};
use crate::cloud::{add_noise, estimate_normals_indexed, voxel_downsample, NoiseSpec, PointCloud, SpatialIndex};
use crate::error::{Error, Result};
use crate::icp::{register, IcpParams, Variant};
use crate::rng::GaussianStream;
use crate::scansim::{default_beam_model, project_scan, BeamModel};
use crate::se3::{
    apply_perturbation, rotation_error, rotation_error_vector, sample_perturbation, translation_error,
    PerturbationSpec, Pose,
};
use crate::stats::{median, summarize, Summary};

pub const REPORT_SCHEMA: u32 = 1;
pub const REPORT_CSV_HEADER: &str = "pose_id,variant,median_trans_m,median_rot_rad,converged_trials,trials";

const NOISE_STREAM: u64 = 0x6e6f_6973;
const PERTURBATION_STREAM: u64 = 0x7065_7274;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub map_path: PathBuf,
    pub trajectory_path: PathBuf,
    /// Meters.
    pub submap_radius: f64,
    /// Voxel edge for downsampling the crop, meters; 0 disables it.
    pub voxel: f64,
    pub beam: BeamModel,
    /// Scan noise per coordinate, meters.
    pub noise_sigma: f64,
    /// Initialization perturbation sigmas: three in meters, three in radians.
    pub perturbation_sigma: [f64; 6],
    pub icp: IcpParams,
    pub trials: usize,
    pub seed: u64,
    /// Poses whose crop holds fewer points are recorded as failed.
    pub min_submap_points: usize,
    /// Draw fresh scan noise for every trial instead of once per pose.
    pub fresh_noise_per_trial: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map_path: PathBuf::new(),
            trajectory_path: PathBuf::new(),
            submap_radius: 35.0,
            voxel: 0.1,
            beam: default_beam_model(),
            noise_sigma: 0.1,
            perturbation_sigma: PerturbationSpec::DEFAULT_SIGMA,
            icp: IcpParams::default(),
            trials: 30,
            seed: 0,
            min_submap_points: 100,
            fresh_noise_per_trial: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.submap_radius > 0.0 && self.submap_radius.is_finite()) {
            return Err(Error::InvalidArgument("submap_radius must be positive".into()));
        }
        if !(self.voxel >= 0.0 && self.voxel.is_finite()) {
            return Err(Error::InvalidArgument("voxel must be non-negative".into()));
        }
        NoiseSpec::new(self.noise_sigma, 0)?;
        PerturbationSpec::new(self.perturbation_sigma, 0)?;
        self.beam.validate()?;
        self.icp.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialError {
    /// Meters.
    pub translation: f64,
    /// Radians.
    pub rotation: f64,
    pub converged: bool,
    /// Registration raised an error; the errors are those of the initial pose.
    pub errored: bool,
    pub iterations: usize,
    pub correspondences: usize,
    /// Estimated minus true position, in map axes.
    pub translation_delta: [f64; 3],
    /// Axis-angle of estimated times inverse true rotation, in map axes.
    pub rotation_delta: [f64; 3],
}

impl TrialError {
    fn between(estimate: &Pose, truth: &Pose) -> Self {
        let dt = estimate.translation - truth.translation;
        let dr = rotation_error_vector(estimate, truth).unwrap_or_else(|_| Vector3::zeros());
        Self {
            translation: translation_error(estimate, truth),
            rotation: rotation_error(estimate, truth).unwrap_or(PI),
            converged: false,
            errored: false,
            iterations: 0,
            correspondences: 0,
            translation_delta: dt.into(),
            rotation_delta: dr.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pose_id: u64,
    pub variant: Variant,
    /// Meters; absent when the pose could not be evaluated.
    pub median_translation_error: Option<f64>,
    /// Radians.
    pub median_rotation_error: Option<f64>,
    pub converged_trials: usize,
    pub errored_trials: usize,
    pub submap_points: usize,
    pub scan_points: usize,
    pub mean_correspondences: f64,
    pub trials: Vec<TrialError>,
    /// Set when the pose could not be evaluated or every trial errored.
    pub failed: bool,
    pub failure: Option<String>,
}

impl EvalRecord {
    fn failed(pose_id: u64, variant: Variant, submap_points: usize, scan_points: usize, why: String) -> Self {
        Self {
            pose_id,
            variant,
            median_translation_error: None,
            median_rotation_error: None,
            converged_trials: 0,
            errored_trials: 0,
            submap_points,
            scan_points,
            mean_correspondences: 0.0,
            trials: Vec::new(),
            failed: true,
            failure: Some(why),
        }
    }

    fn from_trials(pose_id: u64, variant: Variant, submap_points: usize, scan_points: usize, trials: Vec<TrialError>) -> Self {
        let (t, r) = trial_medians(&trials);
        let errored = trials.iter().filter(|t| t.errored).count();
        let all_errored = errored == trials.len();
        Self {
            pose_id,
            variant,
            median_translation_error: t,
            median_rotation_error: r,
            converged_trials: trials.iter().filter(|t| t.converged).count(),
            errored_trials: errored,
            submap_points,
            scan_points,
            mean_correspondences: trials.iter().map(|t| t.correspondences as f64).sum::<f64>() / trials.len() as f64,
            trials,
            failed: all_errored,
            failure: all_errored.then(|| "registration failed on every trial".to_string()),
        }
    }

    /// Per-axis medians of the absolute translation deltas.
    pub fn median_abs_translation_axes(&self) -> Option<[f64; 3]> {
        axis_medians(self.trials.iter().map(|t| t.translation_delta))
    }

    /// Per-axis medians of the absolute rotation deltas (roll, pitch, yaw).
    pub fn median_abs_rotation_axes(&self) -> Option<[f64; 3]> {
        axis_medians(self.trials.iter().map(|t| t.rotation_delta))
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.trials.is_empty() {
            0.0
        } else {
            self.converged_trials as f64 / self.trials.len() as f64
        }
    }
}

fn axis_medians(deltas: impl Iterator<Item = [f64; 3]>) -> Option<[f64; 3]> {
    let mut axes: [Vec<f64>; 3] = Default::default();
    for d in deltas {
        for k in 0..3 {
            axes[k].push(d[k].abs());
        }
    }
    Some([median(&axes[0]).ok()?, median(&axes[1]).ok()?, median(&axes[2]).ok()?])
}

fn trial_medians(trials: &[TrialError]) -> (Option<f64>, Option<f64>) {
    let t: Vec<f64> = trials.iter().map(|t| t.translation).collect();
    let r: Vec<f64> = trials.iter().map(|t| t.rotation).collect();
    (median(&t).ok(), median(&r).ok())
}

/// The scan and reference prepared for one pose, in the pose-centered frame.
#[derive(Debug, Clone)]
pub struct PoseSetup {
    /// Map crop with estimated normals, shifted so the pose sits at the origin.
    pub reference: PointCloud,
    pub index: SpatialIndex,
    /// Ground truth in the shifted frame: the true rotation, zero translation.
    pub truth: Pose,
    /// Noise-free sensor-frame scan.
    pub clean_scan: PointCloud,
}

/// Crops, downsamples, shifts and scans the map at `gt`.
pub fn prepare_pose(map: &PointCloud, map_index: &SpatialIndex, gt: &Pose, cfg: &RunConfig) -> Result<PoseSetup> {
    let mut inside = map_index.within_radius(&gt.translation, cfg.submap_radius);
    inside.sort_unstable();
    let crop = map.select(&inside).without_normals();
    let crop = if cfg.voxel > 0.0 { voxel_downsample(&crop, cfg.voxel)? } else { crop };
    if crop.len() < cfg.min_submap_points.max(1) {
        return Err(Error::InsufficientPoints {
            needed: cfg.min_submap_points.max(1),
            got: crop.len(),
        });
    }
    let local = crop.transformed(&Pose::from_translation(-gt.translation));
    let truth = Pose::from_rotation(gt.rotation);
    let clean_scan = project_scan(&local, &truth, &cfg.beam)?;
    if clean_scan.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = local.index();
    let reference = estimate_normals_indexed(&local, &index, cfg.icp.normal_neighbors, &Vector3::zeros())?;
    Ok(PoseSetup {
        reference,
        index,
        truth,
        clean_scan,
    })
}

fn noisy_scan(setup: &PoseSetup, cfg: &RunConfig, keys: &[u64]) -> Result<PointCloud> {
    let spec = NoiseSpec::new(cfg.noise_sigma, 0)?;
    let mut rng = GaussianStream::keyed(cfg.seed, keys);
    Ok(add_noise(&setup.clean_scan, &spec, &mut rng))
}

/// Initial pose of one trial: the truth perturbed on the left.
pub fn trial_initial_pose(truth: &Pose, cfg: &RunConfig, pose_id: u64, trial: usize) -> Result<Pose> {
    let spec = PerturbationSpec::new(cfg.perturbation_sigma, 0)?;
    let mut rng = GaussianStream::keyed(cfg.seed, &[pose_id, PERTURBATION_STREAM, trial as u64]);
    Ok(apply_perturbation(truth, &sample_perturbation(&spec, &mut rng)))
}

/// Runs every trial for both variants at one pose. Returns the records in
/// [`Variant::ALL`] order. Failures are recorded, never returned.
pub fn evaluate_pose(map: &PointCloud, map_index: &SpatialIndex, pose: &StampedPose, cfg: &RunConfig) -> [EvalRecord; 2] {
    let setup = match prepare_pose(map, map_index, &pose.pose, cfg) {
        Ok(s) => s,
        Err(e) => {
            let why = format!("pose could not be prepared: {e}");
            return Variant::ALL.map(|v| EvalRecord::failed(pose.id, v, 0, 0, why.clone()));
        }
    };
    let shared_scan = if cfg.fresh_noise_per_trial {
        None
    } else {
        match noisy_scan(&setup, cfg, &[pose.id, NOISE_STREAM]) {
            Ok(s) => Some(s),
            Err(e) => {
                let why = format!("scan noise failed: {e}");
                return Variant::ALL.map(|v| EvalRecord::failed(pose.id, v, setup.reference.len(), 0, why.clone()));
            }
        }
    };

    let mut per_variant: [Vec<TrialError>; 2] = [Vec::with_capacity(cfg.trials), Vec::with_capacity(cfg.trials)];
    for trial in 0..cfg.trials {
        let init = match trial_initial_pose(&setup.truth, cfg, pose.id, trial) {
            Ok(p) => p,
            Err(e) => {
                let why = format!("bad perturbation: {e}");
                return Variant::ALL.map(|v| EvalRecord::failed(pose.id, v, setup.reference.len(), 0, why.clone()));
            }
        };
        let fresh;
        let scan = match &shared_scan {
            Some(s) => s,
            None => {
                fresh = noisy_scan(&setup, cfg, &[pose.id, NOISE_STREAM, trial as u64])
                    .unwrap_or_else(|_| setup.clean_scan.clone());
                &fresh
            }
        };
        for (slot, variant) in per_variant.iter_mut().zip(Variant::ALL) {
            let icp = cfg.icp.with_variant(variant);
            let record = match register(scan, &setup.reference, &setup.index, &init, &icp) {
                Ok(r) => TrialError {
                    converged: r.converged,
                    iterations: r.iterations,
                    correspondences: r.correspondence_count,
                    ..TrialError::between(&r.pose, &setup.truth)
                },
                Err(_) => TrialError {
                    errored: true,
                    ..TrialError::between(&init, &setup.truth)
                },
            };
            slot.push(record);
        }
    }
    let [ptp, ptplane] = per_variant;
    let (n_ref, n_scan) = (setup.reference.len(), setup.clean_scan.len());
    [
        EvalRecord::from_trials(pose.id, Variant::PointToPoint, n_ref, n_scan, ptp),
        EvalRecord::from_trials(pose.id, Variant::PointToPlane, n_ref, n_scan, ptplane),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub evaluated_poses: usize,
    pub failed_poses: usize,
    /// Over per-pose median translation errors, meters.
    pub translation: Option<Summary>,
    /// Over per-pose median rotation errors, radians.
    pub rotation: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub config: RunConfig,
    /// Ordered by pose id, then variant.
    pub records: Vec<EvalRecord>,
    pub summary: Vec<VariantSummary>,
}

fn summarize_variant(records: &[EvalRecord], variant: Variant) -> VariantSummary {
    let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.variant == variant).collect();
    let t: Vec<f64> = mine.iter().filter_map(|r| r.median_translation_error).collect();
    let r: Vec<f64> = mine.iter().filter_map(|r| r.median_rotation_error).collect();
    VariantSummary {
        variant,
        evaluated_poses: mine.len(),
        failed_poses: mine.iter().filter(|r| r.failed).count(),
        translation: summarize(&t).ok(),
        rotation: summarize(&r).ok(),
    }
}

impl BenchReport {
    pub fn new(config: RunConfig, mut records: Vec<EvalRecord>) -> Self {
        records.sort_by_key(|r| (r.pose_id, r.variant as u8));
        let summary = Variant::ALL.iter().map(|&v| summarize_variant(&records, v)).collect();
        Self {
            schema: REPORT_SCHEMA,
            config,
            records,
            summary,
        }
    }

    pub fn variant_summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }

    pub fn records_for(&self, variant: Variant) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(move |r| r.variant == variant)
    }

    /// Checks that every stored median and summary follows from the trials.
    pub fn check_consistency(&self) -> Result<()> {
        if self.schema != REPORT_SCHEMA {
            return Err(Error::Parse(format!("unsupported report schema {}", self.schema)));
        }
        for r in &self.records {
            let (t, rot) = trial_medians(&r.trials);
            let converged = r.trials.iter().filter(|t| t.converged).count();
            let evaluated = !r.trials.is_empty();
            if t != r.median_translation_error
                || rot != r.median_rotation_error
                || converged != r.converged_trials
                || (evaluated && r.trials.len() != self.config.trials)
            {
                return Err(Error::Parse(format!(
                    "record for pose {} ({}) disagrees with its trials",
                    r.pose_id, r.variant
                )));
            }
        }
        let expected: Vec<VariantSummary> = Variant::ALL.iter().map(|&v| summarize_variant(&self.records, v)).collect();
        if expected != self.summary {
            return Err(Error::Parse("report summary disagrees with its records".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses a report and verifies its internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let report: BenchReport = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        report.check_consistency()?;
        Ok(report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.pose_id,
                r.variant,
                opt(r.median_translation_error),
                opt(r.median_rotation_error),
                r.converged_trials,
                r.trials.len()
            );
        }
        out
    }

    /// Human-readable trajectory-wide summary lines.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        for s in &self.summary {
            let _ = write!(out, "{}: {} poses, {} failed", s.variant, s.evaluated_poses, s.failed_poses);
            if let (Some(t), Some(r)) = (&s.translation, &s.rotation) {
                let _ = write!(
                    out,
                    "; translation median {:.4} m, IQR {:.4} m, max {:.4} m; rotation median {:.4} deg, IQR {:.4} deg, max {:.4} deg",
                    t.median,
                    t.iqr,
                    t.max,
                    r.median.to_degrees(),
                    r.iqr.to_degrees(),
                    r.max.to_degrees()
                );
            }
            out.push('\n');
        }
        out
    }

    /// Median translation and rotation error per pose, one series per variant.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (800.0, 300.0, 50.0);
        let mut series: BTreeMap<&'static str, Vec<(u64, f64, f64)>> = BTreeMap::new();
        for r in &self.records {
            if let (Some(t), Some(rot)) = (r.median_translation_error, r.median_rotation_error) {
                series.entry(r.variant.as_str()).or_default().push((r.pose_id, t, rot.to_degrees()));
            }
        }
        let ids: Vec<u64> = self.records.iter().map(|r| r.pose_id).collect();
        let (id_lo, id_hi) = (
            ids.iter().copied().min().unwrap_or(0) as f64,
            ids.iter().copied().max().unwrap_or(1) as f64,
        );
        let span = (id_hi - id_lo).max(1.0);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            2.0 * h
        );
        let colors = ["#1f77b4", "#d62728"];
        for (panel, (label, pick)) in [("median translation error [m]", 1usize), ("median rotation error [deg]", 2)]
            .into_iter()
            .enumerate()
        {
            let top = panel as f64 * h;
            let ymax = series
                .values()
                .flatten()
                .map(|s| if pick == 1 { s.1 } else { s.2 })
                .fold(0.0f64, f64::max)
                .max(1e-9);
            let _ = writeln!(
                svg,
                "<rect x=\"{pad}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
                top + pad / 2.0,
                w - 1.5 * pad,
                h - pad
            );
            let _ = writeln!(svg, "<text x=\"{pad}\" y=\"{}\">{label} (max {ymax:.4})</text>", top + pad / 2.0 - 5.0);
            for (k, (name, points)) in series.iter().enumerate() {
                let coords: Vec<String> = points
                    .iter()
                    .map(|s| {
                        let v = if pick == 1 { s.1 } else { s.2 };
                        let x = pad + (s.0 as f64 - id_lo) / span * (w - 1.5 * pad);
                        let y = top + h - pad / 2.0 - v / ymax * (h - pad);
                        format!("{x:.2},{y:.2}")
                    })
                    .collect();
                let color = colors[k % colors.len()];
                let _ = writeln!(
                    svg,
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                    coords.join(" ")
                );
                let _ = writeln!(
                    svg,
                    "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
                    w - 2.0 * pad - 60.0,
                    top + pad / 2.0 + 15.0 * (k as f64 + 1.0)
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Evaluates every pose on a pool of `jobs` threads (0 = all cores).
pub fn run_on(map: &PointCloud, poses: &[StampedPose], cfg: &RunConfig, jobs: usize) -> Result<BenchReport> {
    cfg.validate()?;
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    if poses.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = map.index();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        poses
            .par_iter()
            .flat_map_iter(|p| evaluate_pose(map, &index, p, cfg))
            .collect()
    });
    Ok(BenchReport::new(cfg.clone(), records))
}

/// Loads the map and trajectory named in `cfg` and evaluates them.
pub fn run_benchmark(cfg: &RunConfig, jobs: usize) -> Result<BenchReport> {
    cfg.validate()?;
    let map = read_ply(&cfg.map_path)?;
    let poses = read_trajectory(&cfg.trajectory_path)?;
    run_on(&map, &poses, cfg, jobs)
}

/// Writes `report.csv`, `report.json` and optionally `report.svg` into `dir`.
pub fn write_report(report: &BenchReport, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        (dir.join("report.csv"), report.to_csv()),
        (dir.join("report.json"), report.to_json()?),
    ];
    if plot {
        files.push((dir.join("report.svg"), report.to_svg()));
    }
    let mut written = Vec::new();
    for (path, body) in files {
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Poses every `spacing` meters along the x axis at `height`, centered on
/// the origin.
pub fn straight_trajectory(count: usize, spacing: f64, height: f64) -> Vec<StampedPose> {
    let start = -spacing * (count.saturating_sub(1)) as f64 / 2.0;
    (0..count)
        .map(|i| StampedPose {
            id: i as u64,
            pose: Pose::from_translation(Vector3::new(start + spacing * i as f64, 0.0, height)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SceneKind, SceneSpec};

    fn quick_config() -> RunConfig {
        RunConfig {
            trials: 4,
            beam: BeamModel {
                azimuth_steps: 360,
                channels: 16,
                ..default_beam_model()
            },
            ..RunConfig::default()
        }
    }

    fn clutter() -> PointCloud {
        generate(&SceneSpec::new(SceneKind::Clutter, 1)).unwrap()
    }

    #[test]
    fn unperturbed_noise_free_is_exact() {
        let map = clutter();
        let cfg = RunConfig {
            noise_sigma: 0.0,
            perturbation_sigma: [0.0; 6],
            ..quick_config()
        };
        let pose = StampedPose {
            id: 0,
            pose: Pose::from_translation(Vector3::new(1.0, 0.0, 1.0)),
        };
        for r in evaluate_pose(&map, &map.index(), &pose, &cfg) {
            assert!(!r.failed, "{r:?}");
            assert!(r.median_translation_error.unwrap() < 1e-6);
            assert!(r.median_rotation_error.unwrap() < 1e-6);
            assert_eq!(r.trials.len(), cfg.trials);
        }
    }

    #[test]
    fn empty_submap_is_recorded_not_fatal() {
        let map = clutter();
        let poses = vec![
            StampedPose { id: 3, pose: Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)) },
            StampedPose { id: 4, pose: Pose::from_translation(Vector3::new(500.0, 0.0, 1.0)) },
        ];
        let report = run_on(&map, &poses, &quick_config(), 1).unwrap();
        assert_eq!(report.records.len(), 4);
        let far: Vec<_> = report.records.iter().filter(|r| r.pose_id == 4).collect();
        assert!(far.iter().all(|r| r.failed && r.median_translation_error.is_none()));
        let near: Vec<_> = report.records.iter().filter(|r| r.pose_id == 3).collect();
        assert!(near.iter().all(|r| !r.failed && r.median_translation_error.is_some()));
        report.check_consistency().unwrap();
        let csv = report.to_csv();
        assert!(csv.lines().any(|l| l == "4,point_to_point,,,0,0"));
    }

    #[test]
    fn report_round_trip_and_tamper_detection() {
        let map = clutter();
        let report = run_on(&map, &straight_trajectory(2, 4.0, 1.0), &quick_config(), 1).unwrap();
        let json = report.to_json().unwrap();
        let back = BenchReport::from_json(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json().unwrap(), json);

        let mut bad = report.clone();
        bad.records[0].median_translation_error = Some(123.0);
        assert!(BenchReport::from_json(&bad.to_json().unwrap()).is_err());

        let svg = report.to_svg();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
        assert!(report.summary_text().contains("point_to_plane"));
    }

    #[test]
    fn order_and_threads_do_not_matter() {
        let map = clutter();
        let poses = straight_trajectory(3, 5.0, 1.0);
        let cfg = quick_config();
        let a = run_on(&map, &poses, &cfg, 1).unwrap();
        let reversed: Vec<StampedPose> = poses.iter().rev().cloned().collect();
        let b = run_on(&map, &reversed, &cfg, 3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn fresh_noise_changes_results_but_stays_deterministic() {
        let map = clutter();
        let poses = straight_trajectory(1, 1.0, 1.0);
        let cfg = RunConfig {
            fresh_noise_per_trial: true,
            ..quick_config()
        };
        let a = run_on(&map, &poses, &cfg, 1).unwrap();
        let b = run_on(&map, &poses, &cfg, 1).unwrap();
        assert_eq!(a, b);
        let shared = run_on(&map, &poses, &quick_config(), 1).unwrap();
        assert_ne!(a.records, shared.records);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.submap_radius, 35.0);
        assert_eq!(cfg.trials, 30);
        assert_eq!(cfg.icp.max_iterations, 150);
        let echoed: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(echoed, cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"trails": 3}"#).is_err());
        for bad in [
            RunConfig { trials: 0, ..RunConfig::default() },
            RunConfig { submap_radius: 0.0, ..RunConfig::default() },
            RunConfig { noise_sigma: -1.0, ..RunConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn trajectory_helper() {
        let t = straight_trajectory(3, 2.0, 1.0);
        let xs: Vec<f64> = t.iter().map(|p| p.pose.translation.x).collect();
        assert_eq!(xs, vec![-2.0, 0.0, 2.0]);
        assert!(t.iter().all(|p| p.pose.translation.z == 1.0));
    }
}
