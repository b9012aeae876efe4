//! `scan2map` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use scan2map::bench::{run_benchmark, straight_trajectory, trial_initial_pose, write_report};
use scan2map::change::{ChangeReport, DEFAULT_RADIUS, DEFAULT_THRESHOLD};
use scan2map::cloud::ply::{read_ply, write_ply};
use scan2map::cloud::trajectory::{format_trajectory, read_trajectory, write_trajectory, StampedPose};
use scan2map::cloud::{add_noise, voxel_downsample, NoiseSpec, PointCloud};
use scan2map::icp::{register, Variant};
use scan2map::rng::GaussianStream;
use scan2map::scansim::project_scan;
use scan2map::synthgen::{generate, generate_pair, SceneKind, SceneSpec};
use scan2map::Pose;

use config::{load_config, ConfigError, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "scan2map", version, about = "Scan-to-map ICP relocalization benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set icp.max_iterations=150`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Run seed; takes precedence over the config and SCAN2MAP_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `evaluate` (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PoseArgs {
    /// Pose as `tx,ty,tz,qx,qy,qz,qw`.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "trajectory")]
    pose: Option<String>,
    /// Trajectory CSV to pick the pose from.
    #[arg(long, requires = "pose_id")]
    trajectory: Option<PathBuf>,
    /// Pose id within `--trajectory`.
    #[arg(long)]
    pose_id: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with a straight trajectory through it.
    Synth {
        #[arg(long, default_value = "clutter")]
        kind: String,
        #[arg(long)]
        extent: Option<f64>,
        /// Points per square meter.
        #[arg(long)]
        density: Option<f64>,
        /// object_change only: added points as a fraction of the reference.
        #[arg(long)]
        change_fraction: Option<f64>,
        #[arg(long, default_value_t = 20)]
        poses: usize,
        /// Meters between trajectory poses.
        #[arg(long, default_value_t = 1.5)]
        spacing: f64,
        /// Sensor height above the ground, meters.
        #[arg(long, default_value_t = 1.0)]
        height: f64,
    },
    /// Simulate a sensor-frame scan of a map from one pose.
    Project {
        #[arg(long)]
        map: PathBuf,
        #[command(flatten)]
        pose: PoseArgs,
        /// Gaussian noise per coordinate, meters.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output PLY (default: scan.ply in the output directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw perturbed initial poses around a pose.
    Perturb {
        #[command(flatten)]
        pose: PoseArgs,
        /// Number of draws (default: the config's trial count).
        #[arg(long)]
        count: Option<usize>,
        /// Output CSV (default: standard output).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Register a sensor-frame scan against a map.
    Register {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Initial pose as `tx,ty,tz,qx,qy,qz,qw` (default: identity).
        #[arg(long, allow_hyphen_values = true)]
        init: Option<String>,
        #[arg(long, default_value = "point_to_plane")]
        variant: String,
        /// Output JSON (default: standard output).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Measure new points in a session cloud relative to a reference map.
    Change {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: f64,
        /// Voxel edge applied to both clouds first; 0 keeps full density.
        #[arg(long, default_value_t = 0.0)]
        voxel: f64,
    },
    /// Run the full benchmark described by the config.
    Evaluate {
        /// Map PLY (overrides `map_path`).
        #[arg(long)]
        map: Option<PathBuf>,
        /// Trajectory CSV (overrides `trajectory_path`).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Skip the SVG plot.
        #[arg(long)]
        no_plot: bool,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<scan2map::Error> for Failure {
    fn from(e: scan2map::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn parse_pose(text: &str) -> CliResult<Pose> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("pose '{text}' must be 7 comma-separated numbers")))?;
    if v.len() != 7 {
        return Err(usage(format!("pose '{text}' must be 7 comma-separated numbers")));
    }
    Pose::from_translation_quaternion([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
        .map_err(|e| Failure::Data(anyhow!("invalid pose '{text}': {e}")))
}

fn resolve_pose(args: &PoseArgs) -> CliResult<StampedPose> {
    match (&args.pose, &args.trajectory) {
        (Some(p), None) => Ok(StampedPose {
            id: 0,
            pose: parse_pose(p)?,
        }),
        (None, Some(path)) => {
            let id = args.pose_id.ok_or_else(|| usage("--trajectory needs --pose-id"))?;
            read_trajectory(path)?
                .into_iter()
                .find(|p| p.id == id)
                .ok_or_else(|| Failure::Data(anyhow!("pose id {id} not found in {}", path.display())))
        }
        _ => Err(usage("give either --pose or --trajectory with --pose-id")),
    }
}

fn output_dir(global: &GlobalArgs) -> CliResult<PathBuf> {
    let dir = global.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Writes to `output` when given, else to standard output.
fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(p) => write_text(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("cannot write to standard output")?;
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).context("cannot serialize output")?;
    s.push('\n');
    Ok(s)
}

fn run(cli: Cli) -> CliResult<()> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut cfg = load_config(cli.global.config.as_deref(), &cli.global.sets, cli.global.seed, env_seed.as_deref())
        .map_err(|e| match e {
            ConfigError::Usage(e) => Failure::Usage(e),
            ConfigError::Data(e) => Failure::Data(e),
        })?;

    match cli.command {
        Command::Synth {
            kind,
            extent,
            density,
            change_fraction,
            poses,
            spacing,
            height,
        } => {
            let kind: SceneKind = kind.parse().map_err(usage)?;
            let mut spec = SceneSpec::new(kind, cfg.seed);
            spec.extent = extent.unwrap_or(spec.extent);
            spec.density = density.unwrap_or(spec.density);
            spec.change_fraction = change_fraction.unwrap_or(spec.change_fraction);
            spec.validate()?;
            let dir = output_dir(&cli.global)?;
            let manifest = if kind == SceneKind::ObjectChange {
                let (reference, session) = generate_pair(&spec)?;
                write_ply(dir.join("reference.ply"), &reference)?;
                write_ply(dir.join("session.ply"), &session)?;
                json!({
                    "spec": spec,
                    "reference_points": reference.len(),
                    "session_points": session.len(),
                    "added_points": session.len() - reference.len(),
                })
            } else {
                let cloud = generate(&spec)?;
                write_ply(dir.join("scene.ply"), &cloud)?;
                json!({ "spec": spec, "points": cloud.len() })
            };
            write_trajectory(dir.join("trajectory.csv"), &straight_trajectory(poses, spacing, height))?;
            write_text(&dir.join("manifest.json"), &to_json(&manifest)?)?;
            eprintln!("wrote {} scene to {}", kind, dir.display());
        }

        Command::Project {
            map,
            pose,
            noise,
            output,
        } => {
            let target = resolve_pose(&pose)?;
            let map = read_ply(&map)?;
            let mut scan = project_scan(&map, &target.pose, &cfg.beam)?;
            if noise > 0.0 {
                let spec = NoiseSpec::new(noise, 0)?;
                let mut rng = GaussianStream::keyed(cfg.seed, &[target.id]);
                scan = add_noise(&scan, &spec, &mut rng);
            }
            let path = match output {
                Some(p) => p,
                None => output_dir(&cli.global)?.join("scan.ply"),
            };
            write_ply(&path, &scan)?;
            eprintln!("wrote {} scan points to {}", scan.len(), path.display());
        }

        Command::Perturb { pose, count, output } => {
            let target = resolve_pose(&pose)?;
            let count = count.unwrap_or(cfg.trials);
            // Perturbations act about the sensor, as in the benchmark.
            let about_sensor = Pose::from_rotation(target.pose.rotation);
            let shift = Pose::from_translation(target.pose.translation);
            let mut rows = Vec::with_capacity(count);
            for trial in 0..count {
                let local = trial_initial_pose(&about_sensor, &cfg, target.id, trial)?;
                rows.push(StampedPose {
                    id: trial as u64,
                    pose: shift.compose(&local),
                });
            }
            emit(output.as_deref(), &format_trajectory(&rows))?;
        }

        Command::Register {
            scan,
            map,
            init,
            variant,
            output,
        } => {
            let variant: Variant = variant.parse().map_err(usage)?;
            let init = match init {
                Some(text) => parse_pose(&text)?,
                None => Pose::identity(),
            };
            let scan = read_ply(&scan)?;
            let map = read_ply(&map)?;
            let index = map.index();
            let result = register(&scan, &map, &index, &init, &cfg.icp.with_variant(variant))?;
            emit(output.as_deref(), &to_json(&result)?)?;
        }

        Command::Change {
            session,
            reference,
            trajectory,
            threshold,
            radius,
            voxel,
        } => {
            let load = |p: &Path| -> CliResult<PointCloud> {
                let c = read_ply(p)?.without_normals();
                Ok(if voxel > 0.0 { voxel_downsample(&c, voxel)? } else { c })
            };
            let session = load(&session)?;
            let reference = load(&reference)?;
            let poses = read_trajectory(&trajectory)?;
            let report = ChangeReport::compute(&session, &reference, &reference.index(), &poses, radius, threshold)?;
            match &cli.global.output_dir {
                Some(_) => {
                    let dir = output_dir(&cli.global)?;
                    write_text(&dir.join("change.json"), &to_json(&report)?)?;
                    write_text(&dir.join("change.csv"), &report.to_csv())?;
                }
                None => emit(None, &to_json(&report)?)?,
            }
            let s = &report.summary;
            eprintln!(
                "change over {} poses: median {:.2}%, IQR {:.2}%, max {:.2}%",
                report.per_pose.len(),
                s.median,
                s.iqr,
                s.max
            );
        }

        Command::Evaluate {
            map,
            trajectory,
            no_plot,
        } => {
            if let Some(m) = map {
                cfg.map_path = m;
            }
            if let Some(t) = trajectory {
                cfg.trajectory_path = t;
            }
            if cfg.map_path.as_os_str().is_empty() || cfg.trajectory_path.as_os_str().is_empty() {
                return Err(usage("evaluate needs map_path and trajectory_path (config, --set, --map, --trajectory)"));
            }
            let report = run_benchmark(&cfg, cli.global.jobs.unwrap_or(0))?;
            let dir = output_dir(&cli.global)?;
            write_report(&report, &dir, !no_plot)?;
            eprint!("{}", report.summary_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            eprintln!("run `scan2map --help` for usage");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_parsing() {
        let p = parse_pose("1,2,3,0,0,0,1").ok().unwrap();
        assert_eq!([p.translation.x, p.translation.y, p.translation.z], [1.0, 2.0, 3.0]);
        assert!(matches!(parse_pose("1,2,3"), Err(Failure::Usage(_))));
        assert!(matches!(parse_pose("a,2,3,0,0,0,1"), Err(Failure::Usage(_))));
        assert!(matches!(parse_pose("0,0,0,0,0,0,0"), Err(Failure::Data(_))));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
