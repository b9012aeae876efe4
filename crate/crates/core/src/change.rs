//! Change detection between an aligned session cloud and a reference map.
//!
//! A session point counts as new when its nearest reference point lies
//! farther than the threshold. The change percentage at a pose is the number
//! of new session points inside a sphere around the pose divided by the
//! number of reference points inside the same sphere, times 100. Points
//! that disappeared from the reference are not counted.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::trajectory::StampedPose;
use crate::cloud::{PointCloud, SpatialIndex};
use crate::error::{Error, Result};
use crate::se3::Pose;
use crate::stats::{self, Summary};

/// Default distance beyond which a session point counts as new (meters).
pub const DEFAULT_THRESHOLD: f64 = 0.3;
/// Default window radius (meters).
pub const DEFAULT_RADIUS: f64 = 35.0;

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {value}")))
    }
}

fn is_new(p: &Vector3<f64>, reference_index: &SpatialIndex, threshold: f64) -> bool {
    reference_index.nearest_within(p, threshold).is_none()
}

/// Marks the session points whose nearest reference point is farther than
/// `threshold`.
pub fn detect_changes(session: &PointCloud, reference_index: &SpatialIndex, threshold: f64) -> Result<Vec<bool>> {
    check_positive("threshold", threshold)?;
    if reference_index.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(session
        .points()
        .iter()
        .map(|p| is_new(p, reference_index, threshold))
        .collect())
}

/// Counts behind one change percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseChange {
    pub pose_id: u64,
    pub change_percent: f64,
    pub new_point_count: usize,
    pub reference_point_count: usize,
}

/// New-point and reference-point counts inside the sphere of `radius` around
/// `center`. Nearest neighbors are searched in the whole reference.
pub fn change_counts(
    session: &PointCloud,
    reference_index: &SpatialIndex,
    center: &Vector3<f64>,
    radius: f64,
    threshold: f64,
) -> Result<(usize, usize)> {
    check_positive("radius", radius)?;
    check_positive("threshold", threshold)?;
    if reference_index.is_empty() {
        return Err(Error::EmptyReference);
    }
    let reference_count = reference_index.within_radius(center, radius).len();
    let new_count = session
        .points()
        .iter()
        .filter(|p| (*p - center).norm() <= radius && is_new(p, reference_index, threshold))
        .count();
    Ok((new_count, reference_count))
}

/// Percentage of new session points relative to reference points inside the
/// sphere of `radius` around the pose position.
pub fn change_percent_at_pose(
    session: &PointCloud,
    reference: &PointCloud,
    reference_index: &SpatialIndex,
    pose: &Pose,
    radius: f64,
    threshold: f64,
) -> Result<f64> {
    if reference_index.len() != reference.len() {
        return Err(Error::InvalidArgument(
            "reference index does not match reference cloud".into(),
        ));
    }
    let (new_count, reference_count) = change_counts(session, reference_index, &pose.translation, radius, threshold)?;
    if reference_count == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(100.0 * new_count as f64 / reference_count as f64)
}

/// Median, IQR and maximum of per-pose change percentages.
pub fn summarize_changes(percents: &[f64]) -> Result<Summary> {
    stats::summarize(percents)
}

/// One summary formatted as `label,median,iqr,max` with two decimals.
pub fn summary_row(label: &str, s: &Summary) -> String {
    format!("{label},{:.2},{:.2},{:.2}", s.median, s.iqr, s.max)
}

pub const CHANGE_CSV_HEADER: &str = "pose_id,change_percent,new_points,ref_points";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub threshold: f64,
    pub radius: f64,
    pub per_pose: Vec<PoseChange>,
    /// Poses whose window held no reference points.
    pub undefined_poses: Vec<u64>,
    pub summary: Summary,
}

impl ChangeReport {
    /// Evaluates every pose of a trajectory. Poses without reference points
    /// in their window are listed in `undefined_poses`.
    pub fn compute(
        session: &PointCloud,
        reference: &PointCloud,
        reference_index: &SpatialIndex,
        poses: &[StampedPose],
        radius: f64,
        threshold: f64,
    ) -> Result<ChangeReport> {
        if reference_index.len() != reference.len() {
            return Err(Error::InvalidArgument(
                "reference index does not match reference cloud".into(),
            ));
        }
        let mut per_pose = Vec::with_capacity(poses.len());
        let mut undefined_poses = Vec::new();
        for sp in poses {
            let (new_count, reference_count) =
                change_counts(session, reference_index, &sp.pose.translation, radius, threshold)?;
            if reference_count == 0 {
                undefined_poses.push(sp.id);
                continue;
            }
            per_pose.push(PoseChange {
                pose_id: sp.id,
                change_percent: 100.0 * new_count as f64 / reference_count as f64,
                new_point_count: new_count,
                reference_point_count: reference_count,
            });
        }
        let percents: Vec<f64> = per_pose.iter().map(|p| p.change_percent).collect();
        let summary = summarize_changes(&percents)?;
        Ok(ChangeReport {
            threshold,
            radius,
            per_pose,
            undefined_poses,
            summary,
        })
    }

    /// Per-pose rows followed by a `summary` footer row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CHANGE_CSV_HEADER);
        out.push('\n');
        for p in &self.per_pose {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.pose_id, p.change_percent, p.new_point_count, p.reference_point_count
            );
        }
        let s = &self.summary;
        let _ = writeln!(out, "summary,median={},iqr={},max={}", s.median, s.iqr, s.max);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;
    use crate::se3::so3_exp;

    fn random_cloud(seed: u64, n: usize, half: f64) -> PointCloud {
        let mut rng = GaussianStream::new(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.uniform_range(-half, half),
                        rng.uniform_range(-half, half),
                        rng.uniform_range(-half, half),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_clouds_have_no_change() {
        let c = random_cloud(1, 2000, 10.0);
        let idx = c.index();
        assert!(detect_changes(&c, &idx, 0.3).unwrap().iter().all(|m| !m));
        let pct = change_percent_at_pose(&c, &c, &idx, &Pose::identity(), 35.0, 0.3).unwrap();
        assert_eq!(pct, 0.0);
    }

    #[test]
    fn far_cluster_is_exactly_marked() {
        let reference = random_cloud(2, 2000, 10.0);
        let cluster = random_cloud(3, 50, 0.5).transformed(&Pose::from_translation(Vector3::new(100.0, 0.0, 0.0)));
        let session = reference.concat(&cluster);
        let mask = detect_changes(&session, &reference.index(), 0.3).unwrap();
        assert_eq!(mask.iter().filter(|m| **m).count(), 50);
        assert!(mask[2000..].iter().all(|m| *m));
    }

    #[test]
    fn twenty_new_among_thousand_is_two_percent() {
        let reference = random_cloud(4, 1000, 5.0);
        let extra: Vec<Vector3<f64>> = (0..20).map(|i| Vector3::new(0.0, 0.0, 8.0 + i as f64 * 0.01)).collect();
        let session = reference.concat(&PointCloud::new(extra).unwrap());
        let idx = reference.index();
        let pct = change_percent_at_pose(&session, &reference, &idx, &Pose::identity(), 35.0, 0.3).unwrap();
        assert!((pct - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mask_matches_linear_scan() {
        let reference = random_cloud(5, 3000, 5.0);
        let mut rng = GaussianStream::new(6);
        let session: Vec<Vector3<f64>> = reference.points()[..1000]
            .iter()
            .map(|p| {
                let dir = Vector3::new(rng.standard_normal(), rng.standard_normal(), rng.standard_normal()).normalize();
                p + dir * rng.uniform_range(0.0, 0.6)
            })
            .collect();
        let session = PointCloud::new(session).unwrap();
        let mask = detect_changes(&session, &reference.index(), 0.3).unwrap();
        for (p, m) in session.points().iter().zip(&mask) {
            let d = reference.points().iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(*m, d > 0.3);
        }
    }

    #[test]
    fn mask_is_monotone_in_threshold() {
        let reference = random_cloud(7, 1500, 5.0);
        let session = random_cloud(8, 800, 5.5);
        let idx = reference.index();
        let mut previous = detect_changes(&session, &idx, 0.05).unwrap();
        for t in [0.1, 0.2, 0.3, 0.5, 1.0] {
            let mask = detect_changes(&session, &idx, t).unwrap();
            assert!(mask.iter().zip(&previous).all(|(now, before)| !now || *before));
            previous = mask;
        }
    }

    #[test]
    fn percent_is_rigidly_invariant() {
        let reference = random_cloud(9, 3000, 15.0);
        let session = random_cloud(10, 300, 15.0).concat(&reference.select(&(0..2000).collect::<Vec<_>>()));
        let pose = Pose::from_translation(Vector3::new(3.0, -2.0, 1.0));
        let base = change_percent_at_pose(&session, &reference, &reference.index(), &pose, 12.0, 0.3).unwrap();
        let t = Pose::new(so3_exp(&Vector3::new(0.3, -0.7, 1.9)), Vector3::new(50.0, 20.0, -5.0)).unwrap();
        let moved_ref = reference.transformed(&t);
        let moved = change_percent_at_pose(
            &session.transformed(&t),
            &moved_ref,
            &moved_ref.index(),
            &t.compose(&pose),
            12.0,
            0.3,
        )
        .unwrap();
        assert!(base > 0.0);
        assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let c = random_cloud(11, 100, 1.0);
        let empty = SpatialIndex::new(&[]);
        assert!(matches!(detect_changes(&c, &empty, 0.3), Err(Error::EmptyReference)));
        assert!(detect_changes(&c, &c.index(), 0.0).is_err());
        let far = Pose::from_translation(Vector3::new(1000.0, 0.0, 0.0));
        assert!(matches!(
            change_percent_at_pose(&c, &c, &c.index(), &far, 5.0, 0.3),
            Err(Error::UndefinedRatio)
        ));
        assert!(change_percent_at_pose(&c, &c, &c.index(), &Pose::identity(), -1.0, 0.3).is_err());
        assert!(matches!(summarize_changes(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn summaries() {
        assert_eq!(
            summarize_changes(&[2.0, 2.0, 2.0]).unwrap(),
            Summary { median: 2.0, iqr: 0.0, max: 2.0 }
        );
        assert_eq!(
            summarize_changes(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap(),
            Summary { median: 3.0, iqr: 2.0, max: 5.0 }
        );
        let row = summary_row("Week 00", &Summary { median: 1.81, iqr: 2.64, max: 8.68 });
        assert_eq!(row, "Week 00,1.81,2.64,8.68");
    }

    #[test]
    fn report_rows_and_undefined_poses() {
        let reference = random_cloud(12, 2000, 5.0);
        let extra = PointCloud::new(vec![Vector3::new(0.0, 0.0, 9.0); 10]).unwrap();
        let session = reference.concat(&extra);
        let poses = vec![
            StampedPose { id: 0, pose: Pose::identity() },
            StampedPose { id: 1, pose: Pose::from_translation(Vector3::new(500.0, 0.0, 0.0)) },
        ];
        let report = ChangeReport::compute(&session, &reference, &reference.index(), &poses, 35.0, 0.3).unwrap();
        assert_eq!(report.per_pose.len(), 1);
        assert_eq!(report.undefined_poses, vec![1]);
        assert_eq!(report.per_pose[0].new_point_count, 10);
        assert_eq!(report.per_pose[0].reference_point_count, 2000);
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CHANGE_CSV_HEADER);
        assert_eq!(lines[1], "0,0.5,10,2000");
        assert_eq!(lines[2], "summary,median=0.5,iqr=0,max=0.5");
        let back: ChangeReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
