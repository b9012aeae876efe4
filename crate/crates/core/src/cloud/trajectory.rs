//! Trajectory CSV: header `pose_id,tx,ty,tz,qx,qy,qz,qw`, one pose per row,
//! translations in meters and rotations as unit quaternions.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::se3::Pose;

pub const TRAJECTORY_HEADER: &str = "pose_id,tx,ty,tz,qx,qy,qz,qw";

/// A trajectory entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub id: u64,
    pub pose: Pose,
}

pub fn parse_trajectory(text: &str) -> Result<Vec<StampedPose>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == TRAJECTORY_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse(format!(
                "trajectory header must be '{TRAJECTORY_HEADER}', got '{h}'"
            )))
        }
        None => return Err(Error::Parse("empty trajectory file".into())),
    }
    lines
        .map(|(lineno, line)| {
            let bad = |what: &str| Error::Parse(format!("trajectory line {}: {what}", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(bad(&format!("expected 8 fields, got {}", fields.len())));
            }
            let id = fields[0].parse::<u64>().map_err(|_| bad("pose_id must be an unsigned integer"))?;
            let v = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("non-numeric field"))?;
            let pose = Pose::from_translation_quaternion([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
                .map_err(|e| bad(&e.to_string()))?;
            Ok(StampedPose { id, pose })
        })
        .collect()
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<StampedPose>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text)
}

/// One CSV row (without newline) for `pose`.
pub fn pose_row(pose: &Pose) -> String {
    let t = pose.translation;
    let [qx, qy, qz, qw] = pose.quaternion();
    format!("{},{},{},{qx},{qy},{qz},{qw}", t.x, t.y, t.z)
}

pub fn format_trajectory(poses: &[StampedPose]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for p in poses {
        out.push_str(&format!("{},{}\n", p.id, pose_row(&p.pose)));
    }
    out
}

pub fn write_trajectory(path: impl AsRef<Path>, poses: &[StampedPose]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_trajectory(poses)).map_err(|e| Error::io(path, e))
}
