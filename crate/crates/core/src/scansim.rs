//! Projected lidar scans.
//!
//! A scan is produced by resampling a dense map through a virtual spinning
//! lidar. Map points are expressed in the sensor frame and binned by
//! `(channel, azimuth step)`; each bin keeps only its closest point, which is
//! what makes nearer surfaces occlude farther ones. A bin then produces a
//! return only if that closest point is within range, below the height
//! ceiling, and close enough in angle to the bin's center ray.
//!
//! Bin centers sit at azimuth `k * 2pi / azimuth_steps` and elevation
//! `elevation_min + c * spacing`, where `spacing` divides the elevation span
//! into `channels - 1` equal gaps. Points farther than half a bin from every
//! center ray are not binned at all.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::se3::Pose;

/// Virtual lidar description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamModel {
    pub channels: u32,
    pub azimuth_steps: u32,
    /// Radians.
    pub elevation_min: f64,
    /// Radians.
    pub elevation_max: f64,
    /// Meters.
    pub max_range: f64,
    /// Meters above the sensor origin.
    pub max_height: f64,
    /// Radians between a return and its bin's center ray.
    pub angular_tolerance: f64,
}

impl Default for BeamModel {
    fn default() -> Self {
        default_beam_model()
    }
}

/// 32 channels, 0.4 degree azimuth steps, 30 m range and a 15 m ceiling.
///
/// The top channel is aimed at `atan(15 / 30)` so that it reaches exactly the
/// height ceiling at maximum range. The bottom channel points 25 degrees down.
pub fn default_beam_model() -> BeamModel {
    let channels = 32;
    let max_range: f64 = 30.0;
    let max_height: f64 = 15.0;
    let elevation_min = (-25.0f64).to_radians();
    let elevation_max = (max_height / max_range).atan();
    let spacing = (elevation_max - elevation_min) / (channels - 1) as f64;
    BeamModel {
        channels,
        azimuth_steps: 900,
        elevation_min,
        elevation_max,
        max_range,
        max_height,
        angular_tolerance: 0.5 * spacing,
    }
}

/// Bin address of a projected point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bin {
    pub channel: u32,
    pub azimuth: u32,
}

impl BeamModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.channels >= 1
            && self.azimuth_steps >= 1
            && self.elevation_min.is_finite()
            && self.elevation_max.is_finite()
            && self.elevation_min < self.elevation_max
            && self.max_range > 0.0
            && self.max_height.is_finite()
            && self.angular_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid beam model {self:?}")))
        }
    }

    pub fn ray_count(&self) -> usize {
        self.channels as usize * self.azimuth_steps as usize
    }

    /// Angle between adjacent channels. A single channel covers the whole
    /// elevation span.
    pub fn channel_spacing(&self) -> f64 {
        let span = self.elevation_max - self.elevation_min;
        if self.channels > 1 {
            span / (self.channels - 1) as f64
        } else {
            span
        }
    }

    pub fn channel_elevation(&self, channel: u32) -> f64 {
        if self.channels > 1 {
            self.elevation_min + channel as f64 * self.channel_spacing()
        } else {
            0.5 * (self.elevation_min + self.elevation_max)
        }
    }

    pub fn azimuth_step(&self) -> f64 {
        TAU / self.azimuth_steps as f64
    }

    /// Unit direction of a bin's center ray in the sensor frame.
    pub fn ray_direction(&self, bin: Bin) -> Vector3<f64> {
        let el = self.channel_elevation(bin.channel);
        let az = bin.azimuth as f64 * self.azimuth_step();
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Bin of a sensor-frame point, or `None` at the origin or outside the
    /// elevation span.
    pub fn bin_of(&self, p: &Vector3<f64>) -> Option<Bin> {
        let horizontal = p.x.hypot(p.y);
        if horizontal == 0.0 && p.z == 0.0 {
            return None;
        }
        let elevation = p.z.atan2(horizontal);
        let channel = if self.channels > 1 {
            ((elevation - self.elevation_min) / self.channel_spacing()).round()
        } else {
            let half = 0.5 * self.channel_spacing();
            let center = self.channel_elevation(0);
            if (elevation - center).abs() > half {
                return None;
            }
            0.0
        };
        if !(channel >= 0.0 && channel < self.channels as f64) {
            return None;
        }
        let az = p.y.atan2(p.x).rem_euclid(TAU);
        let azimuth = (az / self.azimuth_step()).round() as u64 % self.azimuth_steps as u64;
        Some(Bin {
            channel: channel as u32,
            azimuth: azimuth as u32,
        })
    }

    fn flat_index(&self, bin: Bin) -> usize {
        bin.channel as usize * self.azimuth_steps as usize + bin.azimuth as usize
    }
}

/// One simulated return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReturn {
    pub bin: Bin,
    /// Index of the originating map point.
    pub map_index: usize,
    /// Sensor-frame coordinates.
    pub point: Vector3<f64>,
    pub range: f64,
}

/// Returns ordered by channel, then azimuth.
pub fn project_returns(
    map: &PointCloud,
    sensor_pose: &Pose,
    model: &BeamModel,
) -> Result<Vec<ScanReturn>> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    model.validate()?;
    let to_sensor = sensor_pose.inverse();
    let mut buffer: Vec<Option<(f64, usize, Vector3<f64>)>> = vec![None; model.ray_count()];
    for (i, p) in map.points().iter().enumerate() {
        let q = to_sensor.transform_point(p);
        let Some(bin) = model.bin_of(&q) else {
            continue;
        };
        let range = q.norm();
        let slot = &mut buffer[model.flat_index(bin)];
        // Strict comparison keeps the lowest map index among equal ranges.
        if slot.map_or(true, |(best, _, _)| range < best) {
            *slot = Some((range, i, q));
        }
    }
    let mut returns = Vec::new();
    for channel in 0..model.channels {
        for azimuth in 0..model.azimuth_steps {
            let bin = Bin { channel, azimuth };
            let Some((range, map_index, point)) = buffer[model.flat_index(bin)] else {
                continue;
            };
            if range > model.max_range || point.z > model.max_height {
                continue;
            }
            let ray = model.ray_direction(bin);
            let off_axis = point.cross(&ray).norm().atan2(point.dot(&ray));
            if off_axis > model.angular_tolerance {
                continue;
            }
            returns.push(ScanReturn {
                bin,
                map_index,
                point,
                range,
            });
        }
    }
    Ok(returns)
}

/// Simulated scan in the sensor frame.
pub fn project_scan(map: &PointCloud, sensor_pose: &Pose, model: &BeamModel) -> Result<PointCloud> {
    let returns = project_returns(map, sensor_pose, model)?;
    PointCloud::new(returns.into_iter().map(|r| r.point).collect())
}
