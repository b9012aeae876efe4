//! Scan-to-map relocalization benchmarking.
//!
//! The crate simulates occlusion-aware lidar scans from dense point-cloud
//! maps, perturbs their ground-truth poses on SE(3), registers them back with
//! Point-to-Point and Point-to-Plane ICP under Cauchy reweighting, quantifies
//! environmental change between sessions, and assembles per-pose error
//! reports.
//!
//! Module overview:
//!
//! - [`se3`]: pose algebra, perturbation sampling and error metrics
//! - [`cloud`]: point clouds, k-d tree, voxel filter, normals, PLY and CSV IO
//! - [`scansim`]: projected lidar scans with a spherical depth buffer
//! - [`icp`]: robust Point-to-Point and Point-to-Plane registration
//! - [`change`]: per-pose change percentages and their summaries
//! - [`synthgen`]: analytic test scenes for the known failure regimes
//! - [`bench`]: the end-to-end evaluation harness and its reports

pub mod bench;
pub mod change;
pub mod cloud;
pub mod error;
pub mod icp;
pub mod rng;
pub mod scansim;
pub mod se3;
pub mod stats;
pub mod synthgen;

pub use cloud::{PointCloud, SpatialIndex};
pub use error::{Error, Result};
pub use se3::{Pose, Twist};
