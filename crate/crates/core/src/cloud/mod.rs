//! Point-cloud container and the preprocessing steps applied to maps and
//! scans: voxel downsampling, spherical cropping, noise injection and normal
//! estimation.

mod index;
pub mod ply;
pub mod trajectory;

pub use index::SpatialIndex;

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GaussianStream;
use crate::se3::Pose;

/// Default neighborhood size for normal estimation.
pub const DEFAULT_NORMAL_NEIGHBORS: usize = 10;

/// Points in meters, with optional unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    pub fn with_normals(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| !((n.norm() - 1.0).abs() <= 1e-6)) {
            return Err(Error::InvalidArgument(format!("normal {i} is not unit length")));
        }
        let mut cloud = Self::new(points)?;
        cloud.normals = Some(normals);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    /// Copy of the cloud mapped through `pose`; normals are rotated.
    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.transform_vector(n)).collect()),
        }
    }

    /// The points at `indices`, in that order, with their normals.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        }
    }

    /// Appends `other`; normals survive only if both clouds carry them.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let normals = match (&self.normals, &other.normals) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        PointCloud { points, normals }
    }

    pub fn index(&self) -> SpatialIndex {
        SpatialIndex::new(&self.points)
    }
}

/// Integer voxel coordinates of `p` for cells `[i v, (i + 1) v)`.
pub fn voxel_key(p: &Vector3<f64>, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// The grid is anchored at the origin. Output points follow the order in
/// which their voxels are first visited. Normals are dropped.
pub fn voxel_downsample(c: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut sums: Vec<(Vector3<f64>, usize)> = Vec::new();
    for p in &c.points {
        let slot = *slots.entry(voxel_key(p, voxel)).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p;
        sums[slot].1 += 1;
    }
    Ok(PointCloud {
        points: sums.into_iter().map(|(s, n)| s / n as f64).collect(),
        normals: None,
    })
}

/// Points within `radius` of `center`, in their original order.
pub fn radius_crop(c: &PointCloud, center: &Vector3<f64>, radius: f64) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "crop radius must be positive, got {radius}"
        )));
    }
    let keep: Vec<usize> = (0..c.len())
        .filter(|&i| (c.points[i] - center).norm() <= radius)
        .collect();
    Ok(c.select(&keep))
}

/// Isotropic Gaussian point noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per coordinate, meters.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be non-negative, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    pub fn stream(&self) -> GaussianStream {
        GaussianStream::new(self.seed)
    }
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate, drawing x, y,
/// z per point in order. Normals are dropped since they no longer describe
/// the perturbed points.
pub fn add_noise(c: &PointCloud, spec: &NoiseSpec, rng: &mut GaussianStream) -> PointCloud {
    if spec.sigma == 0.0 {
        return c.clone();
    }
    let points = c
        .points
        .iter()
        .map(|p| {
            let dx = rng.normal(spec.sigma);
            let dy = rng.normal(spec.sigma);
            let dz = rng.normal(spec.sigma);
            p + Vector3::new(dx, dy, dz)
        })
        .collect();
    PointCloud {
        points,
        normals: None,
    }
}

/// Unit eigenvector of the smallest eigenvalue of a symmetric 3x3 matrix.
pub(crate) fn smallest_eigenvector(cov: &Matrix3<f64>) -> Vector3<f64> {
    let eig = SymmetricEigen::new(*cov);
    let k = eig.eigenvalues.imin();
    eig.eigenvectors.column(k).normalize()
}

/// Estimates a normal per point from the covariance of the point and its `k`
/// nearest neighbors, oriented towards `viewpoint`.
pub fn estimate_normals(c: &PointCloud, k: usize, viewpoint: &Vector3<f64>) -> Result<PointCloud> {
    let index = c.index();
    estimate_normals_indexed(c, &index, k, viewpoint)
}

/// [`estimate_normals`] with a prebuilt index over `c`.
pub fn estimate_normals_indexed(
    c: &PointCloud,
    index: &SpatialIndex,
    k: usize,
    viewpoint: &Vector3<f64>,
) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!(
            "normal estimation needs k >= 3, got {k}"
        )));
    }
    if c.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            got: c.len(),
        });
    }
    let normals = c
        .points
        .iter()
        .map(|p| {
            let neighbors = index.knn(p, k + 1)?;
            let n = neighbors.len() as f64;
            let mean = neighbors
                .iter()
                .fold(Vector3::zeros(), |acc, &(i, _)| acc + c.points[i])
                / n;
            let cov = neighbors.iter().fold(Matrix3::zeros(), |acc, &(i, _)| {
                let d = c.points[i] - mean;
                acc + d * d.transpose()
            }) / n;
            let mut normal = smallest_eigenvector(&cov);
            if normal.dot(&(viewpoint - p)) < 0.0 {
                normal = -normal;
            }
            Ok(normal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud {
        points: c.points.clone(),
        normals: Some(normals),
    })
}
