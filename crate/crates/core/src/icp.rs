//! Robust ICP registration of a reading scan against a reference map.
//!
//! Each iteration transforms the reading by the current estimate, pairs every
//! reading point with its nearest reference point, drops pairs farther apart
//! than `max_correspondence`, weights the rest with the Cauchy function of
//! their residual and solves the weighted problem for a pose increment, which
//! is composed on the left of the estimate. Iteration stops once the increment
//! is below both epsilons (`converged`) or after `max_iterations`.
//!
//! - Point-to-Point: residual is the pair distance; the increment is the
//!   closed-form weighted Kabsch alignment.
//! - Point-to-Plane: residual is the distance along the reference normal; the
//!   increment is one damped Gauss-Newton step on the twist, linearized about
//!   the weighted centroid of the transformed reading points.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::cloud::{estimate_normals_indexed, PointCloud, SpatialIndex, DEFAULT_NORMAL_NEIGHBORS};
use crate::error::{Error, Result};
use crate::se3::{rotation_angle, se3_exp, Pose, Twist};

/// Tikhonov damping added to the diagonal of the normalized 6x6 system.
pub const DAMPING: f64 = 1e-6;

/// Largest accepted condition number of the damped 6x6 system.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PointToPoint,
    PointToPlane,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::PointToPoint, Variant::PointToPlane];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::PointToPoint => "point_to_point",
            Variant::PointToPlane => "point_to_plane",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "point_to_point" | "ptp" => Ok(Variant::PointToPoint),
            "point_to_plane" | "ptplane" => Ok(Variant::PointToPlane),
            _ => Err(Error::InvalidArgument(format!("unknown ICP variant '{s}'"))),
        }
    }
}

/// Tuning shared by both variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    /// Meters.
    pub max_correspondence: f64,
    pub max_iterations: usize,
    /// Meters.
    pub cauchy_scale: f64,
    /// Meters.
    pub translation_epsilon: f64,
    /// Radians.
    pub rotation_epsilon: f64,
    pub min_correspondences: usize,
    /// Neighborhood size used when reference normals must be estimated.
    pub normal_neighbors: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_correspondence: 0.7,
            max_iterations: 150,
            cauchy_scale: 0.3,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-5,
            min_correspondences: 10,
            normal_neighbors: DEFAULT_NORMAL_NEIGHBORS,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_correspondence > 0.0) {
            return Err(Error::InvalidArgument("max_correspondence must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.cauchy_scale > 0.0) {
            return Err(Error::InvalidArgument("cauchy_scale must be positive".into()));
        }
        if !(self.translation_epsilon >= 0.0 && self.rotation_epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilons must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_variant(self, variant: Variant) -> IcpConfig {
        IcpConfig {
            variant,
            params: self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub variant: Variant,
    #[serde(flatten)]
    pub params: IcpParams,
}

impl IcpConfig {
    pub fn new(variant: Variant) -> Self {
        IcpParams::default().with_variant(variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Reading-to-reference transform.
    pub pose: Pose,
    pub iterations: usize,
    pub converged: bool,
    /// Unweighted RMS of the residuals of the last iteration's pairs.
    pub final_rms_residual: f64,
    pub correspondence_count: usize,
}

/// Cauchy weight `1 / (1 + (r / c)^2)`.
pub fn cauchy_weight(residual: f64, scale: f64) -> f64 {
    let u = residual / scale;
    1.0 / (1.0 + u * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub source: Vector3<f64>,
    pub target: Vector3<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePair {
    pub source: Vector3<f64>,
    pub target: Vector3<f64>,
    /// Unit normal of the target surface.
    pub normal: Vector3<f64>,
    pub weight: f64,
}

/// Pose minimizing `sum w |T a - b|^2` (weighted Kabsch with reflection
/// correction).
pub fn solve_point_to_point(pairs: &[WeightedPair]) -> Result<Pose> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "point-to-point needs 3 pairs, got {}",
            pairs.len()
        )));
    }
    let total: f64 = pairs.iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateGeometry("total weight is zero".into()));
    }
    let (sa, sb) = pairs.iter().fold((Vector3::zeros(), Vector3::zeros()), |(sa, sb), p| {
        (sa + p.source * p.weight, sb + p.target * p.weight)
    });
    let (ca, cb) = (sa / total, sb / total);
    let h = pairs.iter().fold(Matrix3::zeros(), |h, p| {
        h + (p.source - ca) * (p.target - cb).transpose() * p.weight
    });
    let svd = h.svd(true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[1] > 1e-12 * s[0]) {
        return Err(Error::DegenerateGeometry(
            "pairs are collinear or coincident".into(),
        ));
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    Ok(Pose {
        rotation,
        translation: cb - rotation * ca,
    })
}

/// Weight-normalized normal equations `(H, g)` of the linearized
/// point-to-plane objective, without damping. Row `i` of the Jacobian is
/// `[n_i, a_i x n_i]` and its residual `n_i . (a_i - b_i)`.
pub fn point_to_plane_system(pairs: &[PlanePair]) -> (Matrix6<f64>, Vector6<f64>, f64) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut total = 0.0;
    for p in pairs {
        let arm = p.source.cross(&p.normal);
        let j = Vector6::new(p.normal.x, p.normal.y, p.normal.z, arm.x, arm.y, arm.z);
        let r = p.normal.dot(&(p.source - p.target));
        h += j * j.transpose() * p.weight;
        g += j * (r * p.weight);
        total += p.weight;
    }
    if total > 0.0 {
        h /= total;
        g /= total;
    }
    (h, g, total)
}

/// Twist minimizing the linearized `sum w (n . (exp(xi) a - b))^2`, with
/// `DAMPING` added to the diagonal of the weight-normalized system.
///
/// A point displaced by `+d` along its normal yields `rho = -d n`.
pub fn solve_point_to_plane(pairs: &[PlanePair]) -> Result<Twist> {
    if pairs.len() < 6 {
        return Err(Error::DegenerateGeometry(format!(
            "point-to-plane needs 6 pairs, got {}",
            pairs.len()
        )));
    }
    let (mut h, g, total) = point_to_plane_system(pairs);
    if !(total > 0.0) {
        return Err(Error::DegenerateGeometry("total weight is zero".into()));
    }
    for i in 0..6 {
        h[(i, i)] += DAMPING;
    }
    let eig = SymmetricEigen::new(h);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::DegenerateGeometry(format!(
            "point-to-plane system is singular (condition {:e})",
            hi / lo
        )));
    }
    let delta = h
        .cholesky()
        .ok_or_else(|| Error::DegenerateGeometry("point-to-plane system not positive definite".into()))?
        .solve(&(-g));
    Ok(Twist::from_vector(&delta))
}

/// Registers `reading` onto `reference`, starting from `init`.
///
/// `ref_index` must index `reference`'s points. For Point-to-Plane, reference
/// normals are estimated when the cloud carries none.
pub fn register(
    reading: &PointCloud,
    reference: &PointCloud,
    ref_index: &SpatialIndex,
    init: &Pose,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    let params = &cfg.params;
    params.validate()?;
    if reading.is_empty() {
        return Err(Error::EmptyInput);
    }
    if reference.is_empty() || ref_index.is_empty() {
        return Err(Error::EmptyReference);
    }
    if ref_index.len() != reference.len() {
        return Err(Error::InvalidArgument(
            "reference index does not match reference cloud".into(),
        ));
    }
    let estimated;
    let normals = match cfg.variant {
        Variant::PointToPoint => None,
        Variant::PointToPlane => match reference.normals() {
            Some(n) => Some(n),
            None => {
                estimated = estimate_normals_indexed(
                    reference,
                    ref_index,
                    params.normal_neighbors,
                    &init.translation,
                )?;
                estimated.normals()
            }
        },
    };

    let targets = reference.points();
    let mut pose = *init;
    let mut moved: Vec<(Vector3<f64>, usize, f64)> = Vec::with_capacity(reading.len());
    let mut iterations = 0;
    let mut converged = false;
    let mut rms = f64::NAN;
    let mut count = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        moved.clear();
        for a in reading.points() {
            let p = pose.transform_point(a);
            if let Some((j, d)) = ref_index.nearest_within(&p, params.max_correspondence) {
                moved.push((p, j, d));
            }
        }
        count = moved.len();
        if count < params.min_correspondences {
            return Err(Error::DegenerateGeometry(format!(
                "{count} correspondences within {} m at iteration {iterations}, need {}",
                params.max_correspondence, params.min_correspondences
            )));
        }

        let increment = match normals {
            None => {
                let pairs: Vec<WeightedPair> = moved
                    .iter()
                    .map(|&(p, j, d)| WeightedPair {
                        source: p,
                        target: targets[j],
                        weight: cauchy_weight(d, params.cauchy_scale),
                    })
                    .collect();
                rms = (moved.iter().map(|m| m.2 * m.2).sum::<f64>() / count as f64).sqrt();
                solve_point_to_point(&pairs)?
            }
            Some(normals) => {
                let mut sum_sq = 0.0;
                let mut pairs: Vec<PlanePair> = moved
                    .iter()
                    .map(|&(p, j, _)| {
                        let n = normals[j];
                        let r = n.dot(&(p - targets[j]));
                        sum_sq += r * r;
                        PlanePair {
                            source: p,
                            target: targets[j],
                            normal: n,
                            weight: cauchy_weight(r, params.cauchy_scale),
                        }
                    })
                    .collect();
                rms = (sum_sq / count as f64).sqrt();
                // Linearize about the weighted centroid of the moved points.
                let total: f64 = pairs.iter().map(|p| p.weight).sum();
                let center = pairs
                    .iter()
                    .fold(Vector3::zeros(), |acc, p| acc + p.source * p.weight)
                    / total;
                for p in &mut pairs {
                    p.source -= center;
                    p.target -= center;
                }
                let local = se3_exp(&solve_point_to_plane(&pairs)?)?;
                Pose::from_translation(center)
                    .compose(&local)
                    .compose(&Pose::from_translation(-center))
            }
        };

        pose = increment.compose(&pose);
        if increment.translation.norm() < params.translation_epsilon
            && rotation_angle(&increment.rotation) < params.rotation_epsilon
        {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        pose: pose.orthonormalized(),
        iterations,
        converged,
        final_rms_residual: rms,
        correspondence_count: count,
    })
}
