//! Rigid-body pose algebra on SE(3).
//!
//! Twists are ordered `(rho, phi)`: translational part first, rotational part
//! second, matching the block order of the perturbation covariance. The
//! exponential is `exp(xi^) = [[R, J rho], [0, 1]]` with `R` from Rodrigues'
//! formula and `J` the left Jacobian of SO(3).
//!
//! Perturbations are applied on the left, `T_init = exp(xi^) * T_gt`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Below this rotation angle the closed forms switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Logarithms are refused within this distance of a half turn.
pub const PI_MARGIN: f64 = 1e-6;

/// Skew-symmetric matrix of `v`, so that `hat(v) * u == v.cross(u)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]; reads the skew part of `m` without checking symmetry.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues coefficients `sin(t)/t` and `(1 - cos(t))/t^2`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = 0.5 * theta;
        let s = half.sin() / half;
        (theta.sin() / theta, 0.5 * s * s)
    }
}

pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b) = rodrigues_coefficients(theta);
    let k = hat(phi);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation angle in `[0, pi]`, computed with `atan2` so that it is accurate
/// near both zero and a half turn.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5 * vee(&(r - r.transpose())).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

/// Logarithm of a rotation matrix as an axis-angle vector.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let skew = 0.5 * vee(&(r - r.transpose()));
    let s = skew.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if !theta.is_finite() {
        return Err(Error::InvalidArgument("non-finite rotation".into()));
    }
    if theta > PI - PI_MARGIN {
        return Err(Error::BranchAmbiguity { angle: theta });
    }
    if theta < SMALL_ANGLE {
        return Ok(skew * (1.0 + theta * theta / 6.0));
    }
    if c > -0.9 {
        return Ok(skew * (theta / s));
    }
    // Near a half turn the skew part vanishes; recover the axis from the
    // symmetric part (R + R^T)/2 - cI = (1 - c) a a^T instead.
    let sym = 0.5 * (r + r.transpose()) - Matrix3::identity() * c;
    let k = (0..3)
        .max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = sym.column(k).into();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Left Jacobian of SO(3).
pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    let (b, c) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (_, b) = rodrigues_coefficients(theta);
        (b, (theta - theta.sin()) / (theta * theta * theta))
    };
    Matrix3::identity() + k * b + k * k * c
}

/// Inverse of the left Jacobian of SO(3).
pub fn left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    Matrix3::identity() - k * 0.5 + k * k * d
}

/// Tangent-space increment: `rho` in meters, `phi` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.phi.iter()).all(|v| v.is_finite())
    }

    /// The 4x4 matrix `xi^` in se(3).
    pub fn hat(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&self.phi));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.rho);
        m
    }
}

/// Rigid transform `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    /// Builds a pose, checking that `rotation` is a proper rotation within
    /// `1e-6`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let finite = rotation.iter().chain(translation.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite pose".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (|R^T R - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(r: Matrix3<f64>) -> Self {
        Self {
            rotation: r,
            translation: Vector3::zeros(),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = m.fixed_view::<1, 4>(3, 0);
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
            return Err(Error::InvalidArgument(
                "bottom row of a rigid transform must be (0, 0, 0, 1)".into(),
            ));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Projects the rotation back onto SO(3) by polar decomposition.
    pub fn orthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut d = Matrix3::identity();
            d[(2, 2)] = -1.0;
            r = u * d * v_t;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }

    /// Unit quaternion `(qx, qy, qz, qw)` of the rotation.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        [q.i, q.j, q.k, q.w]
    }

    /// Pose from translation and a quaternion `(qx, qy, qz, qw)`, which is
    /// normalized first.
    pub fn from_translation_quaternion(t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        let [qx, qy, qz, qw] = q;
        let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
        if !norm.is_finite() || norm < 1e-12 || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid pose row t = {t:?}, q = {q:?}"
            )));
        }
        let uq = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(qw, qx, qy, qz));
        Ok(Pose {
            rotation: uq.to_rotation_matrix().into_inner(),
            translation: Vector3::from(t),
        })
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// SE(3) exponential map.
pub fn se3_exp(xi: &Twist) -> Result<Pose> {
    if !xi.is_finite() {
        return Err(Error::InvalidArgument("non-finite twist".into()));
    }
    Ok(Pose {
        rotation: so3_exp(&xi.phi),
        translation: left_jacobian(&xi.phi) * xi.rho,
    })
}

/// SE(3) logarithm map.
pub fn se3_log(p: &Pose) -> Result<Twist> {
    let phi = so3_log(&p.rotation)?;
    Ok(Twist {
        rho: left_jacobian_inverse(&phi) * p.translation,
        phi,
    })
}

/// Diagonal Gaussian perturbation model on the twist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Per-axis standard deviations: three in meters, then three in radians.
    pub sigma: [f64; 6],
    pub seed: u64,
}

impl PerturbationSpec {
    /// 0.1 m per translation axis and 0.09 rad per rotation axis.
    pub const DEFAULT_SIGMA: [f64; 6] = [0.1, 0.1, 0.1, 0.09, 0.09, 0.09];

    pub fn new(sigma: [f64; 6], seed: u64) -> Result<Self> {
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "perturbation sigmas must be finite and non-negative, got {sigma:?}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    pub fn stream(&self) -> GaussianStream {
        GaussianStream::new(self.seed)
    }
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            sigma: Self::DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

/// Draws `xi ~ N(0, diag(sigma^2))`, one variate per axis in twist order.
pub fn sample_perturbation(spec: &PerturbationSpec, rng: &mut GaussianStream) -> Twist {
    let mut v = Vector6::zeros();
    for (x, s) in v.iter_mut().zip(spec.sigma) {
        *x = rng.normal(s);
    }
    Twist::from_vector(&v)
}

/// `exp(xi) * gt` for a twist drawn from `spec`.
pub fn perturb_pose(gt: &Pose, spec: &PerturbationSpec, rng: &mut GaussianStream) -> Pose {
    let xi = sample_perturbation(spec, rng);
    apply_perturbation(gt, &xi)
}

/// Left-composes `exp(xi)` onto `gt`.
pub fn apply_perturbation(gt: &Pose, xi: &Twist) -> Pose {
    // Sampled twists are finite by construction.
    let delta = se3_exp(xi).expect("finite twist");
    delta.compose(gt)
}

/// Euclidean distance between the translations of two poses.
pub fn translation_error(a: &Pose, b: &Pose) -> f64 {
    (a.translation - b.translation).norm()
}

/// Norm of `log(C_a C_b^-1)`, the angle of the relative rotation.
pub fn rotation_error(a: &Pose, b: &Pose) -> Result<f64> {
    let rel = a.rotation * b.rotation.transpose();
    let theta = rotation_angle(&rel);
    if theta > PI - PI_MARGIN {
        return Err(Error::BranchAmbiguity { angle: theta });
    }
    Ok(theta)
}

/// Axis-angle vector of `C_a C_b^-1`; its norm is [`rotation_error`].
pub fn rotation_error_vector(a: &Pose, b: &Pose) -> Result<Vector3<f64>> {
    so3_log(&(a.rotation * b.rotation.transpose()))
}
