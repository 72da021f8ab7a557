//! Rigid 3D transforms and the Euler-angle chart used by both error models.
//!
//! An [`Isometry3`] stores a rotation matrix and a translation. The minimal
//! chart is `[x y z phi theta psi]` with the rotation composed as
//! `R_x(phi) * R_y(theta) * R_z(psi)`. Increments are applied on the left:
//! `X ⊞ dx = v2t(dx) * X`.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, SVector, Vector3, Vector6};

use crate::error::Error;

/// Minimal 6-D pose parametrization `[x y z phi theta psi]` (meters, radians).
pub type PoseVector6 = Vector6<f64>;

/// Flattened isometry `[r1 r2 r3 t]` where `r_k` is the k-th rotation column.
pub type FlatVector12 = SVector<f64, 12>;

/// Tolerance on `|R[0][2]|` below 1 for Euler extraction.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-9;

/// Tolerance used when validating rotation matrices.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-9;

/// Rigid transform with an explicit rotation matrix and translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isometry3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Isometry3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Isometry3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds an isometry without checking the rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds an isometry, rejecting matrices that are not proper rotations.
    pub fn try_new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, Error> {
        let iso = Self::new(rotation, translation);
        if !iso.is_valid(ORTHONORMALITY_TOLERANCE) {
            return Err(Error::InvalidRotation);
        }
        Ok(iso)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// `RᵀR = I` and `det R = 1`, both within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return false;
        }
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.amax() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Projects the rotation back onto SO(3) (polar decomposition).
    pub fn orthonormalized(&self) -> Self {
        Self::new(nearest_rotation(&self.rotation), self.translation)
    }
}

impl Mul for Isometry3 {
    type Output = Isometry3;

    fn mul(self, rhs: Isometry3) -> Isometry3 {
        Isometry3::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul<&Isometry3> for &Isometry3 {
    type Output = Isometry3;

    fn mul(self, rhs: &Isometry3) -> Isometry3 {
        *self * *rhs
    }
}

/// Closest rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation `R_x(phi) R_y(theta) R_z(psi)` written out entry by entry.
pub fn euler_to_rotation(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let m = cf * sp + sf * cp * st;
    let n = cf * cp - sf * st * sp;
    let p = sf * sp - cf * cp * st;
    let q = sf * cp + cf * st * sp;
    Matrix3::new(
        ct * cp,
        -ct * sp,
        st,
        m,
        n,
        -ct * sf,
        p,
        q,
        ct * cf,
    )
}

/// Reads Euler angles from the entries of a 3x3 matrix without validating it.
///
/// Used on proper rotations by [`t2v`] and on off-manifold matrices when
/// linearizing the chart for covariance pull-back.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Result<Vector3<f64>, Error> {
    let s = r[(0, 2)];
    if !s.is_finite() || s.abs() >= 1.0 - GIMBAL_LOCK_TOLERANCE {
        return Err(Error::GimbalLock { sin_pitch: s });
    }
    let theta = s.asin();
    let phi = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let psi = (-r[(0, 1)]).atan2(r[(0, 0)]);
    Ok(Vector3::new(phi, theta, psi))
}

/// Chart vector to isometry.
pub fn v2t(v: &PoseVector6) -> Isometry3 {
    Isometry3::new(
        euler_to_rotation(v[3], v[4], v[5]),
        Vector3::new(v[0], v[1], v[2]),
    )
}

/// Isometry to chart vector. Fails near `theta = ±π/2`.
pub fn t2v(t: &Isometry3) -> Result<PoseVector6, Error> {
    let angles = rotation_to_euler(&t.rotation)?;
    Ok(PoseVector6::new(
        t.translation.x,
        t.translation.y,
        t.translation.z,
        angles.x,
        angles.y,
        angles.z,
    ))
}

pub fn flatten(t: &Isometry3) -> FlatVector12 {
    let mut f = FlatVector12::zeros();
    for col in 0..3 {
        for row in 0..3 {
            f[3 * col + row] = t.rotation[(row, col)];
        }
    }
    f.fixed_rows_mut::<3>(9).copy_from(&t.translation);
    f
}

/// Inverse reshaping of [`flatten`]. The rotation block is not projected.
pub fn unflatten(f: &FlatVector12) -> Isometry3 {
    let mut r = Matrix3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            r[(row, col)] = f[3 * col + row];
        }
    }
    Isometry3::new(r, f.fixed_rows::<3>(9).into_owned())
}

pub fn boxplus(x: &Isometry3, dx: &PoseVector6) -> Isometry3 {
    v2t(dx) * *x
}

pub fn boxminus_geodesic(xa: &Isometry3, xb: &Isometry3) -> Result<PoseVector6, Error> {
    t2v(&(xb.inverse() * *xa))
}

pub fn boxminus_chordal(xa: &Isometry3, xb: &Isometry3) -> FlatVector12 {
    flatten(xa) - flatten(xb)
}

/// Cross-product matrix: `skew(v) * w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
