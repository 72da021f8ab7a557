//! Pose-to-pose error functions and their Jacobians.
//!
//! * geodesic: `e = t2v(Z⁻¹ Xi⁻¹ Xj)`, 6-D, Jacobians by central differences.
//! * chordal: `e = flatten(Xi⁻¹ Xj) − flatten(Z)`, 12-D, closed-form Jacobians
//!   with `Ji = −Jj`.
//!
//! Both use the left-multiplicative increment `X ⊞ dx = v2t(dx) X`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::se3::{
    boxplus, flatten, skew, t2v, v2t, FlatVector12, Isometry3, PoseVector6,
};

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Matrix12x6 = SMatrix<f64, 12, 6>;

/// Central-difference step for the geodesic Jacobians.
pub const GEODESIC_JACOBIAN_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorModel {
    Geodesic,
    Chordal,
}

impl ErrorModel {
    pub fn error_dim(self) -> usize {
        match self {
            ErrorModel::Geodesic => 6,
            ErrorModel::Chordal => 12,
        }
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorModel::Geodesic => "geodesic",
            ErrorModel::Chordal => "chordal",
        })
    }
}

impl FromStr for ErrorModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geodesic" => Ok(ErrorModel::Geodesic),
            "chordal" => Ok(ErrorModel::Chordal),
            other => Err(format!("unknown error model '{other}'")),
        }
    }
}

/// Error, Jacobian blocks and the information matrix used for one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization<const D: usize> {
    pub error: SVector<f64, D>,
    pub jacobian_i: SMatrix<f64, D, 6>,
    pub jacobian_j: SMatrix<f64, D, 6>,
    pub information: SMatrix<f64, D, D>,
}

pub fn error_geodesic(xi: &Isometry3, xj: &Isometry3, z: &Isometry3) -> Result<PoseVector6, Error> {
    t2v(&(z.inverse() * xi.inverse() * *xj))
}

pub fn jacobians_geodesic(
    xi: &Isometry3,
    xj: &Isometry3,
    z: &Isometry3,
) -> Result<(Matrix6<f64>, Matrix6<f64>), Error> {
    jacobians_geodesic_with_step(xi, xj, z, GEODESIC_JACOBIAN_STEP)
}

pub fn jacobians_geodesic_with_step(
    xi: &Isometry3,
    xj: &Isometry3,
    z: &Isometry3,
    step: f64,
) -> Result<(Matrix6<f64>, Matrix6<f64>), Error> {
    let mut ji = Matrix6::zeros();
    let mut jj = Matrix6::zeros();
    for k in 0..6 {
        let mut d = PoseVector6::zeros();
        d[k] = step;
        let plus = error_geodesic(&boxplus(xi, &d), xj, z)?;
        let minus = error_geodesic(&boxplus(xi, &(-d)), xj, z)?;
        ji.set_column(k, &((plus - minus) / (2.0 * step)));
        let plus = error_geodesic(xi, &boxplus(xj, &d), z)?;
        let minus = error_geodesic(xi, &boxplus(xj, &(-d)), z)?;
        jj.set_column(k, &((plus - minus) / (2.0 * step)));
    }
    Ok((ji, jj))
}

/// Jacobian of the geodesic error w.r.t. a local perturbation of the
/// measurement, `Z' = Z v2t(δ)`, sign-normalised so it is the identity when
/// prediction and measurement coincide.
pub fn measurement_jacobian_geodesic(
    xi: &Isometry3,
    xj: &Isometry3,
    z: &Isometry3,
) -> Result<Matrix6<f64>, Error> {
    let step = GEODESIC_JACOBIAN_STEP;
    let prediction = xi.inverse() * *xj;
    let mut jz = Matrix6::zeros();
    for k in 0..6 {
        let mut d = PoseVector6::zeros();
        d[k] = step;
        let plus = error_geodesic(&Isometry3::identity(), &prediction, &(*z * v2t(&d)))?;
        let minus = error_geodesic(&Isometry3::identity(), &prediction, &(*z * v2t(&(-d))))?;
        jz.set_column(k, &(-(plus - minus) / (2.0 * step)));
    }
    Ok(jz)
}

/// Information of the error on the measurement chart, `(J_Z Ω⁻¹ J_Zᵀ)⁻¹`.
/// With `remap == false` the input is returned unchanged.
pub fn remap_omega_geodesic(
    xi: &Isometry3,
    xj: &Isometry3,
    z: &Isometry3,
    omega: &Matrix6<f64>,
    remap: bool,
) -> Result<Matrix6<f64>, Error> {
    if !remap {
        return Ok(*omega);
    }
    let cov = omega.try_inverse().ok_or(Error::SingularInformation)?;
    let jz = measurement_jacobian_geodesic(xi, xj, z)?;
    let remapped = (jz * cov * jz.transpose())
        .try_inverse()
        .ok_or(Error::SingularInformation)?;
    Ok((remapped + remapped.transpose()) * 0.5)
}

pub fn linearize_geodesic(
    xi: &Isometry3,
    xj: &Isometry3,
    z: &Isometry3,
    omega: &Matrix6<f64>,
    remap: bool,
) -> Result<Linearization<6>, Error> {
    let error = error_geodesic(xi, xj, z)?;
    let (jacobian_i, jacobian_j) = jacobians_geodesic(xi, xj, z)?;
    let information = remap_omega_geodesic(xi, xj, z, omega, remap)?;
    Ok(Linearization {
        error,
        jacobian_i,
        jacobian_j,
        information,
    })
}

pub fn error_chordal(xi: &Isometry3, xj: &Isometry3, z: &Isometry3) -> FlatVector12 {
    flatten(&(xi.inverse() * *xj)) - flatten(z)
}

/// Closed-form chordal Jacobians `(Ji, Jj)` with `Ji = −Jj`.
///
/// Translation rows: `[Riᵀ | −Riᵀ ⌊tj⌋]`. Rotation rows: the flattened
/// columns of `Riᵀ G_k Rj` for the generators `G_k = ⌊e_k⌋` fill the angular
/// columns; the translational columns are zero.
pub fn jacobian_chordal(xi: &Isometry3, xj: &Isometry3) -> (Matrix12x6, Matrix12x6) {
    let ri_t = xi.rotation.transpose();
    let mut jj = Matrix12x6::zeros();
    for k in 0..3 {
        let mut axis = nalgebra::Vector3::zeros();
        axis[k] = 1.0;
        let d = ri_t * skew(&axis) * xj.rotation;
        for col in 0..3 {
            for row in 0..3 {
                jj[(3 * col + row, 3 + k)] = d[(row, col)];
            }
        }
    }
    jj.fixed_view_mut::<3, 3>(9, 0).copy_from(&ri_t);
    jj.fixed_view_mut::<3, 3>(9, 3)
        .copy_from(&(-(ri_t * skew(&xj.translation))));
    (-jj, jj)
}

pub fn linearize_chordal(
    xi: &Isometry3,
    xj: &Isometry3,
    z: &Isometry3,
    omega: &Matrix12,
) -> Linearization<12> {
    let (jacobian_i, jacobian_j) = jacobian_chordal(xi, xj);
    Linearization {
        error: error_chordal(xi, xj, z),
        jacobian_i,
        jacobian_j,
        information: *omega,
    }
}

/// Robust reweighting of the per-edge squared Mahalanobis norm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RobustKernel {
    #[default]
    None,
    /// `ρ(χ) = k² ln(1 + χ/k²)`.
    Cauchy { width: f64 },
}

impl RobustKernel {
    pub const DEFAULT_CAUCHY_WIDTH: f64 = 1.0;

    pub fn cauchy(width: f64) -> Result<Self, String> {
        if width.is_finite() && width > 0.0 {
            Ok(RobustKernel::Cauchy { width })
        } else {
            Err(format!("kernel width must be positive, got {width}"))
        }
    }

    /// Returns `(ρ(chi), ρ'(chi))`.
    pub fn apply(&self, chi: f64) -> (f64, f64) {
        match *self {
            RobustKernel::None => (chi, 1.0),
            RobustKernel::Cauchy { width } => {
                let k2 = width * width;
                let ratio = chi / k2;
                (k2 * ratio.ln_1p(), 1.0 / (1.0 + ratio))
            }
        }
    }
}

pub fn apply_robust_kernel(chi: f64, kernel: RobustKernel) -> (f64, f64) {
    kernel.apply(chi)
}

impl fmt::Display for RobustKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobustKernel::None => f.write_str("none"),
            RobustKernel::Cauchy { width } => write!(f, "cauchy:{width}"),
        }
    }
}

impl FromStr for RobustKernel {
    type Err = String;

    /// `none`, `cauchy` or `cauchy:<width>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "none" => Ok(RobustKernel::None),
            None if s == "cauchy" => RobustKernel::cauchy(Self::DEFAULT_CAUCHY_WIDTH),
            Some(("cauchy", width)) => {
                let width = width
                    .parse::<f64>()
                    .map_err(|e| format!("invalid kernel width '{width}': {e}"))?;
                RobustKernel::cauchy(width)
            }
            _ => Err(format!("unknown kernel '{s}'")),
        }
    }
}
