//! Conversion of 6-D (Euler chart) information matrices to the 12-D
//! flattened space of the chordal error, and back.
//!
//! The 6-D information is interpreted in the local chart of the measurement,
//! `Z' = Z v2t(δ)`, which is the chart the geodesic error lives on. The
//! propagated 12-D covariance has rank at most 6; its small singular values
//! are regularized with `ε` before inversion.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::error_model::{Matrix12, Matrix12x6};
use crate::se3::{flatten, skew, v2t, FlatVector12, Isometry3, PoseVector6};

pub type Matrix6x12 = SMatrix<f64, 6, 12>;

/// How a regularized singular value `σ` of the 12-D covariance is changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonMode {
    /// `σ ← σ + ε`.
    #[default]
    Add,
    /// `σ ← max(σ, ε)`.
    Floor,
}

impl fmt::Display for EpsilonMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpsilonMode::Add => "add",
            EpsilonMode::Floor => "floor",
        })
    }
}

impl FromStr for EpsilonMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" => Ok(EpsilonMode::Add),
            "floor" => Ok(EpsilonMode::Floor),
            other => Err(format!("unknown epsilon mode '{other}'")),
        }
    }
}

/// Which singular values of the 12-D covariance are regularized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonScope {
    /// The six smallest, i.e. the directions the 6-D noise cannot reach.
    #[default]
    Null,
    /// Every singular value below `ε`.
    Below,
}

impl fmt::Display for EpsilonScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpsilonScope::Null => "null",
            EpsilonScope::Below => "below",
        })
    }
}

impl FromStr for EpsilonScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "null" => Ok(EpsilonScope::Null),
            "below" => Ok(EpsilonScope::Below),
            other => Err(format!("unknown epsilon scope '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionMethod {
    #[default]
    FirstOrder,
    /// Symmetric sigma points `±√6 L e_k` pushed through `flatten(Z v2t(δ))`.
    Unscented,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionConfig {
    pub epsilon: f64,
    pub mode: EpsilonMode,
    pub scope: EpsilonScope,
    pub method: ConversionMethod,
}

impl ConversionConfig {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
            mode: EpsilonMode::Add,
            scope: EpsilonScope::Null,
            method: ConversionMethod::FirstOrder,
        }
    }
}

/// `∂ flatten(Z v2t(δ)) / ∂δ` at `δ = 0`.
pub fn flatten_jacobian(z: &Isometry3) -> Matrix12x6 {
    let mut m = Matrix12x6::zeros();
    m.fixed_view_mut::<3, 3>(9, 0).copy_from(&z.rotation);
    for k in 0..3 {
        let d = z.rotation * skew(&Vector3::ith(k, 1.0));
        for col in 0..3 {
            for row in 0..3 {
                m[(3 * col + row, 3 + k)] = d[(row, col)];
            }
        }
    }
    m
}

/// `∂ t2v(Z⁻¹ unflatten(f)) / ∂f` at `f = flatten(Z)`.
///
/// Left inverse of [`flatten_jacobian`]; on off-manifold directions it
/// follows the entry-wise Euler read-out (`θ` from entry (0,2), `φ` from
/// (1,2), `ψ` from (0,1)).
pub fn chart_jacobian(z: &Isometry3) -> Matrix6x12 {
    let rt = z.rotation.transpose();
    let mut n = Matrix6x12::zeros();
    n.fixed_view_mut::<3, 3>(0, 9).copy_from(&rt);
    // dA = Zᵀ dR; dφ = −dA12, dθ = dA02, dψ = −dA01
    let rows: [(usize, usize, f64); 3] = [(1, 2, -1.0), (0, 2, 1.0), (0, 1, -1.0)];
    for (angle, &(a_row, a_col, sign)) in rows.iter().enumerate() {
        // dA[a_row][a_col] = Σ_m Zᵀ[a_row][m] dR[m][a_col]
        for m in 0..3 {
            n[(3 + angle, 3 * a_col + m)] = sign * rt[(a_row, m)];
        }
    }
    n
}

fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

/// Propagated (un-regularized) 12-D covariance of an edge.
pub fn covariance_12(
    z: &Isometry3,
    omega6: &Matrix6<f64>,
    method: ConversionMethod,
) -> Result<Matrix12, Error> {
    let cov6 = omega6.try_inverse().ok_or(Error::SingularInformation)?;
    let cov6 = symmetrize(&cov6);
    match method {
        ConversionMethod::FirstOrder => {
            let m = flatten_jacobian(z);
            Ok(symmetrize(&(m * cov6 * m.transpose())))
        }
        ConversionMethod::Unscented => {
            let chol = cov6.cholesky().ok_or(Error::SingularInformation)?;
            let l = chol.l() * 6f64.sqrt();
            let mut points = Vec::with_capacity(12);
            for k in 0..6 {
                let d: PoseVector6 = l.column(k).into_owned();
                points.push(flatten(&(*z * v2t(&d))));
                points.push(flatten(&(*z * v2t(&(-d)))));
            }
            let mean = points.iter().fold(FlatVector12::zeros(), |acc, p| acc + p) / 12.0;
            let cov = points
                .iter()
                .map(|p| (p - mean) * (p - mean).transpose())
                .fold(Matrix12::zeros(), |acc, c| acc + c)
                / 12.0;
            Ok(symmetrize(&cov))
        }
    }
}

/// Regularized inverse of a symmetric PSD 12-D covariance.
pub fn regularized_information(
    cov12: &Matrix12,
    epsilon: f64,
    mode: EpsilonMode,
    scope: EpsilonScope,
) -> Matrix12 {
    let eig = symmetrize(cov12).symmetric_eigen();
    // rank of the propagated covariance is at most 6
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut touched = [false; 12];
    for &k in &order[..6] {
        touched[k] = true;
    }
    let mut inv_diag = SMatrix::<f64, 12, 1>::zeros();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let sigma = lambda.max(0.0);
        let regularize = match scope {
            EpsilonScope::Null => touched[k],
            EpsilonScope::Below => sigma < epsilon,
        };
        let sigma = if regularize {
            match mode {
                EpsilonMode::Add => sigma + epsilon,
                EpsilonMode::Floor => sigma.max(epsilon),
            }
        } else {
            sigma
        };
        inv_diag[k] = 1.0 / sigma;
    }
    let q = eig.eigenvectors;
    symmetrize(&(q * Matrix12::from_diagonal(&inv_diag) * q.transpose()))
}

pub fn omega_6_to_12(
    z: &Isometry3,
    omega6: &Matrix6<f64>,
    cfg: &ConversionConfig,
) -> Result<Matrix12, Error> {
    if cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
        return Err(Error::InvalidParameter("epsilon must be positive"));
    }
    let cov12 = covariance_12(z, omega6, cfg.method)?;
    Ok(regularized_information(&cov12, cfg.epsilon, cfg.mode, cfg.scope))
}

pub fn omega_12_to_6(z: &Isometry3, omega12: &Matrix12) -> Result<Matrix6<f64>, Error> {
    let eig = symmetrize(omega12).symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let tol = max * 12.0 * f64::EPSILON;
    let inv_diag = eig
        .eigenvalues
        .map(|l| if l > tol { 1.0 / l } else { 0.0 });
    let q = eig.eigenvectors;
    let cov12 = q * Matrix12::from_diagonal(&inv_diag) * q.transpose();
    let n = chart_jacobian(z);
    let cov6 = symmetrize(&(n * cov12 * n.transpose()));
    cov6.try_inverse()
        .map(|m| symmetrize(&m))
        .ok_or(Error::SingularInformation)
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn relative_frobenius<const D: usize>(a: &SMatrix<f64, D, D>, b: &SMatrix<f64, D, D>) -> f64 {
    (a - b).norm() / b.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{rotation_to_euler, unflatten};
    use nalgebra::Matrix3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_iso(rng: &mut ChaCha8Rng) -> Isometry3 {
        v2t(&PoseVector6::from_fn(|i, _| {
            if i < 3 {
                rng.random_range(-5.0..5.0)
            } else {
                rng.random_range(-1.0..1.0)
            }
        }))
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
        let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        a * a.transpose() + Matrix6::identity() * 0.5
    }

    #[test]
    fn flatten_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_iso(&mut rng);
        let m = flatten_jacobian(&z);
        let h = 1e-6;
        for k in 0..6 {
            let mut d = PoseVector6::zeros();
            d[k] = h;
            let fd = (flatten(&(z * v2t(&d))) - flatten(&(z * v2t(&(-d))))) / (2.0 * h);
            assert!((m.column(k) - fd).amax() < 1e-6);
        }
    }

    #[test]
    fn chart_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_iso(&mut rng);
        let n = chart_jacobian(&z);
        let read = |f: &FlatVector12| {
            let a = z.inverse() * unflatten(f);
            let ang = rotation_to_euler(&a.rotation).unwrap();
            PoseVector6::new(a.translation.x, a.translation.y, a.translation.z, ang.x, ang.y, ang.z)
        };
        let f0 = flatten(&z);
        let h = 1e-6;
        for k in 0..12 {
            let mut d = FlatVector12::zeros();
            d[k] = h;
            let fd = (read(&(f0 + d)) - read(&(f0 - d))) / (2.0 * h);
            assert!((n.column(k) - fd).amax() < 1e-6, "column {k}");
        }
        assert_relative_eq!(n * flatten_jacobian(&z), Matrix6::identity(), epsilon = 1e-12);
    }

    #[test]
    fn identity_conversion_is_positive_definite() {
        let cfg = ConversionConfig::default();
        let omega = omega_6_to_12(&Isometry3::identity(), &Matrix6::identity(), &cfg).unwrap();
        assert!((omega - omega.transpose()).amax() < 1e-12);
        let min_eig = omega.symmetric_eigen().eigenvalues.min();
        // largest covariance eigenvalue is 2 (rotation generators have norm √2)
        assert!(min_eig >= 1.0 / 2.0 - 1e-9, "{min_eig}");
    }

    #[test]
    fn propagated_covariance_has_rank_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_iso(&mut rng);
        let cov = covariance_12(&z, &random_spd(&mut rng), ConversionMethod::FirstOrder).unwrap();
        let eig = cov.symmetric_eigen().eigenvalues;
        let max = eig.amax();
        let rank = eig.iter().filter(|v| v.abs() > max * 1e-10).count();
        assert!(rank <= 6);
    }

    #[test]
    fn spherical_translation_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_iso(&mut rng);
        let sigma: f64 = 0.3;
        let omega = Matrix6::identity() / (sigma * sigma);
        let cov = covariance_12(&z, &omega, ConversionMethod::FirstOrder).unwrap();
        // oracle: M from finite differences
        let h = 1e-6;
        let mut m = Matrix12x6::zeros();
        for k in 0..6 {
            let mut d = PoseVector6::zeros();
            d[k] = h;
            m.set_column(
                k,
                &((flatten(&(z * v2t(&d))) - flatten(&(z * v2t(&(-d))))) / (2.0 * h)),
            );
        }
        let oracle = m * omega.try_inverse().unwrap() * m.transpose();
        assert!((cov - oracle).amax() < 1e-9);
        assert_relative_eq!(
            cov.fixed_view::<3, 3>(9, 9).into_owned(),
            Matrix3::identity() * sigma * sigma,
            epsilon = 1e-9
        );
    }

    #[test]
    fn round_trip_recovers_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let id_back = omega_12_to_6(
            &Isometry3::identity(),
            &omega_6_to_12(
                &Isometry3::identity(),
                &Matrix6::identity(),
                &ConversionConfig::with_epsilon(1e-6),
            )
            .unwrap(),
        )
        .unwrap();
        assert!((id_back - Matrix6::identity()).amax() < 1e-3);
        for _ in 0..10 {
            let z = random_iso(&mut rng);
            let omega = random_spd(&mut rng);
            let errs: Vec<f64> = [1e-1, 1e-3, 1e-6]
                .iter()
                .map(|&eps| {
                    let o12 = omega_6_to_12(&z, &omega, &ConversionConfig::with_epsilon(eps)).unwrap();
                    relative_frobenius(&omega_12_to_6(&z, &o12).unwrap(), &omega)
                })
                .collect();
            assert!(errs[2] < 1e-3, "{errs:?}");
            assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
        }
    }

    #[test]
    fn floor_mode_never_exceeds_add_mode_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = random_iso(&mut rng);
        let omega = random_spd(&mut rng) * 100.0;
        let add = omega_6_to_12(&z, &omega, &ConversionConfig::default()).unwrap();
        let floor = omega_6_to_12(
            &z,
            &omega,
            &ConversionConfig {
                mode: EpsilonMode::Floor,
                ..ConversionConfig::default()
            },
        )
        .unwrap();
        // floor keeps smaller variances than add, so carries at least as much information
        let diff = floor - add;
        assert!(diff.symmetric_eigen().eigenvalues.min() > -1e-9);
    }

    #[test]
    fn unscented_close_to_first_order_for_small_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random_iso(&mut rng);
        let omega = Matrix6::identity() * 1e6;
        let fo = covariance_12(&z, &omega, ConversionMethod::FirstOrder).unwrap();
        let ut = covariance_12(&z, &omega, ConversionMethod::Unscented).unwrap();
        assert!((fo - ut).amax() < 1e-9);
    }

    #[test]
    fn conversion_errors() {
        let cfg = ConversionConfig::default();
        assert_eq!(
            omega_6_to_12(&Isometry3::identity(), &Matrix6::zeros(), &cfg),
            Err(Error::SingularInformation)
        );
        assert_eq!(
            omega_6_to_12(&Isometry3::identity(), &Matrix6::identity(), &ConversionConfig::with_epsilon(0.0)),
            Err(Error::InvalidParameter("epsilon must be positive"))
        );
    }

    #[test]
    fn local_chart_is_regular_at_pitch_ninety() {
        // the local chart has no singularity at the measurement itself
        let locked = Isometry3::new(crate::se3::rot_y(std::f64::consts::FRAC_PI_2), Vector3::zeros());
        let omega = Matrix6::from_diagonal(&PoseVector6::new(4.0, 5.0, 6.0, 7.0, 8.0, 9.0));
        let o12 = omega_6_to_12(&locked, &omega, &ConversionConfig::with_epsilon(1e-6)).unwrap();
        assert!(relative_frobenius(&omega_12_to_6(&locked, &o12).unwrap(), &omega) < 1e-3);
    }

    #[test]
    fn null_scope_preserves_range_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for eps in [1e-3, 0.1, 10.0] {
            let z = random_iso(&mut rng);
            let omega = random_spd(&mut rng) * 1e4;
            let o12 = omega_6_to_12(&z, &omega, &ConversionConfig::with_epsilon(eps)).unwrap();
            let m = flatten_jacobian(&z);
            let pulled = m.transpose() * o12 * m;
            assert!(relative_frobenius(&pulled, &omega) < 1e-8, "eps {eps}");
        }
    }

    #[test]
    fn below_scope_raises_small_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let z = random_iso(&mut rng);
        // variances 1e-4 and 1e-2, all below ε = 0.1
        let omega = Matrix6::from_diagonal(&PoseVector6::new(1e2, 1e2, 1e2, 1e4, 1e4, 1e4));
        let cfg = ConversionConfig {
            scope: EpsilonScope::Below,
            mode: EpsilonMode::Floor,
            ..ConversionConfig::default()
        };
        let o12 = omega_6_to_12(&z, &omega, &cfg).unwrap();
        let eig = o12.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|l| (l - 10.0).abs() < 1e-6), "{eig:?}");
        let null = omega_6_to_12(&z, &omega, &ConversionConfig::default()).unwrap();
        assert!(null.symmetric_eigen().eigenvalues.max() > 1e3);
    }

    #[test]
    fn scope_parsing() {
        assert_eq!("null".parse::<EpsilonScope>().unwrap(), EpsilonScope::Null);
        assert_eq!("below".parse::<EpsilonScope>().unwrap(), EpsilonScope::Below);
        assert!("all".parse::<EpsilonScope>().is_err());
        assert_eq!(EpsilonScope::Below.to_string(), "below");
    }
}
