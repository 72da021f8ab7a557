use thiserror::Error;

/// Failures of the pose math and information-matrix conversions.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum Error {
    /// Euler extraction is undefined at `theta = ±π/2`.
    #[error("gimbal lock: sin(theta) = {sin_pitch}")]
    GimbalLock { sin_pitch: f64 },
    #[error("matrix is not a proper rotation")]
    InvalidRotation,
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
