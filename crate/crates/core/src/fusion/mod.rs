//! Sliding-window pose graph fusing odometry increments with the 2D-3D
//! matches of localized frames.
//!
//! Relative terms use `r = Log(T_{j+1}⁻¹ ∘ T_j ∘ ΔT)`, zero when
//! `ΔT = T_j⁻¹ ∘ T_{j+1}`. Match terms use the tangent-plane bearing residual.
//! The oldest node in the window is held fixed.

mod odometry;
mod residual;
mod window;

pub use odometry::{
    compose_with_covariance, read_odometry, read_trajectory, write_odometry, write_trajectory, OdometryBuffer,
    OdometryIncrement, OdometryRecord, TrajectoryRecord,
};
pub use residual::{match_residual, relative_jacobians, relative_residual};
pub use window::{fuse, optimize_window, window_cost, FusionWindow, Measurement, OptimizeReport};

use nalgebra::{Matrix2, Matrix6};

use crate::geometry::{GeometryError, PointObservation, Pose};

pub const DEFAULT_WINDOW_SIZE: usize = 10;
pub const DEFAULT_MATCH_SIGMA_DEG: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("invalid fusion configuration: {0}")]
    InvalidConfig(String),
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("timestamp {got} does not follow {previous}")]
    TimestampRegression { previous: f64, got: f64 },
    #[error("odometry links nodes {from} and {to}, which are not consecutive")]
    NonConsecutive { from: u64, to: u64 },
    #[error("node {0} has no odometry link to its predecessor")]
    MissingOdometry(u64),
    #[error("normal equations are not positive definite: {0}")]
    Indefinite(String),
    #[error("window is empty")]
    EmptyWindow,
    #[error("no odometry covers [{from}, {to}]")]
    OdometryGap { from: f64, to: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A localized frame in the window.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseNode {
    pub node_id: u64,
    pub timestamp: f64,
    /// `world_from_rig`.
    pub pose: Pose,
    pub matches: Vec<PointObservation>,
}

/// Odometry between consecutive nodes `from` and `from + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeConstraint {
    pub from: u64,
    pub to: u64,
    /// `T_from⁻¹ ∘ T_to` as measured.
    pub delta: Pose,
    /// Tangent covariance, rotation block first.
    pub sigma0: Matrix6<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub window_size: usize,
    /// Covariance of the 2-D match residual, rad².
    pub sigma1: Matrix2<f64>,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this.
    pub cost_tolerance: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let s = DEFAULT_MATCH_SIGMA_DEG.to_radians();
        Self {
            window_size: DEFAULT_WINDOW_SIZE,
            sigma1: Matrix2::identity() * (s * s),
            max_iterations: 50,
            cost_tolerance: 1e-10,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.window_size < 2 {
            return Err(FusionError::InvalidConfig(format!("window size {} must be at least 2", self.window_size)));
        }
        if self.max_iterations == 0 {
            return Err(FusionError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.cost_tolerance >= 0.0) {
            return Err(FusionError::InvalidConfig("cost_tolerance must be non-negative".into()));
        }
        spd_information(&self.sigma1).map(|_| ())
    }
}

/// Whitening factor `W` with `WᵀW = Σ⁻¹`.
pub(crate) fn spd_information<const D: usize>(
    sigma: &nalgebra::SMatrix<f64, D, D>,
) -> Result<nalgebra::SMatrix<f64, D, D>, FusionError>
where
    nalgebra::Const<D>: nalgebra::DimMin<nalgebra::Const<D>, Output = nalgebra::Const<D>>,
{
    let scale = sigma.abs().max().max(f64::MIN_POSITIVE);
    if !sigma.iter().all(|v| v.is_finite()) || (sigma - sigma.transpose()).abs().max() > 1e-9 * scale {
        return Err(FusionError::NotPositiveDefinite);
    }
    let chol = sigma.cholesky().ok_or(FusionError::NotPositiveDefinite)?;
    // Σ = LLᵀ ⇒ Σ⁻¹ = L⁻ᵀL⁻¹, so W = L⁻¹.
    let l_inv = chol.l().try_inverse().ok_or(FusionError::NotPositiveDefinite)?;
    if !l_inv.iter().all(|v| v.is_finite()) {
        return Err(FusionError::NotPositiveDefinite);
    }
    Ok(l_inv)
}
