//! Poses, rigs, bearing residuals and the pose solvers built on them.

mod gp3p;
pub mod poly;
mod pose;
mod refine;
mod residual;
mod rig;

pub use gp3p::{gp3p_solve, RayCorrespondence, MIN_TRIANGLE_AREA};
pub use pose::{right_jacobian_inv, skew, so3_exp, so3_log, Pose, PoseRecord};
pub use refine::{refine_pose, robust_cost, RefineOptions, Refinement};
pub use residual::{
    angle_between, angular_error, bearing_residual, camera_angular_error, observation_residual, tangent_basis,
    PointObservation, ProjectionCache, MIN_POINT_DISTANCE,
};
pub use rig::{BearingFeature, CameraRecord, CameraRig, RigCamera, RigRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("point coincides with the camera center")]
    DegeneratePoint,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("invalid bearing: {0}")]
    InvalidBearing(&'static str),
    #[error("unknown camera id {0}")]
    UnknownCamera(u32),
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientObservations { needed: usize, got: usize },
}
