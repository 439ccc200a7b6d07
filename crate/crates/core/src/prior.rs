//! Candidate pre-filtering with an uncertain pose prior.
//!
//! A feature's viewing cone is widened by twice the heading uncertainty and
//! every candidate point is inflated to a sphere of the position uncertainty;
//! candidates whose sphere misses the cone cannot be inliers.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraRig, Pose};

pub const DEFAULT_POSITION_RADIUS: f64 = 50.0;
pub const DEFAULT_HEADING_HALF_ANGLE_DEG: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum PriorError {
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("unknown camera id {0}")]
    UnknownCamera(u32),
    #[error("prior file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Approximate world-from-rig pose with bounded position and heading error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosePrior {
    pub pose: Pose,
    pub position_radius: f64,
    pub heading_half_angle: f64,
}

impl PosePrior {
    pub fn new(pose: Pose, position_radius: f64, heading_half_angle: f64) -> Result<Self, PriorError> {
        if !(position_radius >= 0.0) || !position_radius.is_finite() {
            return Err(PriorError::OutOfRange(format!("position radius {position_radius} must be ≥ 0")));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&heading_half_angle) {
            return Err(PriorError::OutOfRange(format!(
                "heading half angle {heading_half_angle} rad must be in [0, π/2)"
            )));
        }
        Ok(Self {
            pose,
            position_radius,
            heading_half_angle,
        })
    }

    /// Prior with the default 50 m / 10° uncertainty.
    pub fn with_defaults(pose: Pose) -> Self {
        Self::new(pose, DEFAULT_POSITION_RADIUS, DEFAULT_HEADING_HALF_ANGLE_DEG.to_radians()).expect("defaults are valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    /// Inlier cone half-angle before widening, radians.
    pub base_inlier_angle: f64,
}

impl FilterConfig {
    pub fn new(base_inlier_angle: f64) -> Result<Self, PriorError> {
        if !(base_inlier_angle > 0.0) || base_inlier_angle >= std::f64::consts::FRAC_PI_2 {
            return Err(PriorError::OutOfRange(format!(
                "base inlier angle {base_inlier_angle} rad must be in (0, π/2)"
            )));
        }
        Ok(Self { base_inlier_angle })
    }
}

/// `α′ = α + 2θ`, required to stay below π/2.
pub fn expanded_cone_angle(alpha: f64, theta: f64) -> Result<f64, PriorError> {
    let widened = alpha + 2.0 * theta;
    if !(alpha >= 0.0 && theta >= 0.0 && widened < std::f64::consts::FRAC_PI_2) {
        return Err(PriorError::OutOfRange(format!("α + 2θ = {widened} rad must be below π/2")));
    }
    Ok(widened)
}

/// Euclidean distance from `x` to the solid one-sided cone.
///
/// In the plane spanned by the axis and `x`, with `h` the axial and `ρ` the
/// radial coordinate: `x` is inside when `ρ·cos φ ≤ h·sin φ`, the apex is the
/// nearest point when `h·cos φ + ρ·sin φ ≤ 0`, and otherwise the nearest point
/// lies on the lateral surface at distance `ρ·cos φ − h·sin φ`.
pub fn distance_to_cone(apex: &Vector3<f64>, axis: &Vector3<f64>, half_angle: f64, x: &Vector3<f64>) -> f64 {
    let v = x - apex;
    let h = v.dot(axis);
    let rho = (v - axis * h).norm();
    let (s, c) = half_angle.sin_cos();
    if rho * c - h * s <= 0.0 {
        0.0
    } else if h * c + rho * s <= 0.0 {
        v.norm()
    } else {
        rho * c - h * s
    }
}

pub fn sphere_intersects_cone(apex: &Vector3<f64>, axis: &Vector3<f64>, half_angle: f64, center: &Vector3<f64>, radius: f64) -> bool {
    distance_to_cone(apex, axis, half_angle, center) <= radius
}

/// Per-frame precomputation of the prior cones for every rig camera.
#[derive(Clone, Debug)]
pub struct PriorGate {
    half_angle: f64,
    cameras: Vec<GateCamera>,
}

#[derive(Clone, Debug)]
struct GateCamera {
    camera_id: u32,
    apex: Vector3<f64>,
    world_from_camera: Matrix3<f64>,
    radius: f64,
}

impl PriorGate {
    pub fn new(prior: &PosePrior, cfg: &FilterConfig, rig: &CameraRig) -> Result<Self, PriorError> {
        let half_angle = expanded_cone_angle(cfg.base_inlier_angle, prior.heading_half_angle)?;
        let theta = prior.heading_half_angle;
        let cameras = rig
            .cameras()
            .iter()
            .map(|cam| {
                let offset = cam.rig_from_camera.translation;
                let world = prior.pose.compose(&cam.rig_from_camera);
                GateCamera {
                    camera_id: cam.camera_id,
                    apex: world.translation,
                    world_from_camera: world.rotation_matrix(),
                    // a rotation by at most θ moves the camera center along a chord
                    radius: prior.position_radius + 2.0 * offset.norm() * (0.5 * theta).sin(),
                }
            })
            .collect();
        Ok(Self { half_angle, cameras })
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn camera_index(&self, camera_id: u32) -> Result<usize, PriorError> {
        self.cameras
            .iter()
            .position(|c| c.camera_id == camera_id)
            .ok_or(PriorError::UnknownCamera(camera_id))
    }

    /// Cone of one feature, ready for repeated point tests.
    pub fn cone(&self, camera_index: usize, bearing: &Vector3<f64>) -> FeatureCone {
        let cam = &self.cameras[camera_index];
        FeatureCone {
            apex: cam.apex,
            axis: (cam.world_from_camera * bearing).normalize(),
            half_angle: self.half_angle,
            radius: cam.radius,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FeatureCone {
    pub apex: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub half_angle: f64,
    pub radius: f64,
}

impl FeatureCone {
    #[inline]
    pub fn keeps(&self, point: &Vector3<f64>) -> bool {
        sphere_intersects_cone(&self.apex, &self.axis, self.half_angle, point, self.radius)
    }
}

/// Keeps the candidates whose uncertainty sphere meets the widened cone of
/// the feature, in input order.
pub fn filter_candidates(
    prior: &PosePrior,
    cfg: &FilterConfig,
    rig: &CameraRig,
    camera_id: u32,
    bearing: &Vector3<f64>,
    candidates: &[(u64, Vector3<f64>)],
) -> Result<Vec<(u64, Vector3<f64>)>, PriorError> {
    let gate = PriorGate::new(prior, cfg, rig)?;
    let cone = gate.cone(gate.camera_index(camera_id)?, bearing);
    Ok(candidates.iter().filter(|(_, p)| cone.keeps(p)).copied().collect())
}

/// One entry of a prior file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorRecord {
    pub frame_id: u64,
    pub position: [f64; 3],
    pub heading_quaternion: [f64; 4],
    pub position_radius_m: f64,
    pub heading_half_angle_deg: f64,
}

impl PriorRecord {
    pub fn from_prior(frame_id: u64, prior: &PosePrior) -> Self {
        let q = prior.pose.rotation.quaternion();
        Self {
            frame_id,
            position: prior.pose.translation.into(),
            heading_quaternion: [q.w, q.i, q.j, q.k],
            position_radius_m: prior.position_radius,
            heading_half_angle_deg: prior.heading_half_angle.to_degrees(),
        }
    }

    pub fn to_prior(&self) -> Result<PosePrior, PriorError> {
        let [w, x, y, z] = self.heading_quaternion;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if !(q.norm() > 0.0) || !q.norm().is_finite() || self.position.iter().any(|v| !v.is_finite()) {
            return Err(PriorError::Parse(format!("frame {}: invalid pose", self.frame_id)));
        }
        let pose = Pose::new(UnitQuaternion::from_quaternion(q), Vector3::from(self.position));
        PosePrior::new(pose, self.position_radius_m, self.heading_half_angle_deg.to_radians())
    }
}

pub fn parse_priors(json: &str) -> Result<BTreeMap<u64, PosePrior>, PriorError> {
    let records: Vec<PriorRecord> = serde_json::from_str(json).map_err(|e| PriorError::Parse(e.to_string()))?;
    let mut out = BTreeMap::new();
    for r in records {
        if out.insert(r.frame_id, r.to_prior()?).is_some() {
            return Err(PriorError::Parse(format!("duplicate frame id {}", r.frame_id)));
        }
    }
    Ok(out)
}

pub fn load_priors(path: impl AsRef<Path>) -> Result<BTreeMap<u64, PosePrior>, PriorError> {
    parse_priors(&std::fs::read_to_string(path)?)
}

pub fn priors_to_json(priors: &BTreeMap<u64, PosePrior>) -> String {
    let records: Vec<PriorRecord> = priors.iter().map(|(id, p)| PriorRecord::from_prior(*id, p)).collect();
    serde_json::to_string_pretty(&records).expect("priors serialize")
}
