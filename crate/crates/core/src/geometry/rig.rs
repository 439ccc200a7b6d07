use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Pose, PoseRecord};

/// One camera of a rigid rig. Camera frame: z forward, x right, y down.
#[derive(Clone, Debug, PartialEq)]
pub struct RigCamera {
    pub camera_id: u32,
    pub rig_from_camera: Pose,
    pub fov_half_angle: f64,
}

impl RigCamera {
    /// Optical axis expressed in the rig frame.
    pub fn axis_in_rig(&self) -> Vector3<f64> {
        self.rig_from_camera.rotation * Vector3::z()
    }
}

/// Rigid multi-camera system with known extrinsics.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    cameras: Vec<RigCamera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<RigCamera>) -> Result<Self, GeometryError> {
        if cameras.is_empty() {
            return Err(GeometryError::InvalidRig("rig has no cameras".into()));
        }
        for (i, cam) in cameras.iter().enumerate() {
            if !(cam.fov_half_angle > 0.0 && cam.fov_half_angle < PI) {
                return Err(GeometryError::InvalidRig(format!(
                    "camera {} has fov_half_angle {} outside (0, pi)",
                    cam.camera_id, cam.fov_half_angle
                )));
            }
            if cameras[..i].iter().any(|c| c.camera_id == cam.camera_id) {
                return Err(GeometryError::InvalidRig(format!(
                    "duplicate camera_id {}",
                    cam.camera_id
                )));
            }
        }
        Ok(Self { cameras })
    }

    /// `count` horizontal cameras evenly spaced in yaw, each displaced
    /// `lever_arm` meters from the rig origin along its optical axis.
    /// Rig frame: x forward, y left, z up.
    pub fn ring(count: usize, fov_half_angle: f64, lever_arm: f64) -> Result<Self, GeometryError> {
        let cameras = (0..count)
            .map(|i| {
                let yaw = 2.0 * PI * i as f64 / count as f64;
                let forward = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
                let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
                let down = Vector3::new(0.0, 0.0, -1.0);
                let m = Matrix3::from_columns(&[right, down, forward]);
                let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
                RigCamera {
                    camera_id: i as u32,
                    rig_from_camera: Pose::new(rot, forward * lever_arm),
                    fov_half_angle,
                }
            })
            .collect();
        Self::new(cameras)
    }

    /// Four cameras at 90° spacing with 50° half field of view.
    pub fn default_four() -> Self {
        Self::ring(4, 50f64.to_radians(), 0.5).expect("valid default rig")
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, camera_id: u32) -> Result<&RigCamera, GeometryError> {
        self.cameras
            .iter()
            .find(|c| c.camera_id == camera_id)
            .ok_or(GeometryError::UnknownCamera(camera_id))
    }

    pub fn index_of(&self, camera_id: u32) -> Option<usize> {
        self.cameras.iter().position(|c| c.camera_id == camera_id)
    }

    pub fn to_record(&self) -> RigRecord {
        RigRecord {
            cameras: self
                .cameras
                .iter()
                .map(|c| CameraRecord {
                    camera_id: c.camera_id,
                    rig_from_camera: PoseRecord::from(&c.rig_from_camera),
                    fov_half_angle: c.fov_half_angle,
                })
                .collect(),
        }
    }

    pub fn from_record(r: &RigRecord) -> Result<Self, GeometryError> {
        Self::new(
            r.cameras
                .iter()
                .map(|c| RigCamera {
                    camera_id: c.camera_id,
                    rig_from_camera: c.rig_from_camera.into(),
                    fov_half_angle: c.fov_half_angle,
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub camera_id: u32,
    pub rig_from_camera: PoseRecord,
    pub fov_half_angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigRecord {
    pub cameras: Vec<CameraRecord>,
}

/// Unit bearing of a feature in its camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BearingFeature {
    pub camera_id: u32,
    pub bearing: Vector3<f64>,
    pub descriptor_id: usize,
}

impl BearingFeature {
    pub fn new(camera_id: u32, bearing: Vector3<f64>, descriptor_id: usize) -> Result<Self, GeometryError> {
        if !((bearing.norm() - 1.0).abs() <= 1e-9) {
            return Err(GeometryError::InvalidBearing("bearing is not unit norm"));
        }
        if bearing.z <= 0.0 {
            return Err(GeometryError::InvalidBearing("bearing points behind the camera"));
        }
        Ok(Self {
            camera_id,
            bearing,
            descriptor_id,
        })
    }
}
