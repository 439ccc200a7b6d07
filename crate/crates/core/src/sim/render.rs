use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{random_unit_descriptor, Scene, SimError};
use crate::geometry::{tangent_basis, BearingFeature, CameraRig, Pose};
use crate::map::DescriptorBlock;
use crate::matcher::{FrameCamera, QueryFrame};

/// Ground truth of one rendered feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLabel {
    pub camera_id: u32,
    /// Index within the camera.
    pub feature: u32,
    /// Generating point; `None` for outlier features.
    pub point_id: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub frame: QueryFrame,
    pub labels: Vec<FeatureLabel>,
    /// Noise-free bearing of every inlier feature, indexed like `labels`.
    pub clean_bearings: Vec<Vector3<f64>>,
}

/// Unit direction within `half_angle` of +z, uniform over the cap.
fn random_in_cone(half_angle: f64, rng: &mut impl Rng) -> Vector3<f64> {
    let cos_t = rng.random_range(half_angle.cos()..1.0);
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    Vector3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

/// Bearing rotated by a random tangent perturbation whose RMS angle is
/// `sigma` radians.
fn jitter(b: &Vector3<f64>, sigma: f64, rng: &mut impl Rng) -> Vector3<f64> {
    if sigma == 0.0 {
        return *b;
    }
    let (e1, e2) = tangent_basis(b);
    let s = sigma / 2f64.sqrt();
    let d = e1 * (s * rng.sample::<f64, _>(StandardNormal)) + e2 * (s * rng.sample::<f64, _>(StandardNormal));
    let angle = d.norm();
    if angle == 0.0 {
        return *b;
    }
    (b * angle.cos() + d / angle * angle.sin()).normalize()
}

/// Renders the scene from `world_from_rig`. Inlier features are points within
/// a camera's field of view and range, with jittered bearings and noisy
/// descriptors; outliers have random bearings and descriptors. Features are
/// shuffled within each camera. The RNG stream depends on `seed` and
/// `frame_id` only.
pub fn render_frame(rig: &CameraRig, pose: &Pose, scene: &Scene, frame_id: u64, seed: u64) -> Result<RenderedFrame, SimError> {
    let spec = &scene.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ frame_id.wrapping_add(0x51).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let sigma_b = spec.bearing_noise_deg.to_radians();
    let f = spec.outlier_fraction;
    let mut cameras = Vec::with_capacity(rig.len());
    let mut descriptors = DescriptorBlock::new(spec.descriptor_dim);
    let mut labels = Vec::new();
    let mut clean_bearings = Vec::new();

    for cam in rig.cameras() {
        let world_cam = pose.compose(&cam.rig_from_camera);
        let r_t = world_cam.rotation_matrix().transpose();
        let cos_fov = cam.fov_half_angle.cos();
        // (point id or none, clean bearing)
        let mut items: Vec<(Option<u64>, Vector3<f64>)> = Vec::new();
        for (id, p) in scene.points.iter().enumerate() {
            let v = r_t * (p - world_cam.translation);
            let range = v.norm();
            if range < spec.min_range || range > spec.max_range || v.z < cos_fov * range {
                continue;
            }
            items.push((Some(id as u64), v / range));
        }
        let outliers = (items.len() as f64 * f / (1.0 - f)).round() as usize;
        for _ in 0..outliers {
            items.push((None, random_in_cone(cam.fov_half_angle, &mut rng)));
        }
        items.shuffle(&mut rng);

        let mut features = Vec::with_capacity(items.len());
        for (k, (point, clean)) in items.into_iter().enumerate() {
            let (bearing, desc) = match point {
                Some(id) => {
                    let mut b = jitter(&clean, sigma_b, &mut rng);
                    if b.z <= 0.0 {
                        b = clean;
                    }
                    (b, spec.noisy(scene.templates.row(id as usize), &mut rng))
                }
                None => (clean, random_unit_descriptor(spec.descriptor_dim, &mut rng)),
            };
            let row = descriptors.push(&desc)?;
            features.push(BearingFeature::new(cam.camera_id, bearing, row)?);
            labels.push(FeatureLabel {
                camera_id: cam.camera_id,
                feature: k as u32,
                point_id: point,
            });
            clean_bearings.push(clean);
        }
        cameras.push(FrameCamera {
            camera_id: cam.camera_id,
            features,
        });
    }
    let frame = QueryFrame::new(frame_id, cameras, descriptors).map_err(|e| SimError::FrameMismatch(e.to_string()))?;
    Ok(RenderedFrame {
        frame,
        labels,
        clean_bearings,
    })
}
