//! Angular and tangent-plane residuals between observed bearings and map points.
//!
//! The tangent-plane residual is the logarithm map of the unit sphere at the
//! observed bearing: a 2-vector whose norm is exactly the angle between the
//! bearing and the direction to the point.

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3};

use super::{skew, CameraRig, GeometryError, Pose, RigCamera};

/// Points closer than this to a camera center have no defined direction.
pub const MIN_POINT_DISTANCE: f64 = 1e-12;

/// A bearing observed by one rig camera paired with a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointObservation {
    pub camera_id: u32,
    pub bearing: Vector3<f64>,
    pub point: Vector3<f64>,
}

/// Angle in `[0, π]` between two (not necessarily unit) vectors.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Angle between the observed bearing and the world direction from the camera
/// center to `point`.
pub fn angular_error(
    rig_pose: &Pose,
    rig: &CameraRig,
    camera_id: u32,
    bearing: &Vector3<f64>,
    point: &Vector3<f64>,
) -> Result<f64, GeometryError> {
    let cam = rig.camera(camera_id)?;
    camera_angular_error(rig_pose, cam, bearing, point)
}

pub fn camera_angular_error(
    rig_pose: &Pose,
    cam: &RigCamera,
    bearing: &Vector3<f64>,
    point: &Vector3<f64>,
) -> Result<f64, GeometryError> {
    let world_from_camera = rig_pose.compose(&cam.rig_from_camera);
    let to_point = point - world_from_camera.translation;
    if to_point.norm() <= MIN_POINT_DISTANCE {
        return Err(GeometryError::DegeneratePoint);
    }
    let ray = world_from_camera.rotation * bearing;
    Ok(angle_between(&ray, &to_point))
}

/// Per-camera `camera_from_world` rotation and center for one rig pose, so
/// scoring many matches against one hypothesis avoids recomposing poses.
#[derive(Clone, Debug)]
pub struct ProjectionCache {
    rotations: Vec<Matrix3<f64>>,
    centers: Vec<Vector3<f64>>,
}

impl ProjectionCache {
    pub fn new(rig_pose: &Pose, rig: &CameraRig) -> Self {
        let mut rotations = Vec::with_capacity(rig.len());
        let mut centers = Vec::with_capacity(rig.len());
        for cam in rig.cameras() {
            let wc = rig_pose.compose(&cam.rig_from_camera);
            rotations.push(wc.rotation_matrix().transpose());
            centers.push(wc.translation);
        }
        Self { rotations, centers }
    }

    /// Angle for the camera at `camera_index` (position in the rig, not id).
    /// Degenerate points return `π`.
    #[inline]
    pub fn angle(&self, camera_index: usize, bearing: &Vector3<f64>, point: &Vector3<f64>) -> f64 {
        let v = self.rotations[camera_index] * (point - self.centers[camera_index]);
        if v.norm() <= MIN_POINT_DISTANCE {
            return std::f64::consts::PI;
        }
        angle_between(bearing, &v)
    }
}

/// Orthonormal basis of the plane tangent to the unit sphere at `b`.
pub fn tangent_basis(b: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if b.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = helper.cross(b).normalize();
    let e2 = b.cross(&e1);
    (e1, e2)
}

/// Sphere logarithm of the direction `v` at the unit bearing `b`, with its
/// Jacobian with respect to `v`.
pub fn bearing_residual(b: &Vector3<f64>, v: &Vector3<f64>) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
    let n = v.norm();
    if n <= MIN_POINT_DISTANCE {
        return None;
    }
    let vh = v / n;
    let (e1, e2) = tangent_basis(b);
    let et = Matrix2x3::from_rows(&[e1.transpose(), e2.transpose()]);
    let g = et * vh;
    let s = g.norm();
    let c = b.dot(&vh);
    let theta = s.atan2(c);

    // f = θ / sin θ and its derivative coefficient (c·s − θ)/s³
    let (f, k) = if s < 1e-6 && c > 0.0 {
        (1.0 + s * s / 6.0, -2.0 / 3.0)
    } else {
        let s = s.max(f64::MIN_POSITIVE);
        (theta / s, (c * s - theta) / (s * s * s))
    };
    let r = g * f;
    let df = (et.transpose() * g).transpose() * k - b.transpose();
    let dr_dvh = et * f + g * df;
    let proj = (Matrix3::identity() - vh * vh.transpose()) / n;
    Some((r, dr_dvh * proj))
}

/// Tangent-plane residual of one observation under `rig_pose`, with the
/// Jacobian with respect to the right-perturbation `[δφ, δt]` of `rig_pose`.
pub fn observation_residual(
    rig_pose: &Pose,
    cam: &RigCamera,
    bearing: &Vector3<f64>,
    point: &Vector3<f64>,
) -> Result<(Vector2<f64>, Matrix2x6<f64>), GeometryError> {
    let r_t = rig_pose.rotation_matrix().transpose();
    let rc_t = cam.rig_from_camera.rotation_matrix().transpose();
    let w = r_t * (point - rig_pose.translation);
    let v = rc_t * (w - cam.rig_from_camera.translation);
    let (res, dr_dv) = bearing_residual(bearing, &v).ok_or(GeometryError::DegeneratePoint)?;
    let dv_dphi = rc_t * skew(&w);
    let dv_dt = -(rc_t * r_t);
    let mut jac = Matrix2x6::zeros();
    jac.fixed_view_mut::<2, 3>(0, 0).copy_from(&(dr_dv * dv_dphi));
    jac.fixed_view_mut::<2, 3>(0, 3).copy_from(&(dr_dv * dv_dt));
    Ok((res, jac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector6};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn single_camera_rig() -> CameraRig {
        CameraRig::new(vec![RigCamera {
            camera_id: 0,
            rig_from_camera: Pose::identity(),
            fov_half_angle: 1.0,
        }])
        .unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let r = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let t = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        Pose::new(UnitQuaternion::from_scaled_axis(r), t)
    }

    fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn angular_error_trivial_cases() {
        let rig = single_camera_rig();
        let b = Vector3::new(0.0, 0.0, 1.0);
        let on_ray = angular_error(&Pose::identity(), &rig, 0, &b, &Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert!(on_ray.abs() < 1e-15);
        let ortho = angular_error(&Pose::identity(), &rig, 0, &b, &Vector3::new(0.0, 5.0, 0.0)).unwrap();
        assert!((ortho - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            angular_error(&Pose::identity(), &rig, 0, &b, &Vector3::zeros()),
            Err(GeometryError::DegeneratePoint)
        ));
        assert!(matches!(
            angular_error(&Pose::identity(), &rig, 9, &b, &Vector3::x()),
            Err(GeometryError::UnknownCamera(9))
        ));
    }

    #[test]
    fn angular_error_matches_camera_frame_derivation() {
        // second path: move the point into the camera frame and compare with
        // acos of the normalized dot product
        let rig = CameraRig::default_four();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let pose = random_pose(&mut rng);
            let cam = &rig.cameras()[rng.random_range(0..4)];
            let b = random_unit(&mut rng);
            let p = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let got = angular_error(&pose, &rig, cam.camera_id, &b, &p).unwrap();

            let r_wr = pose.rotation_matrix();
            let r_rc = cam.rig_from_camera.rotation_matrix();
            let center = r_wr * cam.rig_from_camera.translation + pose.translation;
            let in_cam = (r_wr * r_rc).transpose() * (p - center);
            let cosine = (in_cam.normalize().dot(&b)).clamp(-1.0, 1.0);
            let expected = cosine.acos();
            // acos is ill-conditioned near 0 and π; compare there through the sine
            if expected > 1e-4 && expected < std::f64::consts::PI - 1e-4 {
                assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
            } else {
                assert!((got.sin() - in_cam.normalize().cross(&b).norm()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn angular_error_rigid_invariance(
            r in prop::array::uniform3(-3.0f64..3.0),
            t in prop::array::uniform3(-10.0f64..10.0),
            g in prop::array::uniform3(-3.0f64..3.0),
            gt in prop::array::uniform3(-10.0f64..10.0),
            p in prop::array::uniform3(-30.0f64..30.0),
            b in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let b = Vector3::from(b);
            prop_assume!(b.norm() > 0.1);
            let b = b.normalize();
            let rig = CameraRig::default_four();
            let pose = Pose::new(UnitQuaternion::from_scaled_axis(Vector3::from(r)), Vector3::from(t));
            let common = Pose::new(UnitQuaternion::from_scaled_axis(Vector3::from(g)), Vector3::from(gt));
            let p = Vector3::from(p);
            let a = angular_error(&pose, &rig, 2, &b, &p).unwrap();
            let moved = angular_error(&common.compose(&pose), &rig, 2, &b, &common.transform_point(&p)).unwrap();
            prop_assert!((a - moved).abs() < 1e-9);
        }
    }

    #[test]
    fn tangent_residual_norm_is_the_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let b = random_unit(&mut rng);
            let v = random_unit(&mut rng) * rng.random_range(0.5..30.0);
            let (r, _) = bearing_residual(&b, &v).unwrap();
            assert!((r.norm() - angle_between(&b, &v)).abs() < 1e-12);
        }
        let b = Vector3::z();
        let (r, _) = bearing_residual(&b, &Vector3::new(0.0, 0.0, 3.0)).unwrap();
        assert!(r.norm() == 0.0);
        let (r, _) = bearing_residual(&b, &Vector3::new(0.0, 3.0, 0.0)).unwrap();
        assert!((r.norm() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn observation_jacobian_matches_central_differences() {
        let rig = CameraRig::default_four();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..200 {
            let pose = random_pose(&mut rng);
            let cam = &rig.cameras()[trial % 4];
            let p = Vector3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
            // bearing near the true direction, but not on it
            let v = (pose.compose(&cam.rig_from_camera)).inverse().transform_point(&p);
            let b = (v.normalize() + random_unit(&mut rng) * 0.3).normalize();
            let (_, jac) = observation_residual(&pose, cam, &b, &p).unwrap();
            let h = 1e-6;
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = h;
                let (rp, _) = observation_residual(&pose.retract(&d), cam, &b, &p).unwrap();
                d[k] = -h;
                let (rm, _) = observation_residual(&pose.retract(&d), cam, &b, &p).unwrap();
                let col = (rp - rm) / (2.0 * h);
                for row in 0..2 {
                    let a = jac[(row, k)];
                    let n = col[row];
                    assert!((a - n).abs() <= 1e-5 * a.abs().max(n.abs()).max(1e-3), "trial {trial} k {k}: {a} vs {n}");
                }
            }
        }
    }
}
