use nalgebra::{Matrix6, Vector2, Vector3, Vector6};

use crate::geometry::{observation_residual, right_jacobian_inv, skew, CameraRig, GeometryError, Pose};

/// `Log(T_{j+1}⁻¹ ∘ T_j ∘ ΔT)`.
pub fn relative_residual(tj: &Pose, tj1: &Pose, delta: &Pose) -> Vector6<f64> {
    tj1.inverse().compose(tj).compose(delta).log()
}

/// Residual and its Jacobians with respect to the right perturbations of
/// `T_j` and `T_{j+1}`.
pub fn relative_jacobians(tj: &Pose, tj1: &Pose, delta: &Pose) -> (Vector6<f64>, Matrix6<f64>, Matrix6<f64>) {
    let e = tj1.inverse().compose(tj).compose(delta);
    let r = e.log();
    let phi = Vector3::new(r[0], r[1], r[2]);
    let jr_inv = right_jacobian_inv(&phi);
    let r_j = tj.rotation_matrix();
    let r_j1_t = tj1.rotation_matrix().transpose();
    let r_d = delta.rotation_matrix();
    let r_e = e.rotation_matrix();

    let mut ja = Matrix6::zeros();
    ja.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jr_inv * r_d.transpose()));
    ja.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-(r_j1_t * r_j * skew(&delta.translation))));
    ja.fixed_view_mut::<3, 3>(3, 3).copy_from(&r_j1_t);

    let mut jb = Matrix6::zeros();
    jb.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-(jr_inv * r_e.transpose())));
    jb.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&e.translation));
    jb.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-r_j1_t));
    (r, ja, jb)
}

/// Tangent-plane deviation of bearing `u` from the direction to `point`; its
/// norm is the angular error.
pub fn match_residual(
    pose: &Pose,
    rig: &CameraRig,
    camera_id: u32,
    u: &Vector3<f64>,
    point: &Vector3<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    let cam = rig.camera(camera_id)?;
    observation_residual(pose, cam, u, point).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angular_error, so3_exp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng, rot: f64, trans: f64) -> Pose {
        let phi = Vector3::from_fn(|_, _| rng.random_range(-rot..rot));
        let t = Vector3::from_fn(|_, _| rng.random_range(-trans..trans));
        Pose::new(so3_exp(&phi), t)
    }

    #[test]
    fn identity_cases() {
        let id = Pose::identity();
        assert_eq!(relative_residual(&id, &id, &id), Vector6::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let tj = random_pose(&mut rng, 3.0, 10.0);
            let d = random_pose(&mut rng, 1.0, 2.0);
            let tj1 = tj.compose(&d);
            assert!(relative_residual(&tj, &tj1, &d).norm() < 1e-12);
        }
        let shifted = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert!((relative_residual(&id, &shifted, &id).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobians_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for _ in 0..200 {
            let tj = random_pose(&mut rng, 3.0, 10.0);
            let tj1 = random_pose(&mut rng, 3.0, 10.0);
            // keep the residual rotation away from π where Log is not smooth
            let d = tj.inverse().compose(&tj1).compose(&random_pose(&mut rng, 1.0, 3.0));
            let (_, ja, jb) = relative_jacobians(&tj, &tj1, &d);
            for k in 0..6 {
                let mut dv = Vector6::zeros();
                dv[k] = h;
                let na = (relative_residual(&tj.retract(&dv), &tj1, &d) - relative_residual(&tj.retract(&-dv), &tj1, &d)) / (2.0 * h);
                let nb = (relative_residual(&tj, &tj1.retract(&dv), &d) - relative_residual(&tj, &tj1.retract(&-dv), &d)) / (2.0 * h);
                let (ca, cb) = (ja.column(k), jb.column(k));
                assert!((na - ca).norm() <= 1e-5 * ca.norm().max(1.0), "a{k}: {na} vs {ca}");
                assert!((nb - cb).norm() <= 1e-5 * cb.norm().max(1.0), "b{k}: {nb} vs {cb}");
            }
        }
    }

    #[test]
    fn match_residual_examples() {
        let rig = CameraRig::default_four();
        let pose = Pose::identity();
        let cam = &rig.cameras()[0];
        let world_cam = pose.compose(&cam.rig_from_camera);
        let u = Vector3::new(0.1, -0.2, 1.0).normalize();
        let on_ray = world_cam.transform_point(&(u * 7.0));
        assert!(match_residual(&pose, &rig, 0, &u, &on_ray).unwrap().norm() < 1e-12);

        let z = Vector3::z();
        let side = world_cam.transform_point(&Vector3::new(3.0, 0.0, 0.0));
        assert!((match_residual(&pose, &rig, 0, &z, &side).unwrap().norm() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = random_pose(&mut rng, 3.0, 5.0);
            let dir = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0).normalize();
            let tilt = so3_exp(&Vector3::new(rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06), 0.0));
            let cam = &rig.cameras()[1];
            let point = p.compose(&cam.rig_from_camera).transform_point(&((tilt * dir) * rng.random_range(1.0..50.0)));
            let r = match_residual(&p, &rig, 1, &dir, &point).unwrap();
            let a = angular_error(&p, &rig, 1, &dir, &point).unwrap();
            assert!((r.norm() - a).abs() < 1e-6);
        }
        assert!(match_residual(&pose, &rig, 9, &z, &side).is_err());
    }
}
