use nalgebra::{Matrix6, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{SceneSpec, SimError};
use crate::fusion::OdometryIncrement;
use crate::geometry::{so3_exp, Pose, PoseRecord};
use crate::prior::PosePrior;

/// Ground-truth pose of one query frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub frame_id: u64,
    pub timestamp: f64,
    pub pose: PoseRecord,
}

fn yaw(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
}

/// Rig poses at `rig_height` with uniform yaw, kept `margin` meters inside
/// the horizontal extent.
pub fn random_poses(spec: &SceneSpec, count: usize, margin: f64, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a3c_90e1);
    let z = spec.extent_min[2] + spec.rig_height;
    (0..count)
        .map(|_| {
            let mut t = Vector3::new(0.0, 0.0, z);
            for k in 0..2 {
                let (lo, hi) = (spec.extent_min[k] + margin, spec.extent_max[k] - margin);
                t[k] = if hi > lo { rng.random_range(lo..hi) } else { 0.5 * (spec.extent_min[k] + spec.extent_max[k]) };
            }
            Pose::new(yaw(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)), t)
        })
        .collect()
}

/// `steps + 1` poses moving `step` meters along the start pose's x axis.
pub fn straight_trajectory(start: &Pose, steps: usize, step: f64) -> Vec<Pose> {
    (0..=steps)
        .map(|k| start.compose(&Pose::from_translation(Vector3::new(k as f64 * step, 0.0, 0.0))))
        .collect()
}

/// `steps + 1` poses on a horizontal circle, heading tangent to it.
pub fn circle_trajectory(center: &Vector3<f64>, radius: f64, steps: usize) -> Vec<Pose> {
    (0..=steps)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / steps.max(1) as f64;
            let t = center + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
            Pose::new(yaw(a + std::f64::consts::FRAC_PI_2), t)
        })
        .collect()
}

/// Odometry error model. Each step's measured increment is the true one with
/// its translation scaled by `1 + translation_drift`, yawed by
/// `yaw_drift` radians per meter travelled, then perturbed on the right by
/// `Exp(n)`, `n ~ N(0, diag(σ_r², σ_r², σ_r², σ_t², σ_t², σ_t²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModel {
    /// Relative scale error, e.g. 0.01 for 1% per meter.
    pub translation_drift: f64,
    pub yaw_drift: f64,
    pub rotation_sigma: f64,
    pub translation_sigma: f64,
    /// Lower bound on reported variances so `Σ₀` stays invertible.
    pub variance_floor: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            translation_drift: 0.01,
            yaw_drift: 0.0,
            rotation_sigma: 1e-3,
            translation_sigma: 0.01,
            variance_floor: 1e-12,
        }
    }
}

impl DriftModel {
    pub fn exact() -> Self {
        Self {
            translation_drift: 0.0,
            yaw_drift: 0.0,
            rotation_sigma: 0.0,
            translation_sigma: 0.0,
            variance_floor: 1e-12,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !self.translation_drift.is_finite() || self.translation_drift <= -1.0 {
            return Err(SimError::InvalidSpec {
                field: "translation_drift",
                reason: "must be finite and above -1".into(),
            });
        }
        if !self.yaw_drift.is_finite() {
            return Err(SimError::InvalidSpec {
                field: "yaw_drift",
                reason: "must be finite".into(),
            });
        }
        for (field, v) in [("rotation_sigma", self.rotation_sigma), ("translation_sigma", self.translation_sigma)] {
            if !ok(v) {
                return Err(SimError::InvalidSpec {
                    field,
                    reason: "must be finite and non-negative".into(),
                });
            }
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(SimError::InvalidSpec {
                field: "variance_floor",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Reported tangent covariance of one step.
    pub fn sigma0(&self) -> Matrix6<f64> {
        let r = (self.rotation_sigma * self.rotation_sigma).max(self.variance_floor);
        let t = (self.translation_sigma * self.translation_sigma).max(self.variance_floor);
        Matrix6::from_diagonal(&Vector6::new(r, r, r, t, t, t))
    }
}

/// Increments between consecutive poses; pose `k` has timestamp `k`.
pub fn simulate_odometry(trajectory: &[Pose], model: &DriftModel, seed: u64) -> Result<Vec<OdometryIncrement>, SimError> {
    if trajectory.len() < 2 {
        return Err(SimError::InvalidSpec {
            field: "trajectory",
            reason: "needs at least two poses".into(),
        });
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0d0_3e7e);
    let sigma0 = model.sigma0();
    let mut out = Vec::with_capacity(trajectory.len() - 1);
    for (k, w) in trajectory.windows(2).enumerate() {
        let truth = w[0].inverse().compose(&w[1]);
        let dist = truth.translation.norm();
        let biased = Pose::new(
            truth.rotation * yaw(model.yaw_drift * dist),
            truth.translation * (1.0 + model.translation_drift),
        );
        let mut n = Vector6::zeros();
        for i in 0..6 {
            let s = if i < 3 { model.rotation_sigma } else { model.translation_sigma };
            n[i] = s * rng.sample::<f64, _>(StandardNormal);
        }
        out.push(OdometryIncrement {
            t_from: k as f64,
            t_to: (k + 1) as f64,
            delta: biased.compose(&Pose::identity().retract(&n)),
            sigma0,
        });
    }
    Ok(out)
}

/// Prior whose true pose lies within `d` meters and a rotation of at most
/// `θ` of the reported one.
pub fn perturb_prior(truth: &Pose, d: f64, theta: f64, rng: &mut impl Rng) -> Result<PosePrior, SimError> {
    let dir = loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-9 {
            break v.normalize();
        }
    };
    let offset = dir * (d * rng.random::<f64>().cbrt());
    let axis = loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-9 {
            break v.normalize();
        }
    };
    let angle = theta * rng.random::<f64>();
    let pose = Pose::new(so3_exp(&(axis * angle)) * truth.rotation, truth.translation + offset);
    PosePrior::new(pose, d, theta).map_err(|e| SimError::InvalidSpec {
        field: "prior",
        reason: e.to_string(),
    })
}
