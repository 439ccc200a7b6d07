use nalgebra::{Matrix6, Vector6};

use super::{observation_residual, CameraRig, GeometryError, PointObservation, Pose};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this.
    pub min_cost_decrease: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            min_cost_decrease: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    /// False when the normal equations were rank deficient and the initial
    /// pose was returned untouched.
    pub refined: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

/// Cauchy loss `c²·ln(1 + s/c²)` on a squared residual `s`.
fn cauchy(s: f64, c2: f64) -> f64 {
    c2 * (s / c2).ln_1p()
}

pub fn robust_cost(pose: &Pose, obs: &[PointObservation], rig: &CameraRig, scale: f64) -> Result<f64, GeometryError> {
    let c2 = scale * scale;
    let mut total = 0.0;
    for o in obs {
        let cam = rig.camera(o.camera_id)?;
        let (r, _) = observation_residual(pose, cam, &o.bearing, &o.point)?;
        total += cauchy(r.norm_squared(), c2);
    }
    Ok(total)
}

/// Levenberg–Marquardt polish of a rig pose on its inlier observations under
/// a Cauchy loss whose scale is `robust_threshold` (radians). Steps are only
/// accepted when they lower the robust cost.
pub fn refine_pose(
    initial: &Pose,
    inliers: &[PointObservation],
    rig: &CameraRig,
    robust_threshold: f64,
    opts: &RefineOptions,
) -> Result<Refinement, GeometryError> {
    if inliers.len() < 4 {
        return Err(GeometryError::InsufficientObservations {
            needed: 4,
            got: inliers.len(),
        });
    }
    let c2 = robust_threshold * robust_threshold;
    let initial_cost = robust_cost(initial, inliers, rig, robust_threshold)?;
    let mut out = Refinement {
        pose: *initial,
        refined: true,
        initial_cost,
        final_cost: initial_cost,
        iterations: 0,
    };
    if initial_cost == 0.0 {
        return Ok(out);
    }

    let mut damping = 1e-4;
    let mut pose = *initial;
    let mut cost = initial_cost;
    for iter in 0..opts.max_iterations {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for o in inliers {
            let cam = rig.camera(o.camera_id)?;
            let (r, j) = observation_residual(&pose, cam, &o.bearing, &o.point)?;
            let w = 1.0 / (1.0 + r.norm_squared() / c2);
            h += j.transpose() * j * w;
            g += j.transpose() * r * w;
        }
        if iter == 0 {
            let sv = h.singular_values();
            let max = sv.max();
            if !(max > 0.0) || sv.min() <= 1e-12 * max {
                out.refined = false;
                return Ok(out);
            }
        }

        let mut improved = false;
        while damping < 1e12 {
            let mut a = h;
            for k in 0..6 {
                a[(k, k)] += damping * h[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let step = chol.solve(&(-g));
            let candidate = pose.retract(&step);
            let new_cost = robust_cost(&candidate, inliers, rig, robust_threshold)?;
            if new_cost < cost {
                let decrease = cost - new_cost;
                pose = candidate;
                cost = new_cost;
                damping = (damping * 0.1).max(1e-12);
                improved = true;
                out.iterations = iter + 1;
                if decrease < opts.min_cost_decrease {
                    out.pose = pose;
                    out.final_cost = cost;
                    return Ok(out);
                }
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    out.pose = pose;
    out.final_cost = cost;
    Ok(out)
}
