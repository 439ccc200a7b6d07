//! Minimal absolute pose for a generalized (multi-center) camera from three
//! ray/point pairs.
//!
//! Unknowns are the depths `λ₁, λ₂, λ₃` along the three rays. The pairwise
//! distance constraints `‖Xᵢ − Xⱼ‖ = ‖Pᵢ − Pⱼ‖` give three quadrics. With
//! `λ₁ = t`, the (1,2) and (1,3) constraints are quadratics in `λ₂` and `λ₃`
//! whose roots are `pⱼ(t) ± √qⱼ(t)` with `p` linear and `q` quadratic in `t`.
//! Substituting into the (2,3) constraint and squaring away both radicals
//! leaves a univariate polynomial of degree 8. Each real root is polished on
//! the full 3×3 system, and the rig-frame points are aligned to the world
//! points to recover the pose.

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};

use super::poly::Poly;
use super::{angle_between, bearing_residual, skew, GeometryError, Pose};

/// A ray of the generalized camera (origin and unit direction, both in the rig
/// frame) and the world point it observes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayCorrespondence {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub point: Vector3<f64>,
}

pub const MIN_TRIANGLE_AREA: f64 = 1e-10;

/// Returns every real `world_from_rig` pose (at most 8) consistent with the
/// three correspondences and positive depths.
pub fn gp3p_solve(corrs: &[RayCorrespondence; 3]) -> Result<Vec<Pose>, GeometryError> {
    validate(corrs)?;

    // Work in a normalized frame so polynomial coefficients are well scaled.
    let world_center = corrs.iter().map(|c| c.point).sum::<Vector3<f64>>() / 3.0;
    let rig_center = corrs.iter().map(|c| c.origin).sum::<Vector3<f64>>() / 3.0;
    let scale = corrs
        .iter()
        .map(|c| (c.point - world_center).norm())
        .fold(0.0, f64::max);
    let pts: [Vector3<f64>; 3] = std::array::from_fn(|i| (corrs[i].point - world_center) / scale);
    let org: [Vector3<f64>; 3] = std::array::from_fn(|i| (corrs[i].origin - rig_center) / scale);
    let dir: [Vector3<f64>; 3] = std::array::from_fn(|i| corrs[i].direction);
    let sys = DepthSystem::new(&org, &dir, &pts);

    let octic = sys.octic();
    let mut depth_solutions: Vec<[f64; 3]> = Vec::new();
    let Some(upper) = sys.depth_upper_bound().map(|u| u.min(octic.root_bound())) else {
        return Ok(Vec::new());
    };
    for t in octic.real_roots_in(0.0, upper * (1.0 + 1e-9) + 1e-12) {
        if !(t > 0.0) || !t.is_finite() {
            continue;
        }
        for seed in sys.branch_seeds(t) {
            let Some(lambda) = sys.polish(seed) else { continue };
            if lambda.iter().any(|l| *l <= 0.0) {
                continue;
            }
            if depth_solutions
                .iter()
                .any(|s| (0..3).all(|k| (s[k] - lambda[k]).abs() <= 1e-9 * (1.0 + lambda[k].abs())))
            {
                continue;
            }
            depth_solutions.push(lambda);
        }
    }

    let mut poses = Vec::with_capacity(depth_solutions.len());
    for lambda in depth_solutions {
        let rig_pts: [Vector3<f64>; 3] = std::array::from_fn(|i| org[i] + dir[i] * lambda[i]);
        let Some((rot, trans)) = align_triangles(&pts, &rig_pts) else { continue };
        // rig = R·world + t in normalized coordinates; undo the normalization
        let t_rig_from_world = -(rot * world_center) + trans * scale + rig_center;
        let world_from_rig = polish_pose(Pose::new(rot, t_rig_from_world).inverse(), corrs);
        let consistent = corrs.iter().all(|c| {
            let x = world_from_rig.inverse().transform_point(&c.point) - c.origin;
            angle_between(&x, &c.direction) < 1e-6
        });
        if consistent {
            poses.push(world_from_rig);
        }
    }
    Ok(poses)
}

fn validate(corrs: &[RayCorrespondence; 3]) -> Result<(), GeometryError> {
    for c in corrs {
        if (c.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidBearing("ray direction is not unit norm"));
        }
        if !(c.point.iter().chain(c.origin.iter()).all(|v| v.is_finite())) {
            return Err(GeometryError::DegenerateConfiguration("non-finite input"));
        }
    }
    let area = 0.5
        * (corrs[1].point - corrs[0].point)
            .cross(&(corrs[2].point - corrs[0].point))
            .norm();
    if area <= MIN_TRIANGLE_AREA {
        return Err(GeometryError::DegenerateConfiguration("world points are collinear"));
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if (corrs[i].origin - corrs[j].origin).norm() <= 1e-12
                && (corrs[i].direction - corrs[j].direction).norm() <= 1e-12
            {
                return Err(GeometryError::DegenerateConfiguration("duplicated rays"));
            }
        }
    }
    Ok(())
}

struct DepthSystem {
    org: [Vector3<f64>; 3],
    dir: [Vector3<f64>; 3],
    dist_sq: [f64; 3], // (1,2), (1,3), (2,3)
}

impl DepthSystem {
    fn new(org: &[Vector3<f64>; 3], dir: &[Vector3<f64>; 3], pts: &[Vector3<f64>; 3]) -> Self {
        Self {
            org: *org,
            dir: *dir,
            dist_sq: [
                (pts[0] - pts[1]).norm_squared(),
                (pts[0] - pts[2]).norm_squared(),
                (pts[1] - pts[2]).norm_squared(),
            ],
        }
    }

    /// `λⱼ = pⱼ(t) ± √qⱼ(t)` for `j ∈ {2, 3}` given `λ₁ = t`.
    fn branch(&self, j: usize, pair: usize) -> (Poly, Poly) {
        let e = self.org[0] - self.org[j];
        let d1 = self.dir[0];
        let dj = self.dir[j];
        // λⱼ² − 2λⱼ·β(t) + γ(t) = 0
        let beta = Poly::linear(dj.dot(&e), d1.dot(&dj));
        let gamma = Poly(vec![e.norm_squared() - self.dist_sq[pair], 2.0 * d1.dot(&e), 1.0]);
        let q = beta.mul(&beta).sub(&gamma);
        (beta, q)
    }

    /// Largest `λ₁` for which both other depths stay real: `q₂, q₃ ≥ 0`.
    fn depth_upper_bound(&self) -> Option<f64> {
        let mut upper = f64::INFINITY;
        for (j, pair) in [(1, 0), (2, 1)] {
            let (_, q) = self.branch(j, pair);
            let (c, b, a) = (q.0[0], q.0[1], q.0[2]);
            if a < -1e-12 {
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                // larger root of a downward parabola
                let r = (-b - disc.sqrt()) / (2.0 * a);
                upper = upper.min(r);
            }
        }
        (upper > 0.0).then_some(upper)
    }

    fn octic(&self) -> Poly {
        let (p2, q2) = self.branch(1, 0);
        let (p3, q3) = self.branch(2, 1);
        let f = self.org[1] - self.org[2];
        let d2 = self.dir[1];
        let d3 = self.dir[2];
        let k = d2.dot(&d3);
        let u = d2.dot(&f);
        let v = d3.dot(&f);
        let w = f.norm_squared() - self.dist_sq[2];

        // (2,3) constraint: A + B·r₂ + C·r₃ + E·r₂·r₃ = 0 with rⱼ = ±√qⱼ
        let a = p2
            .mul(&p2)
            .add(&q2)
            .add(&p3.mul(&p3))
            .add(&q3)
            .sub(&p2.mul(&p3).scale(2.0 * k))
            .add(&p2.scale(2.0 * u))
            .sub(&p3.scale(2.0 * v))
            .add(&Poly::constant(w));
        let b = p2.scale(2.0).sub(&p3.scale(2.0 * k)).add(&Poly::constant(2.0 * u));
        let c = p3.scale(2.0).sub(&p2.scale(2.0 * k)).sub(&Poly::constant(2.0 * v));
        let e = -2.0 * k;

        let q23 = q2.mul(&q3);
        // G = H·r₂·r₃  ⇒  G² − H²·q₂·q₃ = 0
        let g = a
            .mul(&a)
            .add(&q23.scale(e * e))
            .sub(&b.mul(&b).mul(&q2))
            .sub(&c.mul(&c).mul(&q3));
        let h = b.mul(&c).sub(&a.scale(e)).scale(2.0);
        g.mul(&g).sub(&h.mul(&h).mul(&q23))
    }

    fn branch_seeds(&self, t: f64) -> Vec<[f64; 3]> {
        let (p2, q2) = self.branch(1, 0);
        let (p3, q3) = self.branch(2, 1);
        let (p2, q2, p3, q3) = (p2.eval(t), q2.eval(t), p3.eval(t), q3.eval(t));
        let slack = 1e-6 * (1.0 + t * t);
        if q2 < -slack || q3 < -slack {
            return Vec::new();
        }
        let r2 = q2.max(0.0).sqrt();
        let r3 = q3.max(0.0).sqrt();
        let mut seeds = Vec::with_capacity(4);
        let mut best: Option<([f64; 3], f64)> = None;
        for s2 in [1.0, -1.0] {
            for s3 in [1.0, -1.0] {
                let cand = [t, p2 + s2 * r2, p3 + s3 * r3];
                let res = self.residuals(&cand)[2].abs();
                if res < 1e-4 * (1.0 + t * t) {
                    seeds.push(cand);
                }
                if best.is_none_or(|(_, r)| res < r) {
                    best = Some((cand, res));
                }
            }
        }
        if seeds.is_empty() {
            seeds.extend(best.map(|(c, _)| c));
        }
        seeds
    }

    fn residuals(&self, l: &[f64; 3]) -> [f64; 3] {
        let x: [Vector3<f64>; 3] = std::array::from_fn(|i| self.org[i] + self.dir[i] * l[i]);
        [
            (x[0] - x[1]).norm_squared() - self.dist_sq[0],
            (x[0] - x[2]).norm_squared() - self.dist_sq[1],
            (x[1] - x[2]).norm_squared() - self.dist_sq[2],
        ]
    }

    /// Newton iterations on the three distance constraints.
    fn polish(&self, mut l: [f64; 3]) -> Option<[f64; 3]> {
        let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
        let mut norm = f64::INFINITY;
        for _ in 0..25 {
            let r = self.residuals(&l);
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= 1e-15 {
                norm = rn;
                break;
            }
            let x: [Vector3<f64>; 3] = std::array::from_fn(|i| self.org[i] + self.dir[i] * l[i]);
            let mut jac = Matrix3::zeros();
            for (row, &(i, j)) in pairs.iter().enumerate() {
                let diff = x[i] - x[j];
                jac[(row, i)] = 2.0 * diff.dot(&self.dir[i]);
                jac[(row, j)] = -2.0 * diff.dot(&self.dir[j]);
            }
            let Some(step) = jac.lu().solve(&Vector3::from(r)) else { break };
            let next = [l[0] - step[0], l[1] - step[1], l[2] - step[2]];
            let nn = self.residuals(&next).iter().map(|v| v * v).sum::<f64>().sqrt();
            if !nn.is_finite() {
                break;
            }
            if nn >= rn {
                norm = rn;
                break;
            }
            l = next;
            norm = nn;
        }
        let scale = 1.0 + l.iter().map(|v| v * v).sum::<f64>();
        (norm <= 1e-9 * scale).then_some(l)
    }
}

fn ray_cost(pose: &Pose, corrs: &[RayCorrespondence; 3]) -> f64 {
    let inv = pose.inverse();
    corrs
        .iter()
        .map(|c| angle_between(&(inv.transform_point(&c.point) - c.origin), &c.direction).powi(2))
        .sum()
}

/// Gauss-Newton on the six ray residuals in original units. The alignment
/// above loses precision on thin triangles; a few steps recover it.
fn polish_pose(mut pose: Pose, corrs: &[RayCorrespondence; 3]) -> Pose {
    let mut cost = ray_cost(&pose, corrs);
    for _ in 0..5 {
        if cost < 1e-30 {
            break;
        }
        let rt = pose.rotation_matrix().transpose();
        let mut jac = Matrix6::zeros();
        let mut res = Vector6::zeros();
        for (i, c) in corrs.iter().enumerate() {
            let x = rt * (c.point - pose.translation);
            let Some((r, dv)) = bearing_residual(&c.direction, &(x - c.origin)) else { return pose };
            res.fixed_rows_mut::<2>(2 * i).copy_from(&r);
            jac.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&(dv * skew(&x)));
            jac.fixed_view_mut::<2, 3>(2 * i, 3).copy_from(&(-dv * rt));
        }
        let Some(step) = jac.lu().solve(&res) else { break };
        let next = pose.retract(&(-step));
        let next_cost = ray_cost(&next, corrs);
        if !(next_cost < cost) {
            break;
        }
        pose = next;
        cost = next_cost;
    }
    pose
}

/// Rotation and translation with `rig = R·world + t`, from exact triangles.
fn align_triangles(world: &[Vector3<f64>; 3], rig: &[Vector3<f64>; 3]) -> Option<(UnitQuaternion<f64>, Vector3<f64>)> {
    let cw = (world[0] + world[1] + world[2]) / 3.0;
    let cr = (rig[0] + rig[1] + rig[2]) / 3.0;
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        h += (world[i] - cw) * (rig[i] - cr).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    let rot = UnitQuaternion::from_matrix(&r);
    Some((rot, cr - rot * cw))
}
