use nalgebra::{DMatrix, DVector, Matrix2, Matrix6, Vector6};

use super::odometry::{OdometryBuffer, TIME_EPS};
use super::residual::relative_jacobians;
use super::{spd_information, FusionConfig, FusionError, PoseNode, RelativeConstraint};
use crate::geometry::{observation_residual, CameraRig, PointObservation, Pose};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
}

/// Whitened problem data shared by cost and linearization.
struct Problem<'a> {
    rig: &'a CameraRig,
    links: &'a [RelativeConstraint],
    link_w: Vec<Matrix6<f64>>,
    match_w: Matrix2<f64>,
}

impl<'a> Problem<'a> {
    fn new(nodes: &[PoseNode], links: &'a [RelativeConstraint], rig: &'a CameraRig, cfg: &FusionConfig) -> Result<Self, FusionError> {
        if links.len() + 1 != nodes.len() {
            return Err(FusionError::InvalidConfig(format!("{} nodes need {} links, got {}", nodes.len(), nodes.len() - 1, links.len())));
        }
        for (i, l) in links.iter().enumerate() {
            if l.from != nodes[i].node_id || l.to != nodes[i + 1].node_id {
                return Err(FusionError::NonConsecutive { from: l.from, to: l.to });
            }
        }
        Ok(Self {
            rig,
            links,
            link_w: links.iter().map(|l| spd_information(&l.sigma0)).collect::<Result<_, _>>()?,
            match_w: spd_information(&cfg.sigma1)?,
        })
    }

    fn cost(&self, poses: &[Pose], nodes: &[PoseNode]) -> Result<f64, FusionError> {
        let mut total = 0.0;
        for (i, l) in self.links.iter().enumerate() {
            let r = super::relative_residual(&poses[i], &poses[i + 1], &l.delta);
            total += (self.link_w[i] * r).norm_squared();
        }
        for (pose, node) in poses.iter().zip(nodes) {
            for m in &node.matches {
                let cam = self.rig.camera(m.camera_id)?;
                let (r, _) = observation_residual(pose, cam, &m.bearing, &m.point)?;
                total += (self.match_w * r).norm_squared();
            }
        }
        Ok(total)
    }

    /// Gauss-Newton system over the free nodes `1..n`.
    fn linearize(&self, poses: &[Pose], nodes: &[PoseNode]) -> Result<(DMatrix<f64>, DVector<f64>), FusionError> {
        let dim = 6 * (poses.len() - 1);
        let mut h = DMatrix::zeros(dim, dim);
        let mut g = DVector::zeros(dim);
        let block = |k: usize| (k >= 1).then(|| 6 * (k - 1));
        for (i, l) in self.links.iter().enumerate() {
            let (r, ja, jb) = relative_jacobians(&poses[i], &poses[i + 1], &l.delta);
            let w = &self.link_w[i];
            let (r, ja, jb) = (w * r, w * ja, w * jb);
            for (k, jk) in [(i, ja), (i + 1, jb)] {
                let Some(bk) = block(k) else { continue };
                let gk = jk.transpose() * r;
                let mut gv = g.rows_mut(bk, 6);
                gv += gk;
                for (m, jm) in [(i, ja), (i + 1, jb)] {
                    let Some(bm) = block(m) else { continue };
                    let mut hv = h.view_mut((bk, bm), (6, 6));
                    hv += jk.transpose() * jm;
                }
            }
        }
        for (k, (pose, node)) in poses.iter().zip(nodes).enumerate() {
            let Some(bk) = block(k) else { continue };
            let mut hk = Matrix6::zeros();
            let mut gk = Vector6::zeros();
            for m in &node.matches {
                let cam = self.rig.camera(m.camera_id)?;
                let (r, j) = observation_residual(pose, cam, &m.bearing, &m.point)?;
                let (r, j) = (self.match_w * r, self.match_w * j);
                hk += j.transpose() * j;
                gk += j.transpose() * r;
            }
            let mut hv = h.view_mut((bk, bk), (6, 6));
            hv += hk;
            let mut gv = g.rows_mut(bk, 6);
            gv += gk;
        }
        Ok((h, g))
    }
}

/// Total weighted cost of the window.
pub fn window_cost(nodes: &[PoseNode], links: &[RelativeConstraint], rig: &CameraRig, cfg: &FusionConfig) -> Result<f64, FusionError> {
    let p = Problem::new(nodes, links, rig, cfg)?;
    let poses: Vec<Pose> = nodes.iter().map(|n| n.pose).collect();
    p.cost(&poses, nodes)
}

/// Damped Gauss-Newton over every node but the first, which is held fixed.
/// On failure the poses are left unchanged.
pub fn optimize_window(
    nodes: &mut [PoseNode],
    links: &[RelativeConstraint],
    rig: &CameraRig,
    cfg: &FusionConfig,
) -> Result<OptimizeReport, FusionError> {
    if nodes.is_empty() {
        return Err(FusionError::EmptyWindow);
    }
    let problem = Problem::new(nodes, links, rig, cfg)?;
    let mut poses: Vec<Pose> = nodes.iter().map(|n| n.pose).collect();
    let mut cost = problem.cost(&poses, nodes)?;
    let mut report = OptimizeReport {
        iterations: 0,
        initial_cost: cost,
        final_cost: cost,
    };
    if !cost.is_finite() {
        return Err(FusionError::Indefinite(format!("initial cost is {cost}")));
    }
    if nodes.len() == 1 {
        return Ok(report);
    }
    check_definite(&problem.linearize(&poses, nodes)?.0)?;
    // no step can lower the cost by more than the tolerance
    if cost <= cfg.cost_tolerance {
        return Ok(report);
    }

    let mut lambda = 1e-6;
    for iter in 0..cfg.max_iterations {
        let (h, g) = problem.linearize(&poses, nodes)?;
        let mut accepted = None;
        while lambda < 1e12 {
            let mut a = h.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * h[(k, k)];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let candidate: Vec<Pose> = poses
                .iter()
                .enumerate()
                .map(|(k, p)| if k == 0 { *p } else { p.retract(&Vector6::from_iterator(step.rows(6 * (k - 1), 6).iter().copied())) })
                .collect();
            let new_cost = problem.cost(&candidate, nodes)?;
            if new_cost < cost {
                lambda = (lambda * 0.1).max(1e-12);
                accepted = Some((candidate, new_cost));
                break;
            }
            lambda *= 10.0;
        }
        let Some((candidate, new_cost)) = accepted else { break };
        let decrease = cost - new_cost;
        poses = candidate;
        cost = new_cost;
        report.iterations = iter + 1;
        if decrease < cfg.cost_tolerance {
            break;
        }
    }
    for (n, p) in nodes.iter_mut().zip(&poses) {
        n.pose = *p;
    }
    report.final_cost = cost;
    Ok(report)
}

fn check_definite(h: &DMatrix<f64>) -> Result<(), FusionError> {
    if !h.iter().all(|v| v.is_finite()) {
        return Err(FusionError::Indefinite("non-finite entries".into()));
    }
    let chol = h.clone().cholesky().ok_or_else(|| FusionError::Indefinite("Cholesky factorization failed".into()))?;
    let d = chol.l().diagonal();
    let (lo, hi) = (d.min(), d.max());
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(FusionError::Indefinite(format!("condition estimate {:.3e}", (hi / lo).powi(2))));
    }
    Ok(())
}

/// Window of at most `N` nodes with odometry links between neighbours.
#[derive(Clone, Debug)]
pub struct FusionWindow {
    cfg: FusionConfig,
    rig: CameraRig,
    nodes: Vec<PoseNode>,
    links: Vec<RelativeConstraint>,
    pending: Option<RelativeConstraint>,
}

impl FusionWindow {
    pub fn new(rig: CameraRig, cfg: FusionConfig) -> Result<Self, FusionError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rig,
            nodes: Vec::new(),
            links: Vec::new(),
            pending: None,
        })
    }

    pub fn nodes(&self) -> &[PoseNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[RelativeConstraint] {
        &self.links
    }

    pub fn newest(&self) -> Option<&PoseNode> {
        self.nodes.last()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Links two consecutive nodes. A link from the newest node to the next
    /// id is kept until that node arrives.
    pub fn add_odometry(&mut self, c: RelativeConstraint) -> Result<(), FusionError> {
        let bad = FusionError::NonConsecutive { from: c.from, to: c.to };
        if c.to != c.from.wrapping_add(1) {
            return Err(bad);
        }
        spd_information(&c.sigma0)?;
        if let Some(i) = self.nodes.iter().position(|n| n.node_id == c.from) {
            if i + 1 < self.nodes.len() {
                self.links[i] = c;
            } else {
                self.pending = Some(c);
            }
            return Ok(());
        }
        Err(bad)
    }

    /// Appends a node, slides the window and optimizes.
    pub fn add_localization(&mut self, node: PoseNode) -> Result<OptimizeReport, FusionError> {
        if !node.timestamp.is_finite() {
            return Err(FusionError::InvalidConfig("node timestamp is not finite".into()));
        }
        if let Some(newest) = self.nodes.last() {
            if node.timestamp <= newest.timestamp {
                return Err(FusionError::TimestampRegression {
                    previous: newest.timestamp,
                    got: node.timestamp,
                });
            }
            if node.node_id != newest.node_id.wrapping_add(1) {
                return Err(FusionError::NonConsecutive {
                    from: newest.node_id,
                    to: node.node_id,
                });
            }
            let link = self
                .pending
                .take_if(|l| l.to == node.node_id)
                .ok_or(FusionError::MissingOdometry(node.node_id))?;
            self.links.push(link);
        }
        self.nodes.push(node);
        if self.nodes.len() > self.cfg.window_size {
            self.nodes.remove(0);
            self.links.remove(0);
        }
        let mut nodes = self.nodes.clone();
        let report = optimize_window(&mut nodes, &self.links, &self.rig, &self.cfg)?;
        self.nodes = nodes;
        Ok(report)
    }

    /// Newest node pose composed with the odometry recorded since.
    pub fn query_pose(&self, odometry: &OdometryBuffer, timestamp: f64) -> Result<Pose, FusionError> {
        let newest = self.nodes.last().ok_or(FusionError::EmptyWindow)?;
        if timestamp < newest.timestamp - TIME_EPS {
            return Err(FusionError::TimestampRegression {
                previous: newest.timestamp,
                got: timestamp,
            });
        }
        let (delta, _, _) = odometry.integrate(newest.timestamp, timestamp)?;
        Ok(newest.pose.compose(&delta))
    }
}

/// A localized frame handed to the fusion stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub timestamp: f64,
    pub pose: Pose,
    pub matches: Vec<PointObservation>,
}

/// Replays odometry and localizations in time order and returns the fused
/// pose at every odometry timestamp from the first localization on.
/// Localization timestamps must fall on odometry timestamps.
pub fn fuse(measurements: &[Measurement], odometry: &OdometryBuffer, rig: &CameraRig, cfg: &FusionConfig) -> Result<Vec<(f64, Pose)>, FusionError> {
    for w in measurements.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(FusionError::TimestampRegression {
                previous: w[0].timestamp,
                got: w[1].timestamp,
            });
        }
    }
    let mut window = FusionWindow::new(rig.clone(), *cfg)?;
    let mut out = Vec::new();
    let mut next = 0;
    let mut node_id = 0u64;
    for t in odometry.timestamps() {
        if let Some(m) = measurements.get(next) {
            if m.timestamp < t - TIME_EPS {
                return Err(unaligned(m.timestamp));
            }
            if (m.timestamp - t).abs() <= TIME_EPS {
                if let Some(newest) = window.newest() {
                    let (delta, sigma0) = odometry.integrate_exact(newest.timestamp, t)?;
                    window.add_odometry(RelativeConstraint {
                        from: newest.node_id,
                        to: newest.node_id + 1,
                        delta,
                        sigma0,
                    })?;
                }
                window.add_localization(PoseNode {
                    node_id,
                    timestamp: t,
                    pose: m.pose,
                    matches: m.matches.clone(),
                })?;
                node_id += 1;
                next += 1;
            }
        }
        if !window.is_empty() {
            out.push((t, window.query_pose(odometry, t)?));
        }
    }
    if let Some(m) = measurements.get(next) {
        return Err(unaligned(m.timestamp));
    }
    Ok(out)
}

fn unaligned(t: f64) -> FusionError {
    FusionError::InvalidConfig(format!("localization at {t} does not fall on an odometry timestamp"))
}
