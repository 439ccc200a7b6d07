use std::io::{BufRead, Write};

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::{spd_information, FusionError};
use crate::geometry::{skew, Pose, PoseRecord};

/// Timestamps closer than this are treated as equal.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// Relative motion between two timestamps with its tangent covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct OdometryIncrement {
    pub t_from: f64,
    pub t_to: f64,
    /// `T(t_from)⁻¹ ∘ T(t_to)`.
    pub delta: Pose,
    pub sigma0: Matrix6<f64>,
}

impl OdometryIncrement {
    pub fn to_record(&self) -> OdometryRecord {
        OdometryRecord {
            t_from: self.t_from,
            t_to: self.t_to,
            delta: PoseRecord::from(&self.delta),
            sigma0_diag: std::array::from_fn(|i| self.sigma0[(i, i)]),
        }
    }
}

/// One line of an odometry file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometryRecord {
    pub t_from: f64,
    pub t_to: f64,
    pub delta: PoseRecord,
    pub sigma0_diag: [f64; 6],
}

impl OdometryRecord {
    pub fn to_increment(&self) -> Result<OdometryIncrement, String> {
        if !(self.t_to > self.t_from) || !self.t_from.is_finite() || !self.t_to.is_finite() {
            return Err(format!("t_to {} must be after t_from {}", self.t_to, self.t_from));
        }
        if !self.sigma0_diag.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err("sigma0_diag entries must be positive".into());
        }
        let delta = Pose::from(self.delta);
        if !delta.is_finite() {
            return Err("delta is not finite".into());
        }
        Ok(OdometryIncrement {
            t_from: self.t_from,
            t_to: self.t_to,
            delta,
            sigma0: Matrix6::from_diagonal(&Vector6::from(self.sigma0_diag)),
        })
    }
}

/// `(A ∘ B, Σ)` for increments perturbed on the right, `A ∘ Exp(n)`.
pub fn compose_with_covariance(a: &Pose, sa: &Matrix6<f64>, b: &Pose, sb: &Matrix6<f64>) -> (Pose, Matrix6<f64>) {
    let rb_t = b.rotation_matrix().transpose();
    let mut ja = Matrix6::zeros();
    ja.fixed_view_mut::<3, 3>(0, 0).copy_from(&rb_t);
    ja.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-(rb_t * skew(&b.translation))));
    ja.fixed_view_mut::<3, 3>(3, 3).copy_from(&rb_t);
    let s = ja * sa * ja.transpose() + sb;
    (a.compose(b), (s + s.transpose()) * 0.5)
}

/// Contiguous odometry stream.
#[derive(Clone, Debug, Default)]
pub struct OdometryBuffer {
    increments: Vec<OdometryIncrement>,
}

impl OdometryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_increments(increments: Vec<OdometryIncrement>) -> Result<Self, FusionError> {
        let mut b = Self::new();
        for inc in increments {
            b.push(inc)?;
        }
        Ok(b)
    }

    pub fn increments(&self) -> &[OdometryIncrement] {
        &self.increments
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn push(&mut self, inc: OdometryIncrement) -> Result<(), FusionError> {
        if !(inc.t_to > inc.t_from) {
            return Err(FusionError::TimestampRegression {
                previous: inc.t_from,
                got: inc.t_to,
            });
        }
        spd_information(&inc.sigma0)?;
        if let Some(last) = self.increments.last() {
            if (inc.t_from - last.t_to).abs() > TIME_EPS {
                return Err(if inc.t_from < last.t_to {
                    FusionError::TimestampRegression {
                        previous: last.t_to,
                        got: inc.t_from,
                    }
                } else {
                    FusionError::OdometryGap {
                        from: last.t_to,
                        to: inc.t_from,
                    }
                });
            }
        }
        self.increments.push(inc);
        Ok(())
    }

    /// Boundary timestamps: the first start, then every end.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.increments.first().map(|i| i.t_from).into_iter().collect();
        out.extend(self.increments.iter().map(|i| i.t_to));
        out
    }

    /// Composition of the increments from `t0` up to the last boundary not
    /// after `t1`. `t0` must be a boundary.
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<(Pose, Matrix6<f64>, f64), FusionError> {
        let gap = FusionError::OdometryGap { from: t0, to: t1 };
        if t1 < t0 - TIME_EPS {
            return Err(FusionError::TimestampRegression { previous: t0, got: t1 });
        }
        let start = self.increments.partition_point(|i| i.t_from < t0 - TIME_EPS);
        let mut pose = Pose::identity();
        let mut cov = Matrix6::zeros();
        let mut reached = t0;
        match self.increments.get(start) {
            Some(i) if (i.t_from - t0).abs() <= TIME_EPS => {}
            _ => {
                // t0 may be the end of the stream
                let at_end = self.increments.last().is_some_and(|l| (l.t_to - t0).abs() <= TIME_EPS);
                return if at_end { Ok((pose, cov, reached)) } else { Err(gap) };
            }
        }
        for inc in &self.increments[start..] {
            if inc.t_to > t1 + TIME_EPS {
                break;
            }
            (pose, cov) = compose_with_covariance(&pose, &cov, &inc.delta, &inc.sigma0);
            reached = inc.t_to;
        }
        Ok((pose, cov, reached))
    }

    /// Like [`OdometryBuffer::integrate`] but `t1` must be reached exactly.
    pub fn integrate_exact(&self, t0: f64, t1: f64) -> Result<(Pose, Matrix6<f64>), FusionError> {
        let (pose, cov, reached) = self.integrate(t0, t1)?;
        if (reached - t1).abs() > TIME_EPS {
            return Err(FusionError::OdometryGap { from: t0, to: t1 });
        }
        Ok((pose, cov))
    }
}

pub fn read_odometry(reader: impl BufRead) -> Result<Vec<OdometryIncrement>, FusionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| FusionError::Parse { line: i + 1, message };
        let rec: OdometryRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        out.push(rec.to_increment().map_err(err)?);
    }
    Ok(out)
}

pub fn write_odometry(mut w: impl Write, increments: &[OdometryIncrement]) -> std::io::Result<()> {
    for inc in increments {
        writeln!(w, "{}", serde_json::to_string(&inc.to_record()).expect("record serializes"))?;
    }
    Ok(())
}

/// One line of a trajectory file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub timestamp: f64,
    pub pose: PoseRecord,
}

pub fn write_trajectory(mut w: impl Write, samples: &[(f64, Pose)]) -> std::io::Result<()> {
    for (t, p) in samples {
        let rec = TrajectoryRecord {
            timestamp: *t,
            pose: PoseRecord::from(p),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    Ok(())
}

pub fn read_trajectory(reader: impl BufRead) -> Result<Vec<(f64, Pose)>, FusionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| FusionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((rec.timestamp, Pose::from(rec.pose)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3_exp;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn step(t: f64, delta: Pose, sigma: f64) -> OdometryIncrement {
        OdometryIncrement {
            t_from: t,
            t_to: t + 1.0,
            delta,
            sigma0: Matrix6::identity() * (sigma * sigma),
        }
    }

    fn forward() -> Pose {
        Pose::new(so3_exp(&Vector3::new(0.0, 0.0, 0.1)), Vector3::new(1.0, 0.0, 0.0))
    }

    #[test]
    fn buffer_rules() {
        let mut b = OdometryBuffer::new();
        b.push(step(0.0, forward(), 0.1)).unwrap();
        b.push(step(1.0, forward(), 0.1)).unwrap();
        assert!(matches!(b.push(step(3.0, forward(), 0.1)), Err(FusionError::OdometryGap { .. })));
        assert!(matches!(b.push(step(0.5, forward(), 0.1)), Err(FusionError::TimestampRegression { .. })));
        let mut bad = step(2.0, forward(), 0.1);
        bad.sigma0[(0, 0)] = -1.0;
        assert!(b.push(bad).is_err());
        assert_eq!(b.timestamps(), vec![0.0, 1.0, 2.0]);

        let (p, _) = b.integrate_exact(0.0, 2.0).unwrap();
        let expect = forward().compose(&forward());
        assert!(p.distance_to(&expect) < 1e-15 && p.angle_to(&expect) < 1e-15);
        let (p, _, reached) = b.integrate(1.0, 1.7).unwrap();
        assert_eq!(reached, 1.0);
        assert_eq!(p, Pose::identity());
        assert!(b.integrate_exact(0.0, 1.5).is_err());
        assert!(b.integrate(0.5, 2.0).is_err());
        assert_eq!(b.integrate(2.0, 5.0).unwrap().2, 2.0);
    }

    /// Monte Carlo check of the first-order covariance of a composed chain.
    #[test]
    fn composed_covariance_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sig = Vector6::new(0.01, 0.02, 0.015, 0.03, 0.01, 0.02);
        let s0 = Matrix6::from_diagonal(&sig.component_mul(&sig));
        let steps: Vec<Pose> = (0..5)
            .map(|k| Pose::new(so3_exp(&Vector3::new(0.05 * k as f64, 0.1, 0.2)), Vector3::new(1.0, 0.5 * k as f64, -0.3)))
            .collect();
        let (mean, cov) = steps
            .iter()
            .fold((Pose::identity(), Matrix6::zeros()), |(p, c), s| compose_with_covariance(&p, &c, s, &s0));
        let n = 20_000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut acc = Matrix6::zeros();
        for _ in 0..n {
            let mut p = Pose::identity();
            for s in &steps {
                let e = Vector6::from_fn(|i, _| normal.sample(&mut rng) * sig[i]);
                let noise = Pose::new(so3_exp(&e.fixed_rows::<3>(0).into_owned()), e.fixed_rows::<3>(3).into_owned());
                p = p.compose(s).compose(&noise);
            }
            let r = mean.inverse().compose(&p).log();
            acc += r * r.transpose();
        }
        let sample = acc / n as f64;
        for i in 0..6 {
            let rel = (sample[(i, i)] - cov[(i, i)]).abs() / cov[(i, i)];
            assert!(rel < 0.1, "diag {i}: {} vs {}", sample[(i, i)], cov[(i, i)]);
        }
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let incs = vec![step(0.0, forward(), 0.1), step(1.0, forward(), 0.2)];
        let mut buf = Vec::new();
        write_odometry(&mut buf, &incs).unwrap();
        let back = read_odometry(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[1].delta.distance_to(&incs[1].delta) < 1e-15);
        assert_eq!(back[1].sigma0, incs[1].sigma0);

        let text = String::from_utf8(buf).unwrap();
        let broken = format!("{}not json\n", text);
        match read_odometry(broken.as_bytes()) {
            Err(FusionError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let backwards = r#"{"t_from":2,"t_to":1,"delta":{"q":[1,0,0,0],"t":[0,0,0]},"sigma0_diag":[1,1,1,1,1,1]}"#;
        assert!(matches!(read_odometry(backwards.as_bytes()), Err(FusionError::Parse { line: 1, .. })));

        let traj = vec![(0.0, forward()), (1.5, Pose::identity())];
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back[1].0, 1.5);
        assert!(back[0].1.distance_to(&traj[0].1) < 1e-15);
    }
}
