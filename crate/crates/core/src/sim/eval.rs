use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GroundTruthRecord, SimError};
use crate::geometry::Pose;
use crate::ransac::LocalizationResult;

/// Heading (degrees) and position (meters) bounds of one table column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdClass {
    pub heading_deg: f64,
    pub position_m: f64,
}

pub const DEFAULT_CLASSES: [ThresholdClass; 5] = [
    ThresholdClass { heading_deg: 2.0, position_m: 0.25 },
    ThresholdClass { heading_deg: 5.0, position_m: 0.5 },
    ThresholdClass { heading_deg: 10.0, position_m: 5.0 },
    ThresholdClass { heading_deg: 15.0, position_m: 10.0 },
    ThresholdClass { heading_deg: 20.0, position_m: 20.0 },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub heading_deg: f64,
    pub position_m: f64,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub frames: usize,
    pub localized: usize,
    pub planar: bool,
    pub classes: Vec<ClassRow>,
    /// Over localized frames; `None` when there are none.
    pub median_position_m: Option<f64>,
    pub median_heading_deg: Option<f64>,
}

impl ErrorTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = self.classes.iter().map(|c| format!("{}/{}", c.heading_deg, c.position_m)).collect();
        let cells: Vec<String> = self.classes.iter().map(|c| format!("{:.1}", c.percent)).collect();
        let w = header.iter().chain(&cells).map(String::len).max().unwrap_or(0) + 2;
        let _ = writeln!(s, "% of poses within error thresholds (deg / m{})", if self.planar { ", planar" } else { "" });
        for h in &header {
            let _ = write!(s, "{h:>w$}");
        }
        s.push('\n');
        for c in &cells {
            let _ = write!(s, "{c:>w$}");
        }
        s.push('\n');
        let _ = writeln!(s, "localized {}/{} frames", self.localized, self.frames);
        if let (Some(p), Some(h)) = (self.median_position_m, self.median_heading_deg) {
            let _ = writeln!(s, "median error {p:.4} m / {h:.4} deg");
        }
        s
    }
}

/// `(position error, heading error in degrees)`; heading error is the full
/// relative rotation angle.
pub fn pose_errors(estimate: &Pose, truth: &Pose, planar: bool) -> (f64, f64) {
    let d = estimate.translation - truth.translation;
    let position = if planar { d.xy().norm() } else { d.norm() };
    (position, estimate.angle_to(truth).to_degrees())
}

/// RMS position error over the timestamps present in both trajectories,
/// without alignment. `None` when no timestamp is shared.
pub fn absolute_trajectory_error(estimate: &[(f64, Pose)], truth: &[(f64, Pose)]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut j = 0;
    for (t, p) in estimate {
        while j < truth.len() && truth[j].0 < t - 1e-9 {
            j += 1;
        }
        if j < truth.len() && (truth[j].0 - t).abs() <= 1e-9 {
            sum += (p.translation - truth[j].1.translation).norm_squared();
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Percentage of frames localized within both bounds of each class.
/// Results and ground truth must cover the same frame ids.
pub fn evaluate(
    results: &[LocalizationResult],
    truth: &[GroundTruthRecord],
    classes: &[ThresholdClass],
    planar: bool,
) -> Result<ErrorTable, SimError> {
    let mut gt = BTreeMap::new();
    for t in truth {
        if gt.insert(t.frame_id, Pose::from(t.pose)).is_some() {
            return Err(SimError::FrameMismatch(format!("ground truth lists frame {} twice", t.frame_id)));
        }
    }
    let mut seen = BTreeMap::new();
    for r in results {
        if !gt.contains_key(&r.frame_id) {
            return Err(SimError::FrameMismatch(format!("frame {} has no ground truth", r.frame_id)));
        }
        if seen.insert(r.frame_id, ()).is_some() {
            return Err(SimError::FrameMismatch(format!("results list frame {} twice", r.frame_id)));
        }
    }
    if let Some(id) = gt.keys().find(|id| !seen.contains_key(id)) {
        return Err(SimError::FrameMismatch(format!("frame {id} has no result")));
    }

    let errors: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|r| match (&r.pose, r.is_localized()) {
            (Some(p), true) => Some(pose_errors(p, &gt[&r.frame_id], planar)),
            _ => None,
        })
        .collect();
    let n = results.len();
    let rows = classes
        .iter()
        .map(|c| {
            let within = errors.iter().filter(|(p, h)| *p <= c.position_m && *h <= c.heading_deg).count();
            ClassRow {
                heading_deg: c.heading_deg,
                position_m: c.position_m,
                percent: if n == 0 { 0.0 } else { 100.0 * within as f64 / n as f64 },
            }
        })
        .collect();
    Ok(ErrorTable {
        frames: n,
        localized: errors.len(),
        planar,
        classes: rows,
        median_position_m: median(errors.iter().map(|e| e.0).collect()),
        median_heading_deg: median(errors.iter().map(|e| e.1).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3_exp;
    use crate::ransac::{LocalizationStats, Status};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn localized(id: u64, pose: Pose) -> LocalizationResult {
        LocalizationResult {
            frame_id: id,
            status: Status::Localized,
            pose: Some(pose),
            inliers: Vec::new(),
            stats: LocalizationStats::default(),
        }
    }

    fn gt(id: u64, pose: &Pose) -> GroundTruthRecord {
        GroundTruthRecord {
            frame_id: id,
            timestamp: id as f64,
            pose: pose.into(),
        }
    }

    fn poses(n: usize) -> Vec<Pose> {
        (0..n)
            .map(|k| Pose::new(so3_exp(&Vector3::new(0.0, 0.0, k as f64)), Vector3::new(k as f64, 2.0, 1.0)))
            .collect()
    }

    #[test]
    fn exact_poses_fill_every_class() {
        let p = poses(4);
        let res: Vec<_> = p.iter().enumerate().map(|(i, q)| localized(i as u64, *q)).collect();
        let truth: Vec<_> = p.iter().enumerate().map(|(i, q)| gt(i as u64, q)).collect();
        let t = evaluate(&res, &truth, &DEFAULT_CLASSES, false).unwrap();
        assert!(t.classes.iter().all(|c| c.percent == 100.0));
        assert!(t.to_text().contains("100.0"));

        let mut res = res;
        res[2] = LocalizationResult::failed(2, LocalizationStats::default());
        let t = evaluate(&res, &truth, &DEFAULT_CLASSES, false).unwrap();
        assert!(t.classes.iter().all(|c| c.percent == 75.0));
        assert_eq!(t.localized, 3);
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let p = poses(3);
        let res: Vec<_> = p.iter().enumerate().map(|(i, q)| localized(i as u64, *q)).collect();
        let truth: Vec<_> = p.iter().enumerate().map(|(i, q)| gt(i as u64 + 1, q)).collect();
        assert!(matches!(evaluate(&res, &truth, &DEFAULT_CLASSES, false), Err(SimError::FrameMismatch(_))));
        assert!(evaluate(&res[..2], &truth[..2], &DEFAULT_CLASSES, false).is_err());
        let truth: Vec<_> = p.iter().enumerate().map(|(i, q)| gt(i as u64, q)).collect();
        assert!(evaluate(&res[..2], &truth, &DEFAULT_CLASSES, false).is_err());
    }

    #[test]
    fn trajectory_error_uses_shared_timestamps() {
        let truth: Vec<(f64, Pose)> = (0..5).map(|k| (k as f64, Pose::from_translation(Vector3::new(k as f64, 0.0, 0.0)))).collect();
        let est: Vec<(f64, Pose)> = truth
            .iter()
            .skip(1)
            .map(|(t, p)| (*t, Pose::from_translation(p.translation + Vector3::new(0.0, 3.0, 4.0))))
            .chain([(9.0, Pose::identity())])
            .collect();
        assert!((absolute_trajectory_error(&est, &truth).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(absolute_trajectory_error(&truth, &truth), Some(0.0));
        assert_eq!(absolute_trajectory_error(&est[4..], &truth), None);
    }

    #[test]
    fn planar_ignores_height() {
        let p = poses(1);
        let lifted = Pose::new(p[0].rotation, p[0].translation + Vector3::new(0.0, 0.0, 3.0));
        let truth = [gt(0, &p[0])];
        let full = evaluate(&[localized(0, lifted)], &truth, &DEFAULT_CLASSES, false).unwrap();
        let planar = evaluate(&[localized(0, lifted)], &truth, &DEFAULT_CLASSES, true).unwrap();
        assert_eq!(full.classes[1].percent, 0.0);
        assert_eq!(planar.classes[0].percent, 100.0);
    }

    proptest! {
        #[test]
        fn matches_direct_recount_and_is_monotone(
            errs in proptest::collection::vec((0.0f64..25.0, 0.0f64..25.0, any::<bool>()), 1..60)
        ) {
            let mut res = Vec::new();
            let mut truth = Vec::new();
            for (i, (pos, head, ok)) in errs.iter().enumerate() {
                let id = i as u64;
                let base = Pose::from_translation(Vector3::new(i as f64, 0.0, 0.0));
                truth.push(gt(id, &base));
                let est = Pose::new(
                    so3_exp(&Vector3::new(0.0, head.to_radians(), 0.0)),
                    base.translation + Vector3::new(*pos, 0.0, 0.0),
                );
                res.push(if *ok { localized(id, est) } else { LocalizationResult::failed(id, LocalizationStats::default()) });
            }
            let t = evaluate(&res, &truth, &DEFAULT_CLASSES, false).unwrap();
            for (row, c) in t.classes.iter().zip(DEFAULT_CLASSES) {
                let count = errs.iter().filter(|(p, h, ok)| *ok && *p <= c.position_m && *h <= c.heading_deg + 1e-9).count();
                let expected = 100.0 * count as f64 / errs.len() as f64;
                prop_assert!((row.percent - expected).abs() < 1e-9);
            }
            for w in t.classes.windows(2) {
                prop_assert!(w[0].percent <= w[1].percent);
            }
        }
    }
}
