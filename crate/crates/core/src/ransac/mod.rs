//! Pose estimation interleaved with matching: a pool of the best hypotheses
//! is updated batch by batch until one satisfies the acceptance rule.

mod estimator;
mod localize;
mod result;

pub use estimator::{evaluate_hypothesis, sample_minimal, Estimator, EstimatorMatch, MatchSet, SamplerState, SamplingConfig};
pub use localize::{localize, localize_reference, LocalizeConfig, REFERENCE_ITERATIONS};
pub use result::{read_results, write_results, InlierRecord, LocalizationResult, LocalizationStats, ResultRecord, Status};

use crate::geometry::Pose;
use crate::matcher::MatchError;

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("invalid localization configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcceptanceThresholds {
    pub min_inlier_ratio: f64,
    pub min_inliers: usize,
    /// Inliers must cover strictly more than this fraction of the rig cameras.
    pub min_camera_fraction: f64,
    /// Inliers have an angular error strictly below this, radians.
    pub inlier_angle: f64,
}

impl Default for AcceptanceThresholds {
    fn default() -> Self {
        Self {
            min_inlier_ratio: 0.20,
            min_inliers: 15,
            min_camera_fraction: 0.5,
            inlier_angle: 10f64.to_radians(),
        }
    }
}

impl AcceptanceThresholds {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        let ok = self.min_inlier_ratio > 0.0
            && self.min_inlier_ratio <= 1.0
            && self.min_inliers > 0
            && self.min_camera_fraction > 0.0
            && self.min_camera_fraction < 1.0
            && self.inlier_angle > 0.0
            && self.inlier_angle < std::f64::consts::PI;
        if ok {
            Ok(())
        } else {
            Err(LocalizeError::InvalidConfig(format!("invalid acceptance thresholds {self:?}")))
        }
    }

    /// The acceptance rule on summary numbers.
    pub fn accepts(&self, inlier_count: usize, inlier_ratio: f64, inlier_cameras: usize, rig_cameras: usize) -> bool {
        inlier_ratio >= self.min_inlier_ratio
            && inlier_count >= self.min_inliers
            && inlier_cameras as f64 > self.min_camera_fraction * rig_cameras as f64
    }
}

/// A candidate rig pose scored against the current matches.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub pose: Pose,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
}

impl Hypothesis {
    /// Pool order: more inliers first, then higher ratio.
    fn ranks_above(&self, other: &Hypothesis) -> bool {
        self.inlier_count > other.inlier_count
            || (self.inlier_count == other.inlier_count && self.inlier_ratio > other.inlier_ratio)
    }
}

/// True iff `h` satisfies every threshold; `camera_of` maps a match index to
/// its camera.
pub fn check_acceptance(
    h: &Hypothesis,
    thresholds: &AcceptanceThresholds,
    rig_cameras: usize,
    camera_of: impl Fn(usize) -> u32,
) -> bool {
    let mut cams: Vec<u32> = h
        .inliers
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| camera_of(i))
        .collect();
    cams.sort_unstable();
    cams.dedup();
    thresholds.accepts(h.inlier_count, h.inlier_ratio, cams.len(), rig_cameras)
}
