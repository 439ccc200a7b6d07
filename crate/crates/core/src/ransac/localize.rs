use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::estimator::{Estimator, SamplingConfig};
use super::result::{InlierRecord, LocalizationResult, LocalizationStats, Status};
use super::{evaluate_hypothesis, AcceptanceThresholds, Hypothesis, LocalizeError};
use crate::geometry::{refine_pose, CameraRig, PointObservation, RefineOptions};
use crate::map::GlobalMap;
use crate::matcher::{run_matching, MatchStats, Matcher, MatcherConfig, QueryFrame};
use crate::prior::{FilterConfig, PosePrior};

/// Iterations of the plain RANSAC used by [`localize_reference`].
pub const REFERENCE_ITERATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizeConfig {
    pub matcher: MatcherConfig,
    pub thresholds: AcceptanceThresholds,
    pub sampling: SamplingConfig,
    /// Single thread, matching and estimation alternate.
    pub deterministic: bool,
    pub seed: u64,
    /// Capacity of the batch queue in parallel mode.
    pub queue_depth: usize,
    pub refine: bool,
    /// Cauchy scale of the final refinement; `None` uses the inlier angle.
    pub refine_threshold: Option<f64>,
    pub reference_iterations: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            matcher: MatcherConfig::default(),
            thresholds: AcceptanceThresholds::default(),
            sampling: SamplingConfig::default(),
            deterministic: true,
            seed: 0,
            queue_depth: 4,
            refine: true,
            refine_threshold: None,
            reference_iterations: REFERENCE_ITERATIONS,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        self.matcher.validate()?;
        self.thresholds.validate()?;
        let s = &self.sampling;
        if s.pool_size == 0 || s.recent_batches == 0 || s.first_limit == 0 || s.attempts == 0 {
            return Err(LocalizeError::InvalidConfig(format!("invalid sampling parameters {s:?}")));
        }
        if self.queue_depth == 0 {
            return Err(LocalizeError::InvalidConfig("queue depth must be at least 1".into()));
        }
        if let Some(t) = self.refine_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(LocalizeError::InvalidConfig(format!("refine threshold {t} must be positive")));
            }
        }
        Ok(())
    }
}

/// Per-frame RNG stream.
fn frame_rng(seed: u64, frame_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ frame_id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Localizes one frame, interleaving prioritized matching with batch-wise
/// RANSAC until a hypothesis passes the acceptance rule or the features run
/// out.
pub fn localize(
    map: &GlobalMap,
    frame: &QueryFrame,
    rig: &CameraRig,
    prior: Option<(&PosePrior, &FilterConfig)>,
    cfg: &LocalizeConfig,
) -> Result<LocalizationResult, LocalizeError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut matcher = Matcher::new(map, frame, rig, prior, cfg.matcher)?;
    let mut est = Estimator::new(map, frame, rig, cfg.thresholds, cfg.sampling);
    let mut rng = frame_rng(cfg.seed, frame.frame_id);
    let budget = cfg.sampling.budget;

    let (accepted, stats) = if cfg.deterministic {
        let mut accepted = None;
        while let Some(batch) = matcher.next_batch() {
            if let Some(i) = est.ingest_batch(&batch, budget, &mut rng)? {
                accepted = Some(i);
                break;
            }
        }
        (accepted, matcher.stats())
    } else {
        let stop = AtomicBool::new(false);
        let (tx, rx) = sync_channel(cfg.queue_depth);
        std::thread::scope(|s| {
            let producer = s.spawn(|| {
                run_matching(&mut matcher, &stop, |batch| {
                    // a closed queue means the consumer is done
                    let _ = tx.send(batch);
                });
                drop(tx);
                matcher.stats()
            });
            let mut outcome = Ok(None);
            for batch in rx.iter() {
                match est.ingest_batch(&batch, budget, &mut rng) {
                    Ok(None) => continue,
                    other => {
                        outcome = other;
                        break;
                    }
                }
            }
            stop.store(true, Ordering::Release);
            drop(rx);
            let stats = producer.join().expect("matcher thread panicked");
            outcome.map(|a| (a, stats))
        })?
    };

    let mut result = finish(&est, accepted, rig, cfg, frame.frame_id, &stats);
    if !cfg.deterministic {
        result.stats.wall_time = Some(start.elapsed().as_secs_f64());
    }
    Ok(result)
}

/// Brute-force baseline: matching runs to exhaustion, then plain RANSAC with
/// uniform sampling for a fixed number of iterations.
pub fn localize_reference(
    map: &GlobalMap,
    frame: &QueryFrame,
    rig: &CameraRig,
    prior: Option<(&PosePrior, &FilterConfig)>,
    cfg: &LocalizeConfig,
) -> Result<LocalizationResult, LocalizeError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut matcher = Matcher::new(map, frame, rig, prior, cfg.matcher)?;
    let mut all = Vec::new();
    while let Some(batch) = matcher.next_batch() {
        all.extend(batch);
    }
    let mut est = Estimator::new(map, frame, rig, cfg.thresholds, cfg.sampling);
    let mut rng = frame_rng(cfg.seed, frame.frame_id);
    est.ingest_batch(&all, 0, &mut rng)?;
    est.uniform_ransac(cfg.reference_iterations, &mut rng);
    let accepted = est.accepted();
    let mut result = finish(&est, accepted, rig, cfg, frame.frame_id, &matcher.stats());
    if !cfg.deterministic {
        result.stats.wall_time = Some(start.elapsed().as_secs_f64());
    }
    Ok(result)
}

fn finish(
    est: &Estimator<'_>,
    accepted: Option<usize>,
    rig: &CameraRig,
    cfg: &LocalizeConfig,
    frame_id: u64,
    ms: &MatchStats,
) -> LocalizationResult {
    let mut stats = LocalizationStats {
        features_total: ms.features_total,
        features_processed: ms.features_processed,
        matches_found: est.matches().len(),
        ransac_iterations: est.iterations(),
        batches: ms.batches,
        forward_comparisons: ms.forward_comparisons,
        backward_comparisons: ms.backward_comparisons,
        expansion_comparisons: ms.expansion_comparisons,
        inliers: 0,
        refined: false,
        wall_time: None,
    };
    let Some(i) = accepted else {
        return LocalizationResult::failed(frame_id, stats);
    };
    let mut best = est.pool()[i].clone();
    if cfg.refine {
        if let Some(h) = refined(est, &best, rig, cfg) {
            best = h;
            stats.refined = true;
        }
    }
    let inliers = best
        .inliers
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(k, _)| {
            let c = est.matches().get(k).corr;
            InlierRecord {
                camera_id: c.camera_id,
                feature: c.feature,
                point_id: c.point_id,
            }
        })
        .collect();
    stats.inliers = best.inlier_count;
    LocalizationResult {
        frame_id,
        status: Status::Localized,
        pose: Some(best.pose),
        inliers,
        stats,
    }
}

/// Refines `h` on its inliers and re-scores it; `None` when the refinement
/// fails or the refined pose no longer passes the acceptance rule.
fn refined(est: &Estimator<'_>, h: &Hypothesis, rig: &CameraRig, cfg: &LocalizeConfig) -> Option<Hypothesis> {
    let obs: Vec<PointObservation> = h
        .inliers
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(k, _)| {
            let m = est.matches().get(k);
            PointObservation {
                camera_id: m.corr.camera_id,
                bearing: m.bearing,
                point: m.position,
            }
        })
        .collect();
    let threshold = cfg.refine_threshold.unwrap_or(cfg.thresholds.inlier_angle);
    let r = refine_pose(&h.pose, &obs, rig, threshold, &RefineOptions::default()).ok()?;
    if !r.refined || !r.pose.is_finite() {
        return None;
    }
    let out = evaluate_hypothesis(&r.pose, est.matches(), rig, &cfg.thresholds);
    est.is_accepted(&out).then_some(out)
}
