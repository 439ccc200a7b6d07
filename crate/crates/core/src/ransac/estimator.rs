use std::collections::HashSet;

use nalgebra::Vector3;
use rand::Rng;

use super::{check_acceptance, AcceptanceThresholds, Hypothesis};
use crate::geometry::{gp3p_solve, CameraRig, Pose, ProjectionCache, RayCorrespondence};
use crate::map::GlobalMap;
use crate::matcher::{Correspondence, MatchError, QueryFrame};

/// A correspondence with the geometry needed for estimation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorMatch {
    pub corr: Correspondence,
    pub camera_index: usize,
    /// Bearing in the camera frame.
    pub bearing: Vector3<f64>,
    /// Ray origin and direction in the rig frame.
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub position: Vector3<f64>,
    /// Index of the batch that delivered the match.
    pub batch: usize,
}

impl EstimatorMatch {
    pub fn ray(&self) -> RayCorrespondence {
        RayCorrespondence {
            origin: self.origin,
            direction: self.direction,
            point: self.position,
        }
    }
}

/// Matches accumulated over a frame, with pairwise covisibility lists.
#[derive(Clone, Debug, Default)]
pub struct MatchSet {
    matches: Vec<EstimatorMatch>,
    covisible: Vec<Vec<u32>>,
    seen: HashSet<(u32, u32, u32)>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn matches(&self) -> &[EstimatorMatch] {
        &self.matches
    }

    pub fn get(&self, i: usize) -> &EstimatorMatch {
        &self.matches[i]
    }

    /// Indices of matches whose points share a mapping frame with match `i`.
    pub fn covisible_with(&self, i: usize) -> &[u32] {
        &self.covisible[i]
    }

    /// Appends the matches not seen before; returns how many were new.
    pub fn extend(
        &mut self,
        batch: &[Correspondence],
        batch_index: usize,
        frame: &QueryFrame,
        rig: &CameraRig,
        map: &GlobalMap,
    ) -> Result<usize, MatchError> {
        let start = self.matches.len();
        for c in batch {
            if !self.seen.insert((c.camera_id, c.feature, c.point)) {
                continue;
            }
            let camera_index = rig.index_of(c.camera_id).ok_or(MatchError::UnknownCamera(c.camera_id))?;
            let cam = &rig.cameras()[camera_index];
            let feature = frame
                .feature(c.camera_id, c.feature as usize)
                .ok_or_else(|| MatchError::InvalidFrame(format!("no feature {} in camera {}", c.feature, c.camera_id)))?;
            self.matches.push(EstimatorMatch {
                corr: *c,
                camera_index,
                bearing: feature.bearing,
                origin: cam.rig_from_camera.translation,
                direction: cam.rig_from_camera.rotation * feature.bearing,
                position: map.position(c.point),
                batch: batch_index,
            });
            self.covisible.push(Vec::new());
        }
        for i in start..self.matches.len() {
            for j in 0..i {
                let (pi, pj) = (self.matches[i].corr.point, self.matches[j].corr.point);
                if map.is_covisible(pi, pj) {
                    self.covisible[i].push(j as u32);
                    self.covisible[j].push(i as u32);
                }
            }
        }
        Ok(self.matches.len() - start)
    }
}

/// Scores `pose` against every match: inliers have an angular error strictly
/// below the threshold.
pub fn evaluate_hypothesis(pose: &Pose, matches: &MatchSet, rig: &CameraRig, thresholds: &AcceptanceThresholds) -> Hypothesis {
    let mut h = Hypothesis {
        pose: *pose,
        inliers: Vec::with_capacity(matches.len()),
        inlier_count: 0,
        inlier_ratio: 0.0,
    };
    extend_hypothesis(&mut h, matches, rig, thresholds);
    h
}

/// Scores the matches appended since `h` was last evaluated.
fn extend_hypothesis(h: &mut Hypothesis, matches: &MatchSet, rig: &CameraRig, thresholds: &AcceptanceThresholds) {
    let start = h.inliers.len();
    if start < matches.len() {
        let cache = ProjectionCache::new(&h.pose, rig);
        for m in &matches.matches()[start..] {
            let inlier = cache.angle(m.camera_index, &m.bearing, &m.position) < thresholds.inlier_angle;
            h.inliers.push(inlier);
            h.inlier_count += inlier as usize;
        }
    }
    h.inlier_ratio = if matches.is_empty() {
        0.0
    } else {
        h.inlier_count as f64 / matches.len() as f64
    };
}

/// Bookkeeping for biased minimal sampling.
#[derive(Clone, Debug, Default)]
pub struct SamplerState {
    /// How often each match has been drawn as the first sample.
    pub first_draws: Vec<u32>,
}

/// Draws three matches on distinct, covisible points. The first comes from
/// `recent` unless every recent match has already been drawn first
/// `first_limit` times, in which case it comes from all matches; the other
/// two are drawn uniformly from the matches covisible with it.
pub fn sample_minimal(
    matches: &MatchSet,
    recent: &[usize],
    state: &mut SamplerState,
    first_limit: u32,
    attempts: usize,
    rng: &mut impl Rng,
) -> Option<[usize; 3]> {
    if matches.len() < 3 {
        return None;
    }
    state.first_draws.resize(matches.len(), 0);
    let mut fresh: Vec<usize> = recent.iter().copied().filter(|i| state.first_draws[*i] < first_limit).collect();
    for _ in 0..attempts {
        let first = if fresh.is_empty() {
            rng.random_range(0..matches.len())
        } else {
            fresh[rng.random_range(0..fresh.len())]
        };
        state.first_draws[first] += 1;
        if state.first_draws[first] >= first_limit {
            fresh.retain(|i| *i != first);
        }
        let p0 = matches.get(first).corr.point;
        let pool: Vec<usize> = matches
            .covisible_with(first)
            .iter()
            .map(|j| *j as usize)
            .filter(|j| matches.get(*j).corr.point != p0)
            .collect();
        if pool.len() < 2 {
            continue;
        }
        let a = pool[rng.random_range(0..pool.len())];
        let pa = matches.get(a).corr.point;
        let rest: Vec<usize> = pool.iter().copied().filter(|j| matches.get(*j).corr.point != pa).collect();
        if rest.is_empty() {
            continue;
        }
        let b = rest[rng.random_range(0..rest.len())];
        return Some([first, a, b]);
    }
    None
}

/// Pool and sampling parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub pool_size: usize,
    /// Sampling iterations per ingested batch.
    pub budget: usize,
    /// The recent window covers matches from this many latest batches.
    pub recent_batches: usize,
    /// First-sample draws per match before it leaves the recent window.
    pub first_limit: u32,
    /// Attempts to find a covisible triple per iteration.
    pub attempts: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            pool_size: 5,
            budget: 100,
            recent_batches: 2,
            first_limit: 3,
            attempts: 50,
        }
    }
}

/// Batch-wise estimator state for one frame.
pub struct Estimator<'a> {
    map: &'a GlobalMap,
    frame: &'a QueryFrame,
    rig: &'a CameraRig,
    thresholds: AcceptanceThresholds,
    sampling: SamplingConfig,
    matches: MatchSet,
    pool: Vec<Hypothesis>,
    sampler: SamplerState,
    batches: usize,
    iterations: usize,
}

impl<'a> Estimator<'a> {
    pub fn new(
        map: &'a GlobalMap,
        frame: &'a QueryFrame,
        rig: &'a CameraRig,
        thresholds: AcceptanceThresholds,
        sampling: SamplingConfig,
    ) -> Self {
        Self {
            map,
            frame,
            rig,
            thresholds,
            sampling,
            matches: MatchSet::default(),
            pool: Vec::new(),
            sampler: SamplerState::default(),
            batches: 0,
            iterations: 0,
        }
    }

    pub fn matches(&self) -> &MatchSet {
        &self.matches
    }

    pub fn pool(&self) -> &[Hypothesis] {
        &self.pool
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_accepted(&self, h: &Hypothesis) -> bool {
        check_acceptance(h, &self.thresholds, self.rig.len(), |i| self.matches.get(i).corr.camera_id)
    }

    fn accepted_index(&self) -> Option<usize> {
        self.pool.iter().position(|h| self.is_accepted(h))
    }

    /// Adds `pose` as a pool candidate. A candidate that duplicates a pooled
    /// hypothesis replaces it only when strictly better.
    pub fn offer(&mut self, pose: &Pose) {
        let h = evaluate_hypothesis(pose, &self.matches, self.rig, &self.thresholds);
        self.insert(h);
    }

    fn insert(&mut self, h: Hypothesis) {
        if let Some(i) = self
            .pool
            .iter()
            .position(|p| p.pose.distance_to(&h.pose) <= 1e-6 && p.pose.angle_to(&h.pose) <= 1e-8)
        {
            if h.ranks_above(&self.pool[i]) {
                self.pool.remove(i);
            } else {
                return;
            }
        }
        let at = self.pool.iter().position(|p| h.ranks_above(p)).unwrap_or(self.pool.len());
        self.pool.insert(at, h);
        self.pool.truncate(self.sampling.pool_size);
    }

    fn resort(&mut self) {
        // stable: equal hypotheses keep their relative order
        let mut pool = std::mem::take(&mut self.pool);
        pool.sort_by(|a, b| {
            b.inlier_count
                .cmp(&a.inlier_count)
                .then(b.inlier_ratio.partial_cmp(&a.inlier_ratio).unwrap_or(std::cmp::Ordering::Equal))
        });
        self.pool = pool;
    }

    /// Adds a batch of matches, re-scores the pool and, unless a pooled
    /// hypothesis already passes, runs up to `budget` sampling iterations.
    /// Returns the pool index of an accepted hypothesis.
    pub fn ingest_batch(&mut self, batch: &[Correspondence], budget: usize, rng: &mut impl Rng) -> Result<Option<usize>, MatchError> {
        let batch_index = self.batches;
        self.batches += 1;
        self.matches.extend(batch, batch_index, self.frame, self.rig, self.map)?;
        for i in 0..self.pool.len() {
            let mut h = std::mem::replace(&mut self.pool[i], placeholder());
            extend_hypothesis(&mut h, &self.matches, self.rig, &self.thresholds);
            self.pool[i] = h;
        }
        self.resort();
        if let Some(i) = self.accepted_index() {
            return Ok(Some(i));
        }
        if self.matches.len() < 3 {
            return Ok(None);
        }
        let oldest = batch_index.saturating_sub(self.sampling.recent_batches.max(1) - 1);
        let recent: Vec<usize> = self
            .matches
            .matches()
            .iter()
            .enumerate()
            .filter(|(_, m)| m.batch >= oldest)
            .map(|(i, _)| i)
            .collect();
        for _ in 0..budget {
            self.iterations += 1;
            let Some(sample) = sample_minimal(&self.matches, &recent, &mut self.sampler, self.sampling.first_limit, self.sampling.attempts, rng)
            else {
                continue;
            };
            if let Some(h) = self.best_solution(sample) {
                self.insert(h);
                if let Some(i) = self.accepted_index() {
                    return Ok(Some(i));
                }
            }
        }
        Ok(None)
    }

    /// Plain RANSAC over the current matches: uniform triples on distinct
    /// points, no covisibility constraint, no early exit.
    pub fn uniform_ransac(&mut self, iterations: usize, rng: &mut impl Rng) {
        let n = self.matches.len();
        if n < 3 {
            return;
        }
        for _ in 0..iterations {
            self.iterations += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            let pts = [a, b, c].map(|i| self.matches.get(i).corr.point);
            if pts[0] == pts[1] || pts[0] == pts[2] || pts[1] == pts[2] {
                continue;
            }
            if let Some(h) = self.best_solution([a, b, c]) {
                self.insert(h);
            }
        }
    }

    /// Index of the first pooled hypothesis that passes the acceptance rule.
    pub fn accepted(&self) -> Option<usize> {
        self.accepted_index()
    }

    /// Best-scoring pose among the minimal solutions of a sample.
    pub fn best_solution(&self, sample: [usize; 3]) -> Option<Hypothesis> {
        let rays = sample.map(|i| self.matches.get(i).ray());
        let poses = gp3p_solve(&rays).ok()?;
        poses
            .iter()
            .map(|p| evaluate_hypothesis(p, &self.matches, self.rig, &self.thresholds))
            .reduce(|a, b| if b.ranks_above(&a) { b } else { a })
    }
}

fn placeholder() -> Hypothesis {
    Hypothesis {
        pose: Pose::identity(),
        inliers: Vec::new(),
        inlier_count: 0,
        inlier_ratio: 0.0,
    }
}
