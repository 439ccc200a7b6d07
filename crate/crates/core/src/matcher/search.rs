use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};

use super::{
    Correspondence, MatchError, MatchOrigin, MatchStats, MatcherConfig, PriorityState, QueryFrame, EXPANSION_DISTANCE_FACTOR,
};
use crate::geometry::CameraRig;
use crate::map::{l2, GlobalMap};
use crate::prior::{FeatureCone, FilterConfig, PosePrior, PriorGate};

struct Feature {
    image: usize,
    local: u32,
    camera_id: u32,
    row: usize,
    word: u32,
}

/// Incremental matcher over one query frame. Each call to
/// [`Matcher::next_batch`] processes up to `batch_size` features in priority
/// order and returns the correspondences found meanwhile.
pub struct Matcher<'a> {
    map: &'a GlobalMap,
    frame: &'a QueryFrame,
    cfg: MatcherConfig,
    features: Vec<Feature>,
    image_offsets: Vec<usize>,
    /// Prior-filtered slots of the feature's word; `None` means all of them.
    candidates: Vec<Option<Vec<u32>>>,
    cones: Option<Vec<FeatureCone>>,
    state: PriorityState,
    emitted: HashSet<(u32, u32)>,
    feature_matched: Vec<bool>,
    point_done: HashSet<u32>,
    stats: MatchStats,
}

impl<'a> Matcher<'a> {
    pub fn new(
        map: &'a GlobalMap,
        frame: &'a QueryFrame,
        rig: &CameraRig,
        prior: Option<(&PosePrior, &FilterConfig)>,
        cfg: MatcherConfig,
    ) -> Result<Self, MatchError> {
        cfg.validate()?;
        if frame.feature_count() > 0 && frame.dim() != map.dim() {
            return Err(MatchError::DimensionMismatch {
                frame: frame.dim(),
                map: map.dim(),
            });
        }
        let gate = prior.map(|(p, f)| PriorGate::new(p, f, rig)).transpose()?;

        let mut features = Vec::with_capacity(frame.feature_count());
        let mut image_offsets = Vec::with_capacity(frame.cameras().len());
        let mut cones = gate.as_ref().map(|_| Vec::with_capacity(frame.feature_count()));
        for (image, cam) in frame.cameras().iter().enumerate() {
            let rig_index = rig.index_of(cam.camera_id).ok_or(MatchError::UnknownCamera(cam.camera_id))?;
            image_offsets.push(features.len());
            for (local, f) in cam.features.iter().enumerate() {
                let row = f.descriptor_id;
                features.push(Feature {
                    image,
                    local: local as u32,
                    camera_id: cam.camera_id,
                    row,
                    word: map.vocabulary().assign_word(frame.descriptors().row(row)),
                });
                if let (Some(g), Some(c)) = (&gate, cones.as_mut()) {
                    c.push(g.cone(rig_index, &f.bearing));
                }
            }
        }

        let candidates: Vec<Option<Vec<u32>>> = match &cones {
            None => features.iter().map(|_| None).collect(),
            Some(cones) => features
                .iter()
                .zip(cones)
                .map(|(f, cone)| {
                    let kept = map
                        .word_points(f.word)
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| cone.keeps(&map.position(**p)))
                        .map(|(slot, _)| slot as u32)
                        .collect();
                    Some(kept)
                })
                .collect(),
        };

        let mut images: Vec<Vec<(u32, usize)>> = vec![Vec::new(); frame.cameras().len()];
        for (g, f) in features.iter().enumerate() {
            let count = candidates[g].as_ref().map_or_else(|| map.word_size(f.word), |c| c.len());
            images[f.image].push((f.local, count));
        }
        let stats = MatchStats {
            features_total: features.len(),
            ..MatchStats::default()
        };
        Ok(Self {
            map,
            frame,
            cfg,
            feature_matched: vec![false; features.len()],
            features,
            image_offsets,
            candidates,
            cones,
            state: PriorityState::new(images, cfg.balance),
            emitted: HashSet::new(),
            point_done: HashSet::new(),
            stats,
        })
    }

    pub fn stats(&self) -> MatchStats {
        self.stats
    }

    /// Matched-feature count per image, in camera id order.
    pub fn matched_per_image(&self) -> &[usize] {
        self.state.matched()
    }

    pub fn is_exhausted(&self) -> bool {
        self.state.remaining() == 0
    }

    /// Processes the next batch of features. Returns `None` once every
    /// feature has been processed.
    pub fn next_batch(&mut self) -> Option<Vec<Correspondence>> {
        if self.is_exhausted() {
            return None;
        }
        let mut out = Vec::new();
        for _ in 0..self.cfg.batch_size {
            let Some(sel) = self.state.next_feature() else { break };
            let g = self.image_offsets[sel.image] + sel.feature as usize;
            self.stats.features_processed += 1;
            self.process(g, &mut out);
        }
        self.stats.batches += 1;
        Some(out)
    }

    fn word_slots(&self, g: usize) -> Box<dyn Iterator<Item = u32> + '_> {
        match &self.candidates[g] {
            Some(c) => Box::new(c.iter().copied()),
            None => Box::new(0..self.map.word_size(self.features[g].word) as u32),
        }
    }

    /// Frame features that may observe map point `point`: all of them
    /// without a prior, otherwise those whose cone keeps the point.
    fn feasible_features(&self, point: u32) -> Vec<usize> {
        match &self.cones {
            None => (0..self.features.len()).collect(),
            Some(cones) => {
                let p = self.map.position(point);
                (0..self.features.len()).filter(|h| cones[*h].keeps(&p)).collect()
            }
        }
    }

    /// Nearest and second nearest feature among `subset` to any of
    /// `descriptors`.
    fn nearest_features(&self, subset: &[usize], descriptors: &[std::borrow::Cow<'_, [f32]>]) -> Option<(usize, f32, f32)> {
        let block = self.frame.descriptors();
        let mut best = (usize::MAX, f32::INFINITY);
        let mut second = f32::INFINITY;
        for &h in subset {
            let row = block.row(self.features[h].row);
            let d = descriptors.iter().map(|q| l2(q, row)).fold(f32::INFINITY, f32::min);
            if d < best.1 {
                second = best.1;
                best = (h, d);
            } else if d < second {
                second = d;
            }
        }
        (best.0 != usize::MAX).then_some((best.0, best.1, second))
    }

    fn emit(&mut self, g: usize, point: u32, distance: f32, origin: MatchOrigin, generating: Option<f32>, out: &mut Vec<Correspondence>) {
        if !self.emitted.insert((g as u32, point)) {
            return;
        }
        let f = &self.features[g];
        out.push(Correspondence {
            camera_id: f.camera_id,
            feature: f.local,
            point,
            point_id: self.map.point_id(point),
            distance,
            origin,
            generating_distance: generating,
        });
        match origin {
            MatchOrigin::Forward => self.stats.forward_matches += 1,
            MatchOrigin::Expansion => self.stats.expansion_matches += 1,
        }
        if !self.feature_matched[g] {
            self.feature_matched[g] = true;
            self.state.record_match(f.image);
        }
    }

    fn process(&mut self, g: usize, out: &mut Vec<Correspondence>) {
        let word = self.features[g].word;
        let query = self.frame.descriptors().row(self.features[g].row);
        let prepared = self.map.prepare(query);
        let mut best = (u32::MAX, f32::INFINITY);
        let mut second = f32::INFINITY;
        let mut n = 0u64;
        for slot in self.word_slots(g) {
            let d = self.map.distance(&prepared, word, slot);
            n += 1;
            if d < best.1 {
                second = best.1;
                best = (slot, d);
            } else if d < second {
                second = d;
            }
        }
        self.stats.forward_comparisons += n;
        if best.0 == u32::MAX || !passes_ratio(best.1, second, self.cfg.ratio_forward) {
            return;
        }

        let (slot, distance) = best;
        let point = self.map.word_points(word)[slot as usize];
        let descriptor = self.map.descriptor(word, slot);
        let subset = self.feasible_features(point);
        self.stats.backward_comparisons += subset.len() as u64;
        let Some((back, d1, d2)) = self.nearest_features(&subset, std::slice::from_ref(&descriptor)) else { return };
        if back != g || !passes_ratio(d1, d2, self.cfg.ratio_backward) {
            return;
        }
        self.emit(g, point, distance, MatchOrigin::Forward, None, out);
        self.point_done.insert(point);
        if self.cfg.expansion {
            self.expand(point, distance, out);
        }
    }

    /// 3D-to-2D search for the covisible neighbours of a forward match.
    fn expand(&mut self, point: u32, generating: f32, out: &mut Vec<Correspondence>) {
        for q in self.map.covisible(point) {
            if !self.point_done.insert(q) {
                continue;
            }
            let entries = self.map.point(q).word_entries;
            let descriptors: Vec<_> = entries.iter().map(|e| self.map.descriptor(e.word, e.slot)).collect();
            let subset = self.feasible_features(q);
            self.stats.expansion_comparisons += (entries.len() * subset.len()) as u64;
            let Some((h, d1, d2)) = self.nearest_features(&subset, &descriptors) else { continue };
            if !passes_ratio(d1, d2, self.cfg.ratio_backward) || d1 > EXPANSION_DISTANCE_FACTOR * generating {
                continue;
            }
            self.emit(h, q, d1, MatchOrigin::Expansion, Some(generating), out);
        }
    }
}

/// `d1 / d2 < τ`, with a missing second neighbour treated as infinitely far.
fn passes_ratio(d1: f32, d2: f32, ratio: f32) -> bool {
    if d2.is_infinite() {
        return d1.is_finite();
    }
    d1 < ratio * d2
}

/// Drives `matcher` until exhaustion or until `stop` is raised, handing every
/// batch to `sink`. The flag is checked before each batch.
pub fn run_matching(matcher: &mut Matcher<'_>, stop: &AtomicBool, mut sink: impl FnMut(Vec<Correspondence>)) {
    while !stop.load(Ordering::Acquire) {
        match matcher.next_batch() {
            Some(batch) => sink(batch),
            None => break,
        }
    }
}
