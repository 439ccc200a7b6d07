use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::Vector3;

use super::descriptor::{l2, normalize};
use super::pq::{DistanceTable, PqCodebook};
use super::{MapError, Vocabulary};

/// One (word, averaged descriptor) pair of a map point. `slot` indexes the
/// point's row inside the word's descriptor block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordEntry {
    pub word: u32,
    pub slot: u32,
}

/// Read-only view of a frozen map point.
#[derive(Clone, Copy, Debug)]
pub struct MapPoint<'a> {
    pub index: u32,
    pub id: u64,
    pub position: Vector3<f64>,
    pub word_entries: &'a [WordEntry],
    pub observing_frames: &'a [u64],
}

/// Stored descriptor of one word entry.
#[derive(Clone, Debug, PartialEq)]
pub enum WordPayload {
    Plain(Vec<f32>),
    Code(Vec<u8>),
}

/// Owned, serialization-friendly description of a point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointRecord {
    pub id: u64,
    pub position: Vector3<f64>,
    /// Sorted by word id, no duplicates.
    pub entries: Vec<(u32, WordPayload)>,
    /// Sorted, no duplicates.
    pub frames: Vec<u64>,
}

#[derive(Default)]
struct Accumulator {
    position: Vector3<f64>,
    sums: BTreeMap<u32, (Vec<f64>, u32)>,
    frames: BTreeSet<u64>,
}

/// Mutable map under construction. Descriptors contributed under the same
/// (point, word) are averaged from a running sum, so insertion order does not
/// matter.
pub struct MapBuilder {
    vocabulary: Vocabulary,
    points: BTreeMap<u64, Accumulator>,
}

impl MapBuilder {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self {
            vocabulary,
            points: BTreeMap::new(),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Creates the point, or moves it if it already exists.
    pub fn add_point(&mut self, id: u64, position: Vector3<f64>) {
        self.points.entry(id).or_default().position = position;
    }

    pub fn add_observation(&mut self, point_id: u64, word: u32, descriptor: &[f32], frame_id: u64) -> Result<(), MapError> {
        let dim = self.dim();
        if descriptor.len() != dim {
            return Err(MapError::DimensionMismatch {
                expected: dim,
                got: descriptor.len(),
            });
        }
        if word as usize >= self.vocabulary.word_count() {
            return Err(MapError::InvalidWord {
                word,
                word_count: self.vocabulary.word_count(),
            });
        }
        if descriptor.iter().any(|v| !v.is_finite()) {
            return Err(MapError::InvalidDescriptor("non-finite descriptor"));
        }
        let acc = self.points.get_mut(&point_id).ok_or(MapError::UnknownPoint(point_id))?;
        let (sum, count) = acc.sums.entry(word).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, v) in sum.iter_mut().zip(descriptor) {
            *s += *v as f64;
        }
        *count += 1;
        acc.frames.insert(frame_id);
        Ok(())
    }

    /// Records that `frame_id` observed the point without contributing a
    /// descriptor.
    pub fn add_frame(&mut self, point_id: u64, frame_id: u64) -> Result<(), MapError> {
        let acc = self.points.get_mut(&point_id).ok_or(MapError::UnknownPoint(point_id))?;
        acc.frames.insert(frame_id);
        Ok(())
    }

    /// Assigns the descriptor to its nearest word and records it.
    pub fn add_descriptor(&mut self, point_id: u64, descriptor: &[f32], frame_id: u64) -> Result<u32, MapError> {
        if descriptor.len() != self.dim() {
            return Err(MapError::DimensionMismatch {
                expected: self.dim(),
                got: descriptor.len(),
            });
        }
        let word = self.vocabulary.assign_word(descriptor);
        self.add_observation(point_id, word, descriptor, frame_id)?;
        Ok(word)
    }

    /// Normalized mean of everything contributed under (point, word).
    pub fn averaged_descriptor(&self, point_id: u64, word: u32) -> Option<Vec<f32>> {
        let (sum, _) = self.points.get(&point_id)?.sums.get(&word)?;
        let mut v: Vec<f32> = sum.iter().map(|s| *s as f32).collect();
        normalize(&mut v).then_some(v)
    }

    /// Freezes into an immutable map. Every point needs at least one
    /// observation; with a codebook the averaged descriptors are PQ-encoded.
    pub fn freeze(self, pq: Option<PqCodebook>) -> Result<GlobalMap, MapError> {
        if let Some(cb) = &pq {
            if cb.dim() != self.dim() {
                return Err(MapError::DimensionMismatch {
                    expected: self.dim(),
                    got: cb.dim(),
                });
            }
        }
        let mut records = Vec::with_capacity(self.points.len());
        for (id, acc) in self.points {
            if acc.sums.is_empty() {
                return Err(MapError::InvalidConfig(format!("point {id} has no observations")));
            }
            let mut entries = Vec::with_capacity(acc.sums.len());
            for (word, (sum, _)) in acc.sums {
                let mut v: Vec<f32> = sum.iter().map(|s| *s as f32).collect();
                if !normalize(&mut v) {
                    return Err(MapError::InvalidDescriptor("averaged descriptor vanished"));
                }
                let payload = match &pq {
                    Some(cb) => WordPayload::Code(cb.encode(&v)),
                    None => WordPayload::Plain(v),
                };
                entries.push((word, payload));
            }
            records.push(PointRecord {
                id,
                position: acc.position,
                entries,
                frames: acc.frames.into_iter().collect(),
            });
        }
        GlobalMap::from_records(self.vocabulary, pq, records)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct WordBlock {
    /// Point index per slot, ascending.
    points: Vec<u32>,
    plain: Vec<f32>,
    codes: Vec<u8>,
}

/// Query descriptor prepared for repeated comparisons against map entries.
pub enum PreparedQuery<'a> {
    Plain(&'a [f32]),
    Pq(DistanceTable),
}

/// Immutable map, shareable across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMap {
    vocabulary: Vocabulary,
    pq: Option<PqCodebook>,
    ids: Vec<u64>,
    positions: Vec<Vector3<f64>>,
    entry_ranges: Vec<(u32, u32)>,
    entries: Vec<WordEntry>,
    frame_ranges: Vec<(u32, u32)>,
    frames: Vec<u64>,
    words: Vec<WordBlock>,
    frame_index: HashMap<u64, Vec<u32>>,
}

impl GlobalMap {
    /// Builds the frozen layout from point records. Points are stored in
    /// ascending id order and word blocks list points in ascending index
    /// order, so the layout is canonical.
    pub fn from_records(vocabulary: Vocabulary, pq: Option<PqCodebook>, mut records: Vec<PointRecord>) -> Result<Self, MapError> {
        records.sort_by_key(|r| r.id);
        if records.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(MapError::Inconsistent("duplicate point id".into()));
        }
        let dim = vocabulary.dim();
        let word_count = vocabulary.word_count();
        let n = records.len();
        let mut map = GlobalMap {
            vocabulary,
            pq,
            ids: Vec::with_capacity(n),
            positions: Vec::with_capacity(n),
            entry_ranges: Vec::with_capacity(n),
            entries: Vec::new(),
            frame_ranges: Vec::with_capacity(n),
            frames: Vec::new(),
            words: vec![WordBlock::default(); word_count],
            frame_index: HashMap::new(),
        };
        for (index, rec) in records.into_iter().enumerate() {
            let index = index as u32;
            if rec.entries.is_empty() || rec.frames.is_empty() {
                return Err(MapError::Inconsistent(format!("point {} lacks entries or frames", rec.id)));
            }
            if rec.entries.windows(2).any(|w| w[0].0 >= w[1].0) || rec.frames.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MapError::Inconsistent(format!("point {} has unsorted entries or frames", rec.id)));
            }
            map.ids.push(rec.id);
            map.positions.push(rec.position);
            let start = map.entries.len() as u32;
            for (word, payload) in rec.entries {
                if word as usize >= word_count {
                    return Err(MapError::InvalidWord { word, word_count });
                }
                let block = &mut map.words[word as usize];
                let slot = block.points.len() as u32;
                block.points.push(index);
                match (&map.pq, payload) {
                    (None, WordPayload::Plain(v)) if v.len() == dim => block.plain.extend(v),
                    (Some(cb), WordPayload::Code(c)) if c.len() == cb.subquantizers() => {
                        if c.iter().any(|b| *b as usize >= cb.centroids_per_subspace()) {
                            return Err(MapError::Inconsistent("PQ code byte out of range".into()));
                        }
                        block.codes.extend(c)
                    }
                    _ => return Err(MapError::Inconsistent("descriptor payload does not match map storage".into())),
                }
                map.entries.push(WordEntry { word, slot });
            }
            map.entry_ranges.push((start, map.entries.len() as u32));
            let fstart = map.frames.len() as u32;
            for f in &rec.frames {
                map.frame_index.entry(*f).or_default().push(index);
            }
            map.frames.extend(rec.frames);
            map.frame_ranges.push((fstart, map.frames.len() as u32));
        }
        Ok(map)
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn pq(&self) -> Option<&PqCodebook> {
        self.pq.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.dim()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn index_of(&self, id: u64) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|i| i as u32)
    }

    pub fn point(&self, index: u32) -> MapPoint<'_> {
        let i = index as usize;
        let (es, ee) = self.entry_ranges[i];
        let (fs, fe) = self.frame_ranges[i];
        MapPoint {
            index,
            id: self.ids[i],
            position: self.positions[i],
            word_entries: &self.entries[es as usize..ee as usize],
            observing_frames: &self.frames[fs as usize..fe as usize],
        }
    }

    pub fn point_by_id(&self, id: u64) -> Result<MapPoint<'_>, MapError> {
        self.index_of(id).map(|i| self.point(i)).ok_or(MapError::UnknownPoint(id))
    }

    pub fn points(&self) -> impl Iterator<Item = MapPoint<'_>> {
        (0..self.len() as u32).map(|i| self.point(i))
    }

    pub fn position(&self, index: u32) -> Vector3<f64> {
        self.positions[index as usize]
    }

    pub fn point_id(&self, index: u32) -> u64 {
        self.ids[index as usize]
    }

    /// Number of descriptors stored under `word`.
    pub fn word_size(&self, word: u32) -> usize {
        self.words.get(word as usize).map_or(0, |b| b.points.len())
    }

    /// Point index per slot of `word`.
    pub fn word_points(&self, word: u32) -> &[u32] {
        self.words.get(word as usize).map_or(&[], |b| &b.points)
    }

    /// Owned record of a point, as written to disk.
    pub fn record(&self, index: u32) -> PointRecord {
        let p = self.point(index);
        PointRecord {
            id: p.id,
            position: p.position,
            entries: p.word_entries.iter().map(|e| (e.word, self.payload(e.word, e.slot))).collect(),
            frames: p.observing_frames.to_vec(),
        }
    }

    pub fn payload(&self, word: u32, slot: u32) -> WordPayload {
        let block = &self.words[word as usize];
        let s = slot as usize;
        match &self.pq {
            None => WordPayload::Plain(block.plain[s * self.dim()..(s + 1) * self.dim()].to_vec()),
            Some(cb) => {
                let m = cb.subquantizers();
                WordPayload::Code(block.codes[s * m..(s + 1) * m].to_vec())
            }
        }
    }

    /// Stored descriptor of an entry; decoded when the map is quantized.
    pub fn descriptor(&self, word: u32, slot: u32) -> Cow<'_, [f32]> {
        let block = &self.words[word as usize];
        let s = slot as usize;
        match &self.pq {
            None => Cow::Borrowed(&block.plain[s * self.dim()..(s + 1) * self.dim()]),
            Some(cb) => {
                let m = cb.subquantizers();
                Cow::Owned(cb.reconstruct(&block.codes[s * m..(s + 1) * m]))
            }
        }
    }

    pub fn prepare<'a>(&self, query: &'a [f32]) -> PreparedQuery<'a> {
        match &self.pq {
            None => PreparedQuery::Plain(query),
            Some(cb) => PreparedQuery::Pq(cb.table(query)),
        }
    }

    /// Distance from a prepared query to the descriptor in `slot` of `word`.
    /// For quantized maps this is the asymmetric distance.
    #[inline]
    pub fn distance(&self, query: &PreparedQuery<'_>, word: u32, slot: u32) -> f32 {
        let block = &self.words[word as usize];
        let s = slot as usize;
        match query {
            PreparedQuery::Plain(q) => {
                let d = self.dim();
                l2(q, &block.plain[s * d..(s + 1) * d])
            }
            PreparedQuery::Pq(table) => {
                let m = self.pq.as_ref().map_or(0, |cb| cb.subquantizers());
                table.distance(&block.codes[s * m..(s + 1) * m])
            }
        }
    }

    /// Indices of points observed by `frame_id`, ascending.
    pub fn frame_points(&self, frame_id: u64) -> &[u32] {
        self.frame_index.get(&frame_id).map_or(&[], |v| v)
    }

    /// Indices of all points sharing a frame with `index`, excluding itself,
    /// ascending.
    pub fn covisible(&self, index: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .point(index)
            .observing_frames
            .iter()
            .flat_map(|f| self.frame_points(*f).iter().copied())
            .filter(|q| *q != index)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Ids of the points covisible with `point_id`, ascending.
    pub fn covisible_points(&self, point_id: u64) -> Result<Vec<u64>, MapError> {
        let index = self.index_of(point_id).ok_or(MapError::UnknownPoint(point_id))?;
        Ok(self.covisible(index).into_iter().map(|i| self.ids[i as usize]).collect())
    }

    /// Whether two points share an observing frame (sorted-list merge).
    pub fn is_covisible(&self, a: u32, b: u32) -> bool {
        if a == b {
            return false;
        }
        let fa = self.point(a).observing_frames;
        let fb = self.point(b).observing_frames;
        let (mut i, mut j) = (0, 0);
        while i < fa.len() && j < fb.len() {
            match fa[i].cmp(&fb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// Full scan confirming that word blocks and point entries mirror each
    /// other exactly.
    pub fn check_consistency(&self) -> Result<(), MapError> {
        let word_count = self.vocabulary.word_count();
        for p in self.points() {
            for e in p.word_entries {
                if e.word as usize >= word_count {
                    return Err(MapError::InvalidWord { word: e.word, word_count });
                }
                if self.words[e.word as usize].points.get(e.slot as usize) != Some(&p.index) {
                    return Err(MapError::Inconsistent(format!("point {} entry for word {} is not indexed", p.id, e.word)));
                }
            }
        }
        for (w, block) in self.words.iter().enumerate() {
            for (slot, p) in block.points.iter().enumerate() {
                let found = self
                    .point(*p)
                    .word_entries
                    .iter()
                    .any(|e| e.word as usize == w && e.slot as usize == slot);
                if !found {
                    return Err(MapError::Inconsistent(format!("word {w} slot {slot} has no matching point entry")));
                }
            }
        }
        let indexed: usize = self.words.iter().map(|b| b.points.len()).sum();
        if indexed != self.entries.len() {
            return Err(MapError::Inconsistent("entry counts differ".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{normalize, ProductQuantizer};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        normalize(&mut v);
        v
    }

    fn vocab(rng: &mut impl Rng, words: usize, dim: usize) -> Vocabulary {
        Vocabulary::from_centroids(dim, (0..words).flat_map(|_| unit(rng, dim)).collect()).unwrap()
    }

    fn angle(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        dot.clamp(-1.0, 1.0).acos()
    }

    /// Random map with points observed by random frames out of `frames`.
    fn random_map(seed: u64, points: usize, frames: u64, pq: bool) -> GlobalMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let voc = vocab(&mut rng, 16, 16);
        let mut b = MapBuilder::new(voc);
        for id in 0..points as u64 {
            b.add_point(id * 3 + 1, Vector3::new(rng.random(), rng.random(), rng.random()));
            for _ in 0..rng.random_range(1..4) {
                let d = unit(&mut rng, 16);
                b.add_descriptor(id * 3 + 1, &d, rng.random_range(0..frames)).unwrap();
            }
        }
        let codebook = pq.then(|| {
            let data = crate::map::DescriptorBlock::from_vec(16, (0..300).flat_map(|_| unit(&mut rng, 16)).collect()).unwrap();
            let mut q = ProductQuantizer::new(4, 16);
            q.train(&data, 1).unwrap();
            q.into_codebook().unwrap()
        });
        b.freeze(codebook).unwrap()
    }

    #[test]
    fn identical_descriptors_average_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = MapBuilder::new(vocab(&mut rng, 4, 8));
        let d = unit(&mut rng, 8);
        b.add_point(7, Vector3::zeros());
        b.add_observation(7, 1, &d, 0).unwrap();
        b.add_observation(7, 1, &d, 1).unwrap();
        let avg = b.averaged_descriptor(7, 1).unwrap();
        assert!(avg.iter().zip(&d).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn orthogonal_descriptors_average_to_bisector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = MapBuilder::new(vocab(&mut rng, 4, 4));
        b.add_point(1, Vector3::zeros());
        b.add_observation(1, 0, &[1.0, 0.0, 0.0, 0.0], 0).unwrap();
        b.add_observation(1, 0, &[0.0, 1.0, 0.0, 0.0], 0).unwrap();
        let avg = b.averaged_descriptor(1, 0).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert!(avg.iter().zip(&[h, h, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn averaging_noisy_copies_approaches_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 64;
        let sigma = 0.05f32;
        let mut b = MapBuilder::new(vocab(&mut rng, 2, dim));
        let template = unit(&mut rng, dim);
        b.add_point(0, Vector3::zeros());
        for f in 0..100 {
            let mut v: Vec<f32> = template.iter().map(|x| x + sigma * rng.sample::<f32, _>(StandardNormal)).collect();
            normalize(&mut v);
            b.add_observation(0, 0, &v, f).unwrap();
        }
        let avg = b.averaged_descriptor(0, 0).unwrap();
        // per-copy angular deviation ≈ σ√D; averaging 100 copies shrinks it 10×
        let bound = 3.0 * sigma as f64 * (dim as f64).sqrt() / 10.0;
        assert!(angle(&avg, &template) < bound);
        let norm: f32 = avg.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn observation_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut b = MapBuilder::new(vocab(&mut rng, 4, 8));
        assert!(matches!(b.add_observation(1, 0, &[0.0; 8], 0), Err(MapError::UnknownPoint(1))));
        b.add_point(1, Vector3::zeros());
        assert!(matches!(b.add_observation(1, 0, &[0.0; 5], 0), Err(MapError::DimensionMismatch { .. })));
        assert!(matches!(b.add_observation(1, 9, &[0.0; 8], 0), Err(MapError::InvalidWord { .. })));
    }

    #[test]
    fn covisibility_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let voc = vocab(&mut rng, 4, 8);
        let d = unit(&mut rng, 8);
        let mut b = MapBuilder::new(voc.clone());
        b.add_point(10, Vector3::zeros());
        b.add_descriptor(10, &d, 3).unwrap();
        let single = b.freeze(None).unwrap();
        assert!(single.covisible_points(10).unwrap().is_empty());
        assert!(matches!(single.covisible_points(11), Err(MapError::UnknownPoint(11))));

        let mut b = MapBuilder::new(voc);
        for (id, frame) in [(10, 3), (20, 3), (30, 4)] {
            b.add_point(id, Vector3::zeros());
            b.add_descriptor(id, &d, frame).unwrap();
        }
        let map = b.freeze(None).unwrap();
        assert_eq!(map.covisible_points(10).unwrap(), vec![20]);
        assert_eq!(map.covisible_points(20).unwrap(), vec![10]);
        assert!(map.covisible_points(30).unwrap().is_empty());
    }

    #[test]
    fn covisibility_matches_brute_force() {
        let map = random_map(6, 300, 40, false);
        for p in map.points() {
            let brute: Vec<u64> = map
                .points()
                .filter(|q| q.index != p.index && q.observing_frames.iter().any(|f| p.observing_frames.contains(f)))
                .map(|q| q.id)
                .collect();
            assert_eq!(map.covisible_points(p.id).unwrap(), brute);
            for q in map.points() {
                assert_eq!(map.is_covisible(p.index, q.index), brute.contains(&q.id));
            }
        }
    }

    #[test]
    fn index_is_consistent_plain_and_quantized() {
        for pq in [false, true] {
            let map = random_map(7, 200, 30, pq);
            map.check_consistency().unwrap();
            let total: usize = (0..16).map(|w| map.word_size(w)).sum();
            assert_eq!(total, map.entry_count());
        }
    }

    #[test]
    fn quantized_distance_is_distance_to_reconstruction() {
        let map = random_map(8, 100, 10, true);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = unit(&mut rng, 16);
        let prepared = map.prepare(&q);
        for p in map.points() {
            for e in p.word_entries {
                let exact = l2(&q, &map.descriptor(e.word, e.slot));
                assert!((map.distance(&prepared, e.word, e.slot) - exact).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn word_blocks_list_points_in_order() {
        let map = random_map(10, 150, 20, false);
        for w in 0..16 {
            assert!(map.word_points(w).windows(2).all(|s| s[0] < s[1]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn covisibility_is_symmetric(seed in 0u64..1000) {
            let map = random_map(seed, 60, 15, false);
            for p in map.points() {
                for q in map.covisible(p.index) {
                    prop_assert!(map.covisible(q).contains(&p.index));
                }
            }
        }

        #[test]
        fn averaged_descriptors_are_unit(seed in 0u64..1000) {
            let map = random_map(seed, 40, 10, false);
            for p in map.points() {
                for e in p.word_entries {
                    let n: f32 = map.descriptor(e.word, e.slot).iter().map(|x| x * x).sum::<f32>().sqrt();
                    prop_assert!((n - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
