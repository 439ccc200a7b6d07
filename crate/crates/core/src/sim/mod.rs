//! Synthetic worlds for desk-scale experiments: scenes with descriptor
//! templates, rendered multi-camera query frames, trajectories, drifting
//! odometry, pose priors and error tables.

mod eval;
mod render;
mod trajectory;

pub use eval::{absolute_trajectory_error, evaluate, pose_errors, ClassRow, ErrorTable, ThresholdClass, DEFAULT_CLASSES};
pub use render::{render_frame, FeatureLabel, RenderedFrame};
pub use trajectory::{
    circle_trajectory, perturb_prior, random_poses, simulate_odometry, straight_trajectory, DriftModel, GroundTruthRecord,
};

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::CameraRig;
use crate::map::{build_vocabulary, normalize, DescriptorBlock, GlobalMap, MapBuilder, MapError, PqCodebook, DEFAULT_WORD_COUNT};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scene spec: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("frame ids do not match: {0}")]
    FrameMismatch(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Parameters of a synthetic world. Descriptor noise `σ_d` is the expected
/// norm of the perturbation: each of the `D` components gets `σ_d/√D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub point_count: usize,
    pub extent_min: [f64; 3],
    pub extent_max: [f64; 3],
    pub descriptor_dim: usize,
    pub descriptor_noise: f64,
    pub outlier_fraction: f64,
    pub bearing_noise_deg: f64,
    /// Points farther apart than this never share a mapping frame.
    pub cell_size: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Noisy descriptors contributed to the map per point.
    pub observations_per_point: usize,
    pub word_count: usize,
    /// Descriptors sampled for vocabulary training.
    pub vocabulary_training: usize,
    pub camera_count: usize,
    pub fov_half_angle_deg: f64,
    pub lever_arm: f64,
    /// Height of the rig above `extent_min[2]`.
    pub rig_height: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            point_count: 20_000,
            extent_min: [0.0, 0.0, 0.0],
            extent_max: [200.0, 200.0, 20.0],
            descriptor_dim: 32,
            descriptor_noise: 0.25,
            outlier_fraction: 0.3,
            bearing_noise_deg: 0.1,
            cell_size: 40.0,
            min_range: 1.0,
            max_range: 40.0,
            observations_per_point: 3,
            word_count: DEFAULT_WORD_COUNT,
            vocabulary_training: 20_000,
            camera_count: 4,
            fov_half_angle_deg: 50.0,
            lever_arm: 0.5,
            rig_height: 1.5,
            seed: 0,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidSpec {
        field,
        reason: reason.into(),
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.point_count == 0 {
            return Err(invalid("point_count", "must be positive"));
        }
        for k in 0..3 {
            if !(self.extent_max[k] > self.extent_min[k]) || !self.extent_min[k].is_finite() || !self.extent_max[k].is_finite() {
                return Err(invalid("extent_max", "must exceed extent_min on every axis"));
            }
        }
        if self.descriptor_dim == 0 {
            return Err(invalid("descriptor_dim", "must be positive"));
        }
        if !(self.descriptor_noise >= 0.0 && self.descriptor_noise.is_finite()) {
            return Err(invalid("descriptor_noise", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(invalid("outlier_fraction", format!("{} is outside [0, 1)", self.outlier_fraction)));
        }
        if !(self.bearing_noise_deg >= 0.0 && self.bearing_noise_deg < 10.0) {
            return Err(invalid("bearing_noise_deg", "must be in [0, 10)"));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(invalid("cell_size", "must be positive"));
        }
        if !(self.min_range >= 0.0 && self.max_range > self.min_range && self.max_range.is_finite()) {
            return Err(invalid("max_range", "must exceed min_range"));
        }
        if self.observations_per_point == 0 {
            return Err(invalid("observations_per_point", "must be positive"));
        }
        if self.word_count == 0 {
            return Err(invalid("word_count", "must be positive"));
        }
        if self.vocabulary_training < self.word_count {
            return Err(invalid("vocabulary_training", "must be at least word_count"));
        }
        if self.camera_count == 0 {
            return Err(invalid("camera_count", "must be positive"));
        }
        if !(self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg < 90.0) {
            return Err(invalid("fov_half_angle_deg", "must be in (0, 90)"));
        }
        if !(self.lever_arm >= 0.0 && self.lever_arm.is_finite()) {
            return Err(invalid("lever_arm", "must be non-negative"));
        }
        if !self.rig_height.is_finite() {
            return Err(invalid("rig_height", "must be finite"));
        }
        Ok(())
    }

    pub fn rig(&self) -> Result<CameraRig, SimError> {
        Ok(CameraRig::ring(self.camera_count, self.fov_half_angle_deg.to_radians(), self.lever_arm)?)
    }

    /// Side of a mapping-frame cube; its diagonal equals `cell_size`.
    fn cube_side(&self) -> f64 {
        self.cell_size / 3f64.sqrt()
    }

    /// Mapping frames containing `p`: cubes of side `s` placed every `s/2`,
    /// so each point lies in eight of them.
    pub fn frames_of(&self, p: &Vector3<f64>) -> [u64; 8] {
        let h = self.cube_side() / 2.0;
        let mut cells = [[0u64; 2]; 3];
        let mut dims = [0u64; 3];
        for k in 0..3 {
            dims[k] = ((self.extent_max[k] - self.extent_min[k]) / h).ceil() as u64 + 2;
            let u = (((p[k] - self.extent_min[k]) / h).floor().max(0.0) as u64).min(dims[k] - 2);
            // window m covers [(m-1)h, (m+1)h), shifted by one so ids stay unsigned
            cells[k] = [u, u + 1];
        }
        let mut out = [0u64; 8];
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b, c) = (cells[0][i & 1], cells[1][(i >> 1) & 1], cells[2][(i >> 2) & 1]);
            *o = a + dims[0] * (b + dims[1] * c);
        }
        out
    }

    /// `template + N(0, σ/√D)` per component, renormalized.
    pub fn noisy(&self, template: &[f32], rng: &mut impl Rng) -> Vec<f32> {
        let sigma = self.descriptor_noise / (self.descriptor_dim as f64).sqrt();
        let mut v: Vec<f32> = if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("valid sigma");
            template.iter().map(|t| (*t as f64 + n.sample(rng)) as f32).collect()
        } else {
            template.to_vec()
        };
        if !normalize(&mut v) {
            v = template.to_vec();
        }
        v
    }
}

/// Uniform random unit vector.
pub fn random_unit_descriptor(dim: usize, rng: &mut impl Rng) -> Vec<f32> {
    loop {
        let mut v: Vec<f32> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
        if normalize(&mut v) {
            return v;
        }
    }
}

/// Generated world: points with templates and their map observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    /// Point ids are indices.
    pub points: Vec<Vector3<f64>>,
    pub templates: DescriptorBlock,
    pub observations: Vec<MapObservation>,
    pub observation_descriptors: DescriptorBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MapObservation {
    pub point_id: u64,
    pub frame_id: u64,
    /// Row in `Scene::observation_descriptors`.
    pub descriptor: usize,
}

/// Deterministic for a fixed `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::with_capacity(spec.point_count);
    let mut templates = DescriptorBlock::new(spec.descriptor_dim);
    for _ in 0..spec.point_count {
        let p = Vector3::from_fn(|k, _| rng.random_range(spec.extent_min[k]..spec.extent_max[k]));
        points.push(p);
        templates.push(&random_unit_descriptor(spec.descriptor_dim, &mut rng))?;
    }
    let mut observations = Vec::with_capacity(spec.point_count * spec.observations_per_point);
    let mut descs = DescriptorBlock::new(spec.descriptor_dim);
    for (id, p) in points.iter().enumerate() {
        let frames = spec.frames_of(p);
        for k in 0..spec.observations_per_point {
            let d = spec.noisy(templates.row(id), &mut rng);
            observations.push(MapObservation {
                point_id: id as u64,
                frame_id: frames[k % frames.len()],
                descriptor: descs.push(&d)?,
            });
        }
    }
    Ok(Scene {
        spec: spec.clone(),
        points,
        templates,
        observations,
        observation_descriptors: descs,
    })
}

impl Scene {
    /// Trains a vocabulary on a sample of the observations and builds the
    /// map; every point is registered in all of its mapping frames.
    pub fn build_map(&self, pq: Option<(usize, usize)>) -> Result<GlobalMap, SimError> {
        let spec = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0f_6a9);
        let n = self.observations.len();
        let take = spec.vocabulary_training.min(n);
        let mut picked: Vec<usize> = sample(&mut rng, n, take).into_vec();
        picked.sort_unstable();
        let mut training = DescriptorBlock::new(spec.descriptor_dim);
        for i in &picked {
            training.push(self.observation_descriptors.row(self.observations[*i].descriptor))?;
        }
        let vocab = build_vocabulary(&training, spec.word_count, spec.seed)?;
        let codebook = match pq {
            Some((m, k)) => Some(PqCodebook::train(&training, m, k, spec.seed)?),
            None => None,
        };
        let mut b = MapBuilder::new(vocab);
        for (id, p) in self.points.iter().enumerate() {
            b.add_point(id as u64, *p);
            for f in spec.frames_of(p) {
                b.add_frame(id as u64, f)?;
            }
        }
        for o in &self.observations {
            b.add_descriptor(o.point_id, self.observation_descriptors.row(o.descriptor), o.frame_id)?;
        }
        Ok(b.freeze(codebook)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneSpec {
        SceneSpec {
            point_count: 2000,
            extent_max: [100.0, 100.0, 20.0],
            word_count: 32,
            vocabulary_training: 2000,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&small()).unwrap();
        let b = generate_scene(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn zero_noise_keeps_templates() {
        let s = generate_scene(&SceneSpec {
            descriptor_noise: 0.0,
            ..small()
        })
        .unwrap();
        for o in &s.observations {
            assert_eq!(s.observation_descriptors.row(o.descriptor), s.templates.row(o.point_id as usize));
        }
        let map = s.build_map(None).unwrap();
        for p in map.points().take(200) {
            for e in p.word_entries {
                let d = map.descriptor(e.word, e.slot);
                let t = s.templates.row(p.id as usize);
                assert!(d.iter().zip(t).all(|(a, b)| (a - b).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn noise_has_expected_norm() {
        let spec = SceneSpec {
            descriptor_dim: 128,
            ..small()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_unit_descriptor(128, &mut rng);
        let mut mean = 0.0;
        for _ in 0..2000 {
            let v = spec.noisy(&t, &mut rng);
            mean += crate::map::l2(&v, &t) as f64 / 2000.0;
        }
        // renormalization shortens the perturbation slightly
        assert!((mean - 0.25).abs() < 0.02, "{mean}");
    }

    #[test]
    fn covisibility_reflects_proximity() {
        let spec = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = spec.cube_side() / 2.0;
        for _ in 0..20_000 {
            let a = Vector3::from_fn(|k, _| rng.random_range(spec.extent_min[k]..spec.extent_max[k]));
            let near = a + Vector3::from_fn(|_, _| rng.random_range(-0.999 * h..0.999 * h));
            let fa = spec.frames_of(&a);
            let fb = spec.frames_of(&near);
            let shared = fa.iter().any(|f| fb.contains(f));
            if (0..3).all(|k| near[k] >= spec.extent_min[k]) {
                assert!(shared, "{a} {near}");
            }
            let far = a + Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)).normalize() * spec.cell_size * rng.random_range(1.0001..3.0);
            if (0..3).all(|k| far[k] >= spec.extent_min[k] && far[k] <= spec.extent_max[k]) && (far - a).norm() > spec.cell_size {
                let ff = spec.frames_of(&far);
                assert!(!fa.iter().any(|f| ff.contains(f)), "{a} {far}");
            }
        }
    }

    #[test]
    fn built_map_records_frames_and_covisibility() {
        let s = generate_scene(&small()).unwrap();
        let map = s.build_map(None).unwrap();
        assert_eq!(map.len(), 2000);
        for p in map.points().take(50) {
            assert_eq!(p.observing_frames.len(), 8);
        }
        let a = map.index_of(0).unwrap();
        for b in map.covisible(a) {
            let d = (map.position(a) - map.position(b)).norm();
            assert!(d <= s.spec.cell_size);
        }
    }

    #[test]
    fn validation_names_the_field() {
        let e = SceneSpec {
            outlier_fraction: 1.5,
            ..SceneSpec::default()
        }
        .validate()
        .unwrap_err();
        assert!(e.to_string().contains("outlier_fraction"), "{e}");
        assert!(SceneSpec {
            extent_max: [0.0, 1.0, 1.0],
            ..SceneSpec::default()
        }
        .validate()
        .is_err());
        let json = r#"{"point_count": 10, "bogus": 1}"#;
        assert!(serde_json::from_str::<SceneSpec>(json).is_err());
        let json = r#"{"point_count": 10}"#;
        assert_eq!(serde_json::from_str::<SceneSpec>(json).unwrap().point_count, 10);
    }
}
