use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::info;
use mcloc::fusion::{write_odometry, write_trajectory};
use mcloc::geometry::Pose;
use mcloc::map::save_map;
use mcloc::prior::priors_to_json;
use mcloc::sim::{
    circle_trajectory, generate_scene, perturb_prior, random_poses, render_frame, simulate_odometry, straight_trajectory,
    DriftModel, GroundTruthRecord, Scene, SceneSpec,
};
use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_file, write_json};
use crate::options::{layered, required, BuildMapOptions, Execution, SimulateOptions, TrajectoryKind};
use crate::{config_err, runtime_err, CliError};

pub(crate) const SCENE_FILE: &str = "scene.json";
pub(crate) const RIG_FILE: &str = "rig.json";
pub(crate) const MAP_FILE: &str = "map.bin";
pub(crate) const QUERIES_FILE: &str = "queries.jsonl";
pub(crate) const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub(crate) const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub(crate) const ODOMETRY_FILE: &str = "odometry.jsonl";
pub(crate) const PRIORS_FILE: &str = "priors.json";

/// Resolved simulation settings, written as `scene.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationManifest {
    pub scene: SceneSpec,
    pub trajectory: TrajectoryKind,
    pub frames: usize,
    pub query_every: usize,
    pub step_length: f64,
    pub drift: DriftModel,
    pub prior_d: f64,
    pub prior_theta_deg: f64,
    pub pq: Option<[usize; 2]>,
}

fn resolve(o: &SimulateOptions, exec: &Execution) -> Result<SimulationManifest, CliError> {
    let mut scene = o.scene.clone().unwrap_or_default();
    if let Some(v) = o.points {
        scene.point_count = v;
    }
    if let Some(v) = o.extent {
        scene.extent_max[0] = scene.extent_min[0] + v;
        scene.extent_max[1] = scene.extent_min[1] + v;
    }
    if let Some(v) = o.outlier_fraction {
        scene.outlier_fraction = v;
    }
    if let Some(v) = o.descriptor_noise {
        scene.descriptor_noise = v;
    }
    if let Some(v) = o.bearing_noise_deg {
        scene.bearing_noise_deg = v;
    }
    if let Some(v) = o.words {
        scene.word_count = v;
        scene.vocabulary_training = scene.vocabulary_training.max(v);
    }
    if let Some(v) = o.cameras {
        scene.camera_count = v;
    }
    if o.seed.is_some() {
        scene.seed = exec.seed;
    }
    scene.validate().map_err(config_err)?;

    let mut drift = DriftModel::default();
    if let Some(v) = o.drift {
        drift.translation_drift = v;
    }
    if let Some(v) = o.odometry_rotation_sigma {
        drift.rotation_sigma = v;
    }
    if let Some(v) = o.odometry_translation_sigma {
        drift.translation_sigma = v;
    }
    let m = SimulationManifest {
        scene,
        trajectory: o.trajectory.unwrap_or(TrajectoryKind::Random),
        frames: o.frames.unwrap_or(200),
        query_every: o.query_every.unwrap_or(1),
        step_length: o.step_length.unwrap_or(1.0),
        drift,
        prior_d: o.prior_d.unwrap_or(mcloc::prior::DEFAULT_POSITION_RADIUS),
        prior_theta_deg: o.prior_theta_deg.unwrap_or(mcloc::prior::DEFAULT_HEADING_HALF_ANGLE_DEG),
        pq: match (o.pq_m, o.pq_k) {
            (Some(m), Some(k)) => Some([m, k]),
            (None, None) => None,
            _ => return Err(config_err("pq_m and pq_k must be given together")),
        },
    };
    if m.frames < 2 {
        return Err(config_err("frames: at least two frames are needed for odometry"));
    }
    if m.query_every == 0 {
        return Err(config_err("query_every: must be at least 1"));
    }
    if !(m.step_length > 0.0 && m.step_length.is_finite()) {
        return Err(config_err("step_length: must be positive"));
    }
    if !(m.prior_d >= 0.0 && m.prior_d.is_finite()) {
        return Err(config_err("prior_d: must be non-negative"));
    }
    if !(0.0..90.0).contains(&m.prior_theta_deg) {
        return Err(config_err("prior_theta_deg: must be in [0, 90)"));
    }
    Ok(m)
}

/// Full ground-truth trajectory; query frames sit every `query_every` steps.
fn trajectory(m: &SimulationManifest) -> Vec<Pose> {
    let s = &m.scene;
    let z = s.extent_min[2] + s.rig_height;
    let steps = (m.frames - 1) * m.query_every;
    match m.trajectory {
        // query_every does not apply to independent poses
        TrajectoryKind::Random => {
            let margin = 0.1 * (s.extent_max[0] - s.extent_min[0]).min(s.extent_max[1] - s.extent_min[1]);
            random_poses(s, m.frames, margin, s.seed)
        }
        TrajectoryKind::Straight => {
            let margin = 0.05 * (s.extent_max[0] - s.extent_min[0]);
            let start = Pose::new(
                UnitQuaternion::identity(),
                Vector3::new(s.extent_min[0] + margin, 0.5 * (s.extent_min[1] + s.extent_max[1]), z),
            );
            straight_trajectory(&start, steps, m.step_length)
        }
        TrajectoryKind::Circle => {
            let center = Vector3::new(0.5 * (s.extent_min[0] + s.extent_max[0]), 0.5 * (s.extent_min[1] + s.extent_max[1]), z);
            let radius = 0.3 * (s.extent_max[0] - s.extent_min[0]).min(s.extent_max[1] - s.extent_min[1]);
            circle_trajectory(&center, radius, steps)
        }
    }
}

fn query_steps(m: &SimulationManifest) -> Vec<usize> {
    match m.trajectory {
        TrajectoryKind::Random => (0..m.frames).collect(),
        _ => (0..m.frames).map(|k| k * m.query_every).collect(),
    }
}

fn build_map(scene: &Scene, pq: Option<[usize; 2]>, path: &Path) -> Result<(), CliError> {
    let map = scene.build_map(pq.map(|[m, k]| (m, k))).map_err(config_err)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime_err)?;
    }
    save_map(&map, path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
    info!("map with {} points written to {}", map.len(), path.display());
    Ok(())
}

pub(crate) fn run(flags: SimulateOptions) -> Result<(), CliError> {
    let o = layered(&flags, flags.config.as_deref())?;
    let exec = Execution::new(o.seed, o.threads, o.deterministic)?;
    let out = required(&o.out_dir, "out_dir")?.clone();
    let m = resolve(&o, &exec)?;
    let rig = m.scene.rig().map_err(config_err)?;
    let pool = exec.pool()?;

    let scene = generate_scene(&m.scene).map_err(config_err)?;
    std::fs::create_dir_all(&out).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
    write_json(&out.join(SCENE_FILE), &m)?;
    write_json(&out.join(RIG_FILE), &rig.to_record())?;
    build_map(&scene, m.pq, &out.join(MAP_FILE))?;

    let poses = trajectory(&m);
    let steps = query_steps(&m);
    let seed = m.scene.seed;
    let rendered = pool.install(|| {
        steps
            .par_iter()
            .map(|&k| render_frame(&rig, &poses[k], &scene, k as u64, seed))
            .collect::<Result<Vec<_>, _>>()
    });
    let rendered = rendered.map_err(runtime_err)?;
    write_file(&out.join(QUERIES_FILE), |w| {
        for r in &rendered {
            writeln!(w, "{}", r.frame.to_json())?;
        }
        Ok(())
    })?;

    let truth: Vec<GroundTruthRecord> = steps
        .iter()
        .map(|&k| GroundTruthRecord {
            frame_id: k as u64,
            timestamp: k as f64,
            pose: (&poses[k]).into(),
        })
        .collect();
    write_file(&out.join(GROUND_TRUTH_FILE), |w| {
        for t in &truth {
            writeln!(w, "{}", serde_json::to_string(t).expect("record serializes"))?;
        }
        Ok(())
    })?;
    let samples: Vec<(f64, Pose)> = poses.iter().enumerate().map(|(k, p)| (k as f64, *p)).collect();
    write_file(&out.join(TRAJECTORY_FILE), |w| write_trajectory(w, &samples))?;

    let odometry = simulate_odometry(&poses, &m.drift, seed).map_err(config_err)?;
    write_file(&out.join(ODOMETRY_FILE), |w| write_odometry(w, &odometry))?;

    let mut priors = BTreeMap::new();
    for &k in &steps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_add(1).wrapping_mul(0xA076_1D64_78BD_642F));
        let p = perturb_prior(&poses[k], m.prior_d, m.prior_theta_deg.to_radians(), &mut rng).map_err(config_err)?;
        priors.insert(k as u64, p);
    }
    let priors_json = priors_to_json(&priors);
    write_file(&out.join(PRIORS_FILE), |w| writeln!(w, "{priors_json}"))?;

    let features: usize = rendered.iter().map(|r| r.frame.feature_count()).sum();
    println!(
        "simulated {} points, {} query frames ({:.0} features/frame), {} odometry steps in {}",
        scene.points.len(),
        rendered.len(),
        features as f64 / rendered.len() as f64,
        odometry.len(),
        out.display()
    );
    Ok(())
}

pub(crate) fn run_build_map(flags: BuildMapOptions) -> Result<(), CliError> {
    let o = layered(&flags, flags.config.as_deref())?;
    let exec = Execution::new(o.seed, o.threads, o.deterministic)?;
    let mut m: SimulationManifest = read_json(required(&o.scene, "scene")?)?;
    let out = required(&o.out, "out")?;
    if let Some(w) = o.words {
        m.scene.word_count = w;
        m.scene.vocabulary_training = m.scene.vocabulary_training.max(w);
    }
    if o.seed.is_some() {
        m.scene.seed = exec.seed;
    }
    match (o.pq_m, o.pq_k) {
        (Some(a), Some(b)) => m.pq = Some([a, b]),
        (None, None) => {}
        _ => return Err(config_err("pq_m and pq_k must be given together")),
    }
    if o.no_pq.unwrap_or(false) {
        m.pq = None;
    }
    m.scene.validate().map_err(config_err)?;
    let scene = generate_scene(&m.scene).map_err(config_err)?;
    build_map(&scene, m.pq, out)?;
    println!("map with {} points written to {}", scene.points.len(), out.display());
    Ok(())
}
