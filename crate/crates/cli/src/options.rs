use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mcloc::sim::{SceneSpec, ThresholdClass};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{config_err, CliError};

/// Reads `config` (if any) and lays the flags set on the command line over
/// it. Keys unknown to `T` are rejected.
pub(crate) fn layered<T>(flags: &T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut base = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            // parse once on its own so errors point at the file
            serde_json::from_value::<T>(value.clone()).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            value
        }
        None => serde_json::Value::Object(Default::default()),
    };
    let serde_json::Value::Object(map) = &mut base else {
        return Err(config_err("configuration file must hold a JSON object"));
    };
    if let serde_json::Value::Object(over) = serde_json::to_value(flags).map_err(config_err)? {
        for (k, v) in over {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(config_err)
}

pub(crate) fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| config_err(format!("missing required option `{name}`")))
}

/// Settings shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Execution {
    pub seed: u64,
    pub threads: usize,
    pub deterministic: bool,
}

impl Execution {
    pub fn new(seed: Option<u64>, threads: Option<usize>, deterministic: Option<bool>) -> Result<Self, CliError> {
        let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if threads == 0 {
            return Err(config_err("threads must be at least 1"));
        }
        Ok(Self {
            seed: seed.unwrap_or(0),
            threads,
            deterministic: deterministic.unwrap_or(false),
        })
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let n = if self.deterministic { 1 } else { self.threads };
        rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(crate::runtime_err)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// Independent random poses.
    Random,
    /// Constant-velocity line along +x.
    Straight,
    /// Closed horizontal circle around the scene center.
    Circle,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOptions {
    /// JSON file with default values for these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Full scene description; only settable from the config file.
    #[arg(skip)]
    pub scene: Option<SceneSpec>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub extent: Option<f64>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub descriptor_noise: Option<f64>,
    #[arg(long)]
    pub bearing_noise_deg: Option<f64>,
    /// Vocabulary size W.
    #[arg(long)]
    pub words: Option<usize>,
    #[arg(long)]
    pub cameras: Option<usize>,
    /// Number of query frames.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, value_enum)]
    pub trajectory: Option<TrajectoryKind>,
    /// Trajectory steps between query frames.
    #[arg(long)]
    pub query_every: Option<usize>,
    #[arg(long)]
    pub step_length: Option<f64>,
    /// Odometry translation drift per meter.
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long)]
    pub odometry_rotation_sigma: Option<f64>,
    #[arg(long)]
    pub odometry_translation_sigma: Option<f64>,
    /// Prior position radius d, meters.
    #[arg(long)]
    pub prior_d: Option<f64>,
    /// Prior heading half-angle θ, degrees.
    #[arg(long)]
    pub prior_theta_deg: Option<f64>,
    /// Product quantization subvectors M.
    #[arg(long)]
    pub pq_m: Option<usize>,
    /// Product quantization centroids per subvector.
    #[arg(long)]
    pub pq_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildMapOptions {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `scene.json` written by `simulate`.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub words: Option<usize>,
    #[arg(long)]
    pub pq_m: Option<usize>,
    #[arg(long)]
    pub pq_k: Option<usize>,
    /// Disable product quantization even if the scene enables it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_pq: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeOptions {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pose priors; frames without an entry run without a prior.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Override every prior's position radius d, meters.
    #[arg(long)]
    pub prior_d: Option<f64>,
    /// Override every prior's heading half-angle θ, degrees.
    #[arg(long)]
    pub prior_theta_deg: Option<f64>,
    /// Base cone half-angle α of the prior filter, degrees.
    #[arg(long)]
    pub alpha_deg: Option<f64>,
    /// Ratio test threshold τ for both directions.
    #[arg(long)]
    pub ratio: Option<f32>,
    #[arg(long)]
    pub ratio_forward: Option<f32>,
    #[arg(long)]
    pub ratio_backward: Option<f32>,
    /// Features per matching batch B.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Per-image cost balancing; `false` sets the factor to 1.
    #[arg(long)]
    pub balance: Option<bool>,
    #[arg(long)]
    pub expansion: Option<bool>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub min_inlier_ratio: Option<f64>,
    #[arg(long)]
    pub min_camera_fraction: Option<f64>,
    #[arg(long)]
    pub inlier_angle_deg: Option<f64>,
    /// RANSAC iterations per batch.
    #[arg(long)]
    pub ransac_budget: Option<usize>,
    #[arg(long)]
    pub refine: Option<bool>,
    /// Exhaustive matching followed by plain RANSAC.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub reference: Option<bool>,
    #[arg(long)]
    pub reference_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuseOptions {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long)]
    pub odometry: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth trajectory for the ATE summary.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Window size N.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub match_sigma_deg: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
}

fn parse_class(s: &str) -> Result<ThresholdClass, String> {
    let (h, p) = s.split_once('/').ok_or_else(|| format!("expected DEG/M, got `{s}`"))?;
    let heading_deg: f64 = h.trim().parse().map_err(|e| format!("{h}: {e}"))?;
    let position_m: f64 = p.trim().parse().map_err(|e| format!("{p}: {e}"))?;
    Ok(ThresholdClass { heading_deg, position_m })
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkOptions {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Threshold classes as DEG/M, repeatable.
    #[arg(long, value_parser = parse_class)]
    pub classes: Option<Vec<ThresholdClass>>,
    /// Measure position error in the ground plane only.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub planar: Option<bool>,
    /// Also write the table as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
}
