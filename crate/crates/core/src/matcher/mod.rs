//! Prioritized 2D-3D matching with bi-directional ratio tests and
//! covisibility-driven 3D-to-2D expansion.

mod frame;
mod priority;
mod search;

pub use frame::{
    decode_descriptor, encode_descriptor, read_frames, CameraFeaturesRecord, FeatureRecord, FrameCamera, FrameRecord,
    QueryFrame,
};
pub use priority::{image_cost_factor, PriorityState, Selected, COST_LOG_BASE};
pub use search::{run_matching, Matcher};

use crate::prior::PriorError;

pub const DEFAULT_RATIO: f32 = 0.9;
/// Classic Active Search ratio, offered for dense maps.
pub const STRICT_RATIO: f32 = 0.7;
pub const DEFAULT_BATCH_SIZE: usize = 20;
/// Expansion matches may be at most this many times farther than the match
/// that generated them.
pub const EXPANSION_DISTANCE_FACTOR: f32 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum MatchError {
    #[error("invalid query frame: {0}")]
    InvalidFrame(String),
    #[error("descriptor dimension {frame} does not match map dimension {map}")]
    DimensionMismatch { frame: usize, map: usize },
    #[error("camera {0} is not part of the rig")]
    UnknownCamera(u32),
    #[error("invalid matcher configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatcherConfig {
    pub ratio_forward: f32,
    pub ratio_backward: f32,
    pub batch_size: usize,
    /// Scale feature costs by the per-image factor; off means `c_I ≡ 1`.
    pub balance: bool,
    pub expansion: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            ratio_forward: DEFAULT_RATIO,
            ratio_backward: DEFAULT_RATIO,
            batch_size: DEFAULT_BATCH_SIZE,
            balance: true,
            expansion: true,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.batch_size == 0 {
            return Err(MatchError::InvalidConfig("batch size must be at least 1".into()));
        }
        for (name, r) in [("ratio_forward", self.ratio_forward), ("ratio_backward", self.ratio_backward)] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(MatchError::InvalidConfig(format!("{name} = {r} must be in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatchOrigin {
    /// Feature to point (2D→3D).
    Forward,
    /// Point to feature (3D→2D) around an earlier forward match.
    Expansion,
}

/// A matched (camera, feature) and map point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub camera_id: u32,
    /// Index of the feature within its camera.
    pub feature: u32,
    /// Index of the point in the map.
    pub point: u32,
    pub point_id: u64,
    pub distance: f32,
    pub origin: MatchOrigin,
    /// Distance of the generating forward match, for expansions.
    pub generating_distance: Option<f32>,
}

/// Work counters of one matching run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchStats {
    pub features_total: usize,
    pub features_processed: usize,
    /// Feature against candidate point descriptors of its word.
    pub forward_comparisons: u64,
    /// Point descriptor against all frame features, after a forward ratio pass.
    pub backward_comparisons: u64,
    /// Covisible point descriptors against all frame features.
    pub expansion_comparisons: u64,
    pub forward_matches: usize,
    pub expansion_matches: usize,
    pub batches: usize,
}

impl MatchStats {
    pub fn descriptor_comparisons(&self) -> u64 {
        self.forward_comparisons + self.backward_comparisons + self.expansion_comparisons
    }
}
