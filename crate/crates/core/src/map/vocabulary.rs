use super::kmeans::{kmeans, nearest, KMeansParams};
use super::{DescriptorBlock, MapError};

pub const DEFAULT_WORD_COUNT: usize = 1024;

/// Visual vocabulary: `W` unit-norm centroids partitioning descriptor space.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    dim: usize,
    centroids: Vec<f32>,
}

impl Vocabulary {
    pub fn from_centroids(dim: usize, centroids: Vec<f32>) -> Result<Self, MapError> {
        if dim == 0 || centroids.is_empty() || centroids.len() % dim != 0 {
            return Err(MapError::DimensionMismatch {
                expected: dim,
                got: centroids.len(),
            });
        }
        Ok(Self { dim, centroids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn word_count(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, word: u32) -> &[f32] {
        let w = word as usize;
        &self.centroids[w * self.dim..(w + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Exact nearest centroid; ties go to the lowest word id.
    pub fn assign_word(&self, descriptor: &[f32]) -> u32 {
        debug_assert_eq!(descriptor.len(), self.dim);
        nearest(&self.centroids, self.dim, descriptor).0 as u32
    }
}

/// k-means++ seeded k-means over the training descriptors: at most 25 Lloyd
/// iterations, stopping early when the quantization error changes by less
/// than 1e-4 relative. Deterministic for a fixed seed.
pub fn build_vocabulary(training: &DescriptorBlock, word_count: usize, seed: u64) -> Result<Vocabulary, MapError> {
    if word_count == 0 {
        return Err(MapError::InvalidConfig("word count must be at least 1".into()));
    }
    if training.len() < word_count {
        return Err(MapError::InsufficientTrainingData {
            needed: word_count,
            got: training.len(),
        });
    }
    let params = KMeansParams {
        max_iterations: 25,
        relative_tolerance: 1e-4,
        unit_centroids: true,
    };
    let centroids = kmeans(training.as_slice(), training.dim(), word_count, seed, params);
    Vocabulary::from_centroids(training.dim(), centroids)
}
