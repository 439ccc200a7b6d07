//! Sparse 3D map: vocabulary-partitioned averaged descriptors, optional
//! product quantization, covisibility records and the binary file format.

mod descriptor;
mod io;
mod kmeans;
mod pq;
mod store;
mod vocabulary;

pub use descriptor::{l2, l2_sq, normalize, Descriptor, DescriptorBlock};
pub use io::{load_map, read_map, save_map, write_map, MAP_MAGIC};
pub use pq::{DistanceTable, PqCodebook, ProductQuantizer, DEFAULT_CENTROIDS, DEFAULT_SUBQUANTIZERS};
pub use store::{GlobalMap, MapBuilder, MapPoint, PointRecord, PreparedQuery, WordEntry, WordPayload};
pub use vocabulary::{build_vocabulary, Vocabulary, DEFAULT_WORD_COUNT};

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("insufficient training data: need {needed} descriptors, got {got}")]
    InsufficientTrainingData { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown point id {0}")]
    UnknownPoint(u64),
    #[error("word id {word} out of range for a vocabulary of {word_count} words")]
    InvalidWord { word: u32, word_count: usize },
    #[error("product quantizer has not been trained")]
    Untrained,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(&'static str),
    #[error("inconsistent map: {0}")]
    Inconsistent(String),
    #[error("map file format error: {0}")]
    Format(String),
    #[error("not a map file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported map file version {0:?}")]
    VersionMismatch(String),
    #[error("map file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("map file is truncated")]
    Truncated,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
