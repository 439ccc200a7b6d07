use std::io::BufRead;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::MatchError;
use crate::geometry::BearingFeature;
use crate::map::DescriptorBlock;

/// Features of one camera of a query frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCamera {
    pub camera_id: u32,
    pub features: Vec<BearingFeature>,
}

/// All features observed by the rig at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryFrame {
    pub frame_id: u64,
    cameras: Vec<FrameCamera>,
    descriptors: DescriptorBlock,
}

impl QueryFrame {
    /// Cameras are reordered by id; every feature must belong to its camera
    /// and reference a valid descriptor row.
    pub fn new(frame_id: u64, mut cameras: Vec<FrameCamera>, descriptors: DescriptorBlock) -> Result<Self, MatchError> {
        cameras.sort_by_key(|c| c.camera_id);
        if cameras.windows(2).any(|w| w[0].camera_id == w[1].camera_id) {
            return Err(MatchError::InvalidFrame(format!("frame {frame_id}: duplicate camera id")));
        }
        for cam in &cameras {
            for f in &cam.features {
                if f.camera_id != cam.camera_id {
                    return Err(MatchError::InvalidFrame(format!(
                        "frame {frame_id}: feature of camera {} listed under camera {}",
                        f.camera_id, cam.camera_id
                    )));
                }
                if f.descriptor_id >= descriptors.len() {
                    return Err(MatchError::InvalidFrame(format!(
                        "frame {frame_id}: descriptor id {} out of range",
                        f.descriptor_id
                    )));
                }
                if ((f.bearing.norm() - 1.0).abs() > 1e-9) || f.bearing.z <= 0.0 {
                    return Err(MatchError::InvalidFrame(format!("frame {frame_id}: invalid bearing")));
                }
            }
        }
        Ok(Self {
            frame_id,
            cameras,
            descriptors,
        })
    }

    pub fn empty(frame_id: u64, dim: usize) -> Self {
        Self {
            frame_id,
            cameras: Vec::new(),
            descriptors: DescriptorBlock::new(dim),
        }
    }

    pub fn cameras(&self) -> &[FrameCamera] {
        &self.cameras
    }

    pub fn descriptors(&self) -> &DescriptorBlock {
        &self.descriptors
    }

    pub fn dim(&self) -> usize {
        self.descriptors.dim()
    }

    pub fn feature_count(&self) -> usize {
        self.cameras.iter().map(|c| c.features.len()).sum()
    }

    pub fn camera(&self, camera_id: u32) -> Option<&FrameCamera> {
        self.cameras.iter().find(|c| c.camera_id == camera_id)
    }

    pub fn feature(&self, camera_id: u32, index: usize) -> Option<&BearingFeature> {
        self.camera(camera_id)?.features.get(index)
    }

    pub fn descriptor(&self, feature: &BearingFeature) -> &[f32] {
        self.descriptors.row(feature.descriptor_id)
    }

    pub fn to_record(&self) -> FrameRecord {
        FrameRecord {
            frame_id: self.frame_id,
            cameras: self
                .cameras
                .iter()
                .map(|c| CameraFeaturesRecord {
                    camera_id: c.camera_id,
                    features: c
                        .features
                        .iter()
                        .map(|f| FeatureRecord {
                            bearing: f.bearing.into(),
                            descriptor: encode_descriptor(self.descriptors.row(f.descriptor_id)),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_record(r: &FrameRecord) -> Result<Self, MatchError> {
        let mut dim = None;
        let mut data = Vec::new();
        let mut cameras = Vec::with_capacity(r.cameras.len());
        let mut next = 0usize;
        for c in &r.cameras {
            let mut features = Vec::with_capacity(c.features.len());
            for f in &c.features {
                let d = decode_descriptor(&f.descriptor)?;
                if *dim.get_or_insert(d.len()) != d.len() || d.is_empty() {
                    return Err(MatchError::InvalidFrame(format!(
                        "frame {}: descriptors of unequal length",
                        r.frame_id
                    )));
                }
                data.extend(d);
                let bearing = Vector3::from(f.bearing);
                let feat = BearingFeature::new(c.camera_id, bearing, next)
                    .map_err(|e| MatchError::InvalidFrame(format!("frame {}: {e}", r.frame_id)))?;
                features.push(feat);
                next += 1;
            }
            cameras.push(FrameCamera {
                camera_id: c.camera_id,
                features,
            });
        }
        let dim = dim.unwrap_or(1);
        let block = DescriptorBlock::from_vec(dim, data).map_err(|e| MatchError::InvalidFrame(e.to_string()))?;
        Self::new(r.frame_id, cameras, block)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("frame serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MatchError> {
        let r: FrameRecord = serde_json::from_str(s).map_err(|e| MatchError::InvalidFrame(e.to_string()))?;
        Self::from_record(&r)
    }
}

/// Reads one frame per non-empty line.
pub fn read_frames(reader: impl BufRead) -> Result<Vec<QueryFrame>, MatchError> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MatchError::InvalidFrame(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(QueryFrame::from_json(&line).map_err(|e| MatchError::InvalidFrame(format!("line {}: {e}", i + 1)))?);
    }
    Ok(frames)
}

pub fn encode_descriptor(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_descriptor(s: &str) -> Result<Vec<f32>, MatchError> {
    let bytes = B64
        .decode(s)
        .map_err(|e| MatchError::InvalidFrame(format!("descriptor: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(MatchError::InvalidFrame("descriptor byte length is not a multiple of 4".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub cameras: Vec<CameraFeaturesRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFeaturesRecord {
    pub camera_id: u32,
    pub features: Vec<FeatureRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub bearing: [f64; 3],
    /// Base64 of little-endian f32 values.
    pub descriptor: String,
}
