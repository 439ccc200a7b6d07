use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, PoseRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Localized,
    Failed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationStats {
    pub features_total: usize,
    pub features_processed: usize,
    pub matches_found: usize,
    pub ransac_iterations: usize,
    pub batches: usize,
    pub forward_comparisons: u64,
    pub backward_comparisons: u64,
    pub expansion_comparisons: u64,
    /// Inlier count of the final pose.
    pub inliers: usize,
    /// Whether the final refinement was kept.
    pub refined: bool,
    /// Seconds; left out in deterministic runs so outputs are reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl LocalizationStats {
    pub fn descriptor_comparisons(&self) -> u64 {
        self.forward_comparisons + self.backward_comparisons + self.expansion_comparisons
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlierRecord {
    pub camera_id: u32,
    pub feature: u32,
    pub point_id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationResult {
    pub frame_id: u64,
    pub status: Status,
    /// `world_from_rig`; present iff localized.
    pub pose: Option<Pose>,
    pub inliers: Vec<InlierRecord>,
    pub stats: LocalizationStats,
}

impl LocalizationResult {
    pub fn failed(frame_id: u64, stats: LocalizationStats) -> Self {
        Self {
            frame_id,
            status: Status::Failed,
            pose: None,
            inliers: Vec::new(),
            stats,
        }
    }

    pub fn is_localized(&self) -> bool {
        self.status == Status::Localized
    }

    pub fn to_record(&self) -> ResultRecord {
        ResultRecord {
            frame_id: self.frame_id,
            status: self.status,
            pose: self.pose.as_ref().map(PoseRecord::from),
            inliers: self.inliers.clone(),
            stats: self.stats,
        }
    }

    pub fn from_record(r: ResultRecord) -> Self {
        Self {
            frame_id: r.frame_id,
            status: r.status,
            pose: r.pose.map(Pose::from),
            inliers: r.inliers,
            stats: r.stats,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("result serializes")
    }
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub frame_id: u64,
    pub status: Status,
    pub pose: Option<PoseRecord>,
    pub inliers: Vec<InlierRecord>,
    pub stats: LocalizationStats,
}

pub fn write_results(mut w: impl Write, results: &[LocalizationResult]) -> std::io::Result<()> {
    for r in results {
        writeln!(w, "{}", r.to_json())?;
    }
    Ok(())
}

/// Reads JSON lines; errors carry the 1-based line number.
pub fn read_results(reader: impl BufRead) -> Result<Vec<LocalizationResult>, String> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if (rec.status == Status::Localized) != rec.pose.is_some() {
            return Err(format!("line {}: pose must be present exactly when localized", i + 1));
        }
        out.push(LocalizationResult::from_record(rec));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn json_round_trip() {
        let r = LocalizationResult {
            frame_id: 7,
            status: Status::Localized,
            pose: Some(Pose::new(crate::geometry::so3_exp(&Vector3::new(0.1, -0.2, 0.3)), Vector3::new(1.0, 2.0, 3.0))),
            inliers: vec![InlierRecord {
                camera_id: 1,
                feature: 4,
                point_id: 99,
            }],
            stats: LocalizationStats {
                features_total: 10,
                matches_found: 3,
                ..Default::default()
            },
        };
        let mut buf = Vec::new();
        write_results(&mut buf, &[r.clone(), LocalizationResult::failed(8, Default::default())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("\"status\":\"localized\""));
        assert!(!text.contains("wall_time"));
        let back = read_results(text.as_bytes()).unwrap();
        assert_eq!(back[0], r);
        assert_eq!(back[1].status, Status::Failed);
        assert!(back[1].pose.is_none());
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = read_results("\n{\"frame_id\":1}\n".as_bytes()).unwrap_err();
        assert!(err.starts_with("line 2"), "{err}");
        let bad = r#"{"frame_id":1,"status":"failed","pose":{"q":[1,0,0,0],"t":[0,0,0]},"inliers":[],"stats":{"features_total":0,"features_processed":0,"matches_found":0,"ransac_iterations":0,"batches":0,"forward_comparisons":0,"backward_comparisons":0,"expansion_comparisons":0,"inliers":0,"refined":false}}"#;
        assert!(read_results(bad.as_bytes()).is_err());
    }
}
