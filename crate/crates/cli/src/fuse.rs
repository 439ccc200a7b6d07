use std::collections::BTreeMap;

use mcloc::fusion::{fuse, read_odometry, read_trajectory, write_trajectory, FusionConfig, FusionError, Measurement, OdometryBuffer};
use mcloc::geometry::{PointObservation, Pose};
use mcloc::map::GlobalMap;
use mcloc::matcher::QueryFrame;
use mcloc::ransac::{read_results, LocalizationResult};
use mcloc::sim::absolute_trajectory_error;
use nalgebra::Matrix2;

use crate::io::{open, read_map, read_queries, read_rig, write_file};
use crate::options::{layered, required, Execution, FuseOptions};
use crate::{config_err, runtime_err, CliError};

/// Localized frames as fusion measurements; a frame's timestamp is its id.
pub(crate) fn measurements(results: &[LocalizationResult], frames: &[QueryFrame], map: &GlobalMap) -> Result<Vec<Measurement>, CliError> {
    let by_id: BTreeMap<u64, &QueryFrame> = frames.iter().map(|f| (f.frame_id, f)).collect();
    let mut out = Vec::new();
    for r in results.iter().filter(|r| r.is_localized()) {
        let frame = by_id
            .get(&r.frame_id)
            .ok_or_else(|| config_err(format!("frame {} is not among the queries", r.frame_id)))?;
        let pose = r.pose.ok_or_else(|| config_err(format!("frame {} has no pose", r.frame_id)))?;
        let mut matches = Vec::with_capacity(r.inliers.len());
        for i in &r.inliers {
            let f = frame
                .feature(i.camera_id, i.feature as usize)
                .ok_or_else(|| config_err(format!("frame {}: no feature {} in camera {}", r.frame_id, i.feature, i.camera_id)))?;
            let point = map
                .point_by_id(i.point_id)
                .map_err(|e| config_err(format!("frame {}: {e}", r.frame_id)))?
                .position;
            matches.push(PointObservation {
                camera_id: i.camera_id,
                bearing: f.bearing,
                point,
            });
        }
        out.push(Measurement {
            timestamp: r.frame_id as f64,
            pose,
            matches,
        });
    }
    out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(out)
}

fn fusion_err(e: FusionError) -> CliError {
    match e {
        FusionError::Io(_) | FusionError::Indefinite(_) | FusionError::Geometry(_) => runtime_err(e),
        other => config_err(other),
    }
}

pub(crate) fn run(flags: FuseOptions) -> Result<(), CliError> {
    let o = layered(&flags, flags.config.as_deref())?;
    Execution::new(o.seed, o.threads, o.deterministic)?;
    let mut cfg = FusionConfig::default();
    if let Some(n) = o.window {
        cfg.window_size = n;
    }
    if let Some(s) = o.match_sigma_deg {
        let s = s.to_radians();
        cfg.sigma1 = Matrix2::identity() * (s * s);
    }
    if let Some(n) = o.max_iterations {
        cfg.max_iterations = n;
    }
    cfg.validate().map_err(config_err)?;
    let out = required(&o.out, "out")?;

    let results_path = required(&o.results, "results")?;
    let results = read_results(open(results_path)?).map_err(|e| config_err(format!("{}: {e}", results_path.display())))?;
    let frames = read_queries(required(&o.queries, "queries")?)?;
    let map = read_map(required(&o.map, "map")?)?;
    let rig = read_rig(required(&o.rig, "rig")?)?;
    let odo_path = required(&o.odometry, "odometry")?;
    let increments = read_odometry(open(odo_path)?).map_err(|e| config_err(format!("{}: {e}", odo_path.display())))?;
    let odometry = OdometryBuffer::from_increments(increments).map_err(|e| config_err(format!("{}: {e}", odo_path.display())))?;
    let truth = match &o.truth {
        Some(p) => Some(read_trajectory(open(p)?).map_err(|e| config_err(format!("{}: {e}", p.display())))?),
        None => None,
    };

    let meas = measurements(&results, &frames, &map)?;
    let fused = fuse(&meas, &odometry, &rig, &cfg).map_err(fusion_err)?;
    write_file(out, |w| write_trajectory(w, &fused))?;

    println!("localizations: {}", meas.len());
    println!("fused poses: {}", fused.len());
    if let (Some(truth), Some((t0, _))) = (&truth, fused.first()) {
        let start = truth
            .iter()
            .find(|(t, _)| (t - t0).abs() <= 1e-9)
            .map(|(_, p)| *p)
            .ok_or_else(|| config_err(format!("ground truth has no pose at {t0}")))?;
        let raw: Vec<(f64, Pose)> = fused
            .iter()
            .map(|(t, _)| odometry.integrate(*t0, *t).map(|(d, _, _)| (*t, start.compose(&d))))
            .collect::<Result<_, _>>()
            .map_err(fusion_err)?;
        if let (Some(f), Some(r)) = (absolute_trajectory_error(&fused, truth), absolute_trajectory_error(&raw, truth)) {
            println!("ATE fused: {f:.4} m");
            println!("ATE odometry: {r:.4} m");
        }
    }
    Ok(())
}
