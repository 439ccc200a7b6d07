use std::time::Instant;

use log::debug;
use mcloc::prior::{load_priors, FilterConfig, PosePrior};
use mcloc::ransac::{localize, localize_reference, write_results, LocalizationResult, LocalizeConfig};
use rayon::prelude::*;

use crate::io::{read_map, read_queries, read_rig, write_file};
use crate::options::{layered, required, Execution, LocalizeOptions};
use crate::{config_err, runtime_err, CliError};

/// Default base cone half-angle α of the prior filter, degrees.
pub const DEFAULT_ALPHA_DEG: f64 = 2.0;

pub(crate) fn localize_config(o: &LocalizeOptions, exec: &Execution) -> Result<LocalizeConfig, CliError> {
    let mut cfg = LocalizeConfig::default();
    if let Some(r) = o.ratio {
        cfg.matcher.ratio_forward = r;
        cfg.matcher.ratio_backward = r;
    }
    if let Some(r) = o.ratio_forward {
        cfg.matcher.ratio_forward = r;
    }
    if let Some(r) = o.ratio_backward {
        cfg.matcher.ratio_backward = r;
    }
    if let Some(b) = o.batch_size {
        cfg.matcher.batch_size = b;
    }
    if let Some(b) = o.balance {
        cfg.matcher.balance = b;
    }
    if let Some(b) = o.expansion {
        cfg.matcher.expansion = b;
    }
    if let Some(v) = o.min_inliers {
        cfg.thresholds.min_inliers = v;
    }
    if let Some(v) = o.min_inlier_ratio {
        cfg.thresholds.min_inlier_ratio = v;
    }
    if let Some(v) = o.min_camera_fraction {
        cfg.thresholds.min_camera_fraction = v;
    }
    if let Some(v) = o.inlier_angle_deg {
        cfg.thresholds.inlier_angle = v.to_radians();
    }
    if let Some(v) = o.ransac_budget {
        cfg.sampling.budget = v;
    }
    if let Some(v) = o.refine {
        cfg.refine = v;
    }
    if let Some(v) = o.reference_iterations {
        cfg.reference_iterations = v;
    }
    cfg.seed = exec.seed;
    // the two-thread pipeline needs a second core
    cfg.deterministic = exec.deterministic || exec.threads < 2;
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

pub(crate) fn run(flags: LocalizeOptions) -> Result<(), CliError> {
    let o = layered(&flags, flags.config.as_deref())?;
    let exec = Execution::new(o.seed, o.threads, o.deterministic)?;
    let cfg = localize_config(&o, &exec)?;
    let out = required(&o.out, "out")?;
    let map = read_map(required(&o.map, "map")?)?;
    let frames = read_queries(required(&o.queries, "queries")?)?;
    let rig = read_rig(required(&o.rig, "rig")?)?;
    let alpha = o.alpha_deg.unwrap_or(DEFAULT_ALPHA_DEG);
    let filter = FilterConfig::new(alpha.to_radians()).map_err(|e| config_err(format!("alpha_deg: {e}")))?;
    let priors = match &o.prior {
        Some(path) => {
            let mut priors = load_priors(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            for p in priors.values_mut() {
                let d = o.prior_d.unwrap_or(p.position_radius);
                let theta = o.prior_theta_deg.map_or(p.heading_half_angle, f64::to_radians);
                *p = PosePrior::new(p.pose, d, theta).map_err(config_err)?;
            }
            // fail early on priors the filter cannot use
            for p in priors.values() {
                mcloc::prior::expanded_cone_angle(filter.base_inlier_angle, p.heading_half_angle).map_err(config_err)?;
            }
            priors
        }
        None => Default::default(),
    };
    let reference = o.reference.unwrap_or(false);

    // each frame runs matcher and estimator on two threads unless interleaved
    let frame_threads = match (exec.deterministic, cfg.deterministic) {
        (true, _) => 1,
        (false, true) => exec.threads,
        (false, false) => (exec.threads / 2).max(1),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(frame_threads).build().map_err(runtime_err)?;
    let started = Instant::now();
    let outcomes: Vec<Result<(LocalizationResult, f64), CliError>> = pool.install(|| {
        frames
            .par_iter()
            .map(|frame| {
                let prior = priors.get(&frame.frame_id).map(|p| (p, &filter));
                let t = Instant::now();
                let r = if reference {
                    localize_reference(&map, frame, &rig, prior, &cfg)
                } else {
                    localize(&map, frame, &rig, prior, &cfg)
                };
                let secs = t.elapsed().as_secs_f64();
                let mut r = r.map_err(|e| config_err(format!("frame {}: {e}", frame.frame_id)))?;
                if !exec.deterministic {
                    r.stats.wall_time = Some(secs);
                }
                debug!("frame {}: {:?} in {secs:.4} s", r.frame_id, r.status);
                Ok((r, secs))
            })
            .collect()
    });
    let mut results = Vec::with_capacity(outcomes.len());
    let mut time = 0.0;
    for o in outcomes {
        let (r, secs) = o?;
        time += secs;
        results.push(r);
    }
    write_file(out, |w| write_results(w, &results))?;

    let n = results.len().max(1) as f64;
    let localized = results.iter().filter(|r| r.is_localized()).count();
    let comparisons: u64 = results.iter().map(|r| r.stats.descriptor_comparisons()).sum();
    let processed: f64 = results
        .iter()
        .map(|r| r.stats.features_processed as f64 / r.stats.features_total.max(1) as f64)
        .sum();
    println!("frames: {}", results.len());
    println!("localized: {localized} ({:.1}%)", 100.0 * localized as f64 / n);
    println!("mean matching time: {:.4} s/frame (feature extraction excluded)", time / n);
    println!("mean descriptor comparisons: {:.1}", comparisons as f64 / n);
    println!("mean features processed: {:.1}%", 100.0 * processed / n);
    println!("total time: {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}
