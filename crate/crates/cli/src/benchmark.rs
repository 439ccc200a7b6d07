use mcloc::ransac::read_results;
use mcloc::sim::{evaluate, GroundTruthRecord, DEFAULT_CLASSES};

use crate::io::{open, read_lines, write_file};
use crate::options::{layered, required, BenchmarkOptions, Execution};
use crate::{config_err, CliError};

pub(crate) fn run(flags: BenchmarkOptions) -> Result<(), CliError> {
    let o = layered(&flags, flags.config.as_deref())?;
    Execution::new(o.seed, o.threads, o.deterministic)?;
    let results_path = required(&o.results, "results")?;
    let results = read_results(open(results_path)?).map_err(|e| config_err(format!("{}: {e}", results_path.display())))?;
    let truth: Vec<GroundTruthRecord> = read_lines(required(&o.ground_truth, "ground_truth")?)?;
    let classes = o.classes.clone().unwrap_or_else(|| DEFAULT_CLASSES.to_vec());
    if classes.iter().any(|c| !(c.heading_deg >= 0.0 && c.position_m >= 0.0)) {
        return Err(config_err("classes: bounds must be non-negative"));
    }
    let table = evaluate(&results, &truth, &classes, o.planar.unwrap_or(false)).map_err(config_err)?;
    print!("{}", table.to_text());

    let n = results.len().max(1) as f64;
    let times: Vec<f64> = results.iter().filter_map(|r| r.stats.wall_time).collect();
    if !times.is_empty() {
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let max = times.iter().copied().fold(0.0, f64::max);
        println!("matching time: mean {mean:.4} s, max {max:.4} s");
    }
    let comparisons: u64 = results.iter().map(|r| r.stats.descriptor_comparisons()).sum();
    let iterations: usize = results.iter().map(|r| r.stats.ransac_iterations).sum();
    println!("mean descriptor comparisons: {:.1}", comparisons as f64 / n);
    println!("mean RANSAC iterations: {:.1}", iterations as f64 / n);

    if let Some(path) = &o.json_out {
        let json = table.to_json();
        write_file(path, |w| {
            use std::io::Write;
            writeln!(w, "{json}")
        })?;
    }
    Ok(())
}
