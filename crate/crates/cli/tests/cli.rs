use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn mcloc(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mcloc")).args(args).output().expect("binary runs");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

const SMALL: &[&str] = &[
    "--points",
    "3000",
    "--extent",
    "60",
    "--words",
    "64",
    "--frames",
    "8",
    "--trajectory",
    "straight",
    "--query-every",
    "4",
    "--step-length",
    "0.5",
    "--seed",
    "3",
    "--threads",
    "1",
    "--deterministic",
];

fn simulate_small(dir: &Path) {
    let out = p(dir, "sim");
    let mut args = vec!["simulate", "--out-dir", out.as_str()];
    args.extend_from_slice(SMALL);
    let o = mcloc(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
}

fn localize_small(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let sim = dir.join("sim");
    let (map, queries, rig, out) = (p(&sim, "map.bin"), p(&sim, "queries.jsonl"), p(&sim, "rig.json"), p(dir, out));
    let mut args = vec![
        "localize", "--map", &map, "--queries", &queries, "--rig", &rig, "--out", &out, "--seed", "1", "--threads", "1",
        "--deterministic",
    ];
    args.extend_from_slice(extra);
    mcloc(&args)
}

fn summary_value(stdout: &str, key: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {stdout}"));
    line[key.len()..].trim_start_matches(':').split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn simulate_defaults_produce_loadable_outputs() {
    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "sim");
    let o = mcloc(&["simulate", "--out-dir", &out, "--frames", "4", "--threads", "1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let sim = dir.path().join("sim");
    let map = mcloc::map::load_map(sim.join("map.bin")).unwrap();
    assert_eq!(map.len(), mcloc::sim::SceneSpec::default().point_count);
    let frames = mcloc::matcher::read_frames(fs::File::open(sim.join("queries.jsonl")).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(frames.len(), 4);
    let odo = mcloc::fusion::read_odometry(fs::File::open(sim.join("odometry.jsonl")).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(odo.len(), 3);
    let priors = mcloc::prior::load_priors(sim.join("priors.json")).unwrap();
    assert_eq!(priors.len(), 4);
    for name in ["scene.json", "rig.json", "ground_truth.jsonl", "trajectory.jsonl"] {
        assert!(sim.join(name).is_file(), "{name}");
    }
}

#[test]
fn simulate_same_seed_gives_identical_files() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    simulate_small(a.path());
    simulate_small(b.path());
    for entry in fs::read_dir(a.path().join("sim")).unwrap() {
        let name = entry.unwrap().file_name();
        let x = fs::read(a.path().join("sim").join(&name)).unwrap();
        let y = fs::read(b.path().join("sim").join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn invalid_outlier_fraction_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "sim");
    let o = mcloc(&["simulate", "--out-dir", &out, "--outlier-fraction", "1.5"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("outlier_fraction"), "{}", o.stderr);
    assert!(!dir.path().join("sim").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"points": 100, "pointz": 3}"#).unwrap();
    let out = p(dir.path(), "sim");
    let o = mcloc(&["simulate", "--config", &cfg.to_string_lossy(), "--out-dir", &out]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("pointz"), "{}", o.stderr);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"points": 1500, "extent": 50, "words": 32, "frames": 3, "threads": 1}"#).unwrap();
    let out = p(dir.path(), "sim");
    let o = mcloc(&["simulate", "--config", &cfg.to_string_lossy(), "--out-dir", &out, "--points", "1200"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let map = mcloc::map::load_map(dir.path().join("sim/map.bin")).unwrap();
    assert_eq!(map.len(), 1200);
    assert_eq!(map.vocabulary().word_count(), 32);
}

#[test]
fn build_map_reproduces_simulated_map() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let scene = p(&dir.path().join("sim"), "scene.json");
    let out = p(dir.path(), "rebuilt.bin");
    let o = mcloc(&["build-map", "--scene", &scene, "--out", &out, "--threads", "1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(fs::read(&out).unwrap() == fs::read(dir.path().join("sim/map.bin")).unwrap());
}

#[test]
fn localize_missing_map_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    fs::remove_file(dir.path().join("sim/map.bin")).unwrap();
    let o = localize_small(dir.path(), "results.jsonl", &[]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("map.bin"), "{}", o.stderr);
    assert!(!dir.path().join("results.jsonl").exists());
}

#[test]
fn prior_reduces_reported_comparisons() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let plain = localize_small(dir.path(), "plain.jsonl", &[]);
    assert_eq!(plain.code, 0, "{}", plain.stderr);
    let priors = p(&dir.path().join("sim"), "priors.json");
    let with = localize_small(dir.path(), "prior.jsonl", &["--prior", &priors]);
    assert_eq!(with.code, 0, "{}", with.stderr);
    let key = "mean descriptor comparisons";
    assert!(summary_value(&with.stdout, key) < summary_value(&plain.stdout, key), "{}\n{}", plain.stdout, with.stdout);
    assert!(summary_value(&plain.stdout, "frames") == 8.0);
}

fn fuse_args<'a>(dir: &'a Path, strings: &'a mut Vec<String>, results: &str, odometry: &str, out: &str) -> Vec<&'a str> {
    let sim = dir.join("sim");
    *strings = vec![
        p(dir, results),
        p(&sim, "queries.jsonl"),
        p(&sim, "map.bin"),
        p(&sim, "rig.json"),
        odometry.to_string(),
        p(dir, out),
    ];
    let s = &strings[..];
    vec![
        "fuse", "--results", &s[0], "--queries", &s[1], "--map", &s[2], "--rig", &s[3], "--odometry", &s[4], "--out", &s[5],
        "--threads", "1", "--deterministic",
    ]
}

#[test]
fn fuse_malformed_odometry_reports_line() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    assert_eq!(localize_small(dir.path(), "results.jsonl", &[]).code, 0);
    let good = fs::read_to_string(dir.path().join("sim/odometry.jsonl")).unwrap();
    let mut lines: Vec<&str> = good.lines().collect();
    lines[2] = "{\"t_from\": 2.0, \"t_to\": oops}";
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n")).unwrap();
    let mut s = Vec::new();
    let args = fuse_args(dir.path(), &mut s, "results.jsonl", &bad.to_string_lossy(), "fused.jsonl");
    let o = mcloc(&args);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 3"), "{}", o.stderr);
}

#[test]
fn fuse_identity_odometry_passes_pose_through() {
    use mcloc::fusion::{read_trajectory, write_odometry, OdometryIncrement};
    use mcloc::geometry::Pose;
    use mcloc::ransac::{write_results, LocalizationResult, LocalizationStats, Status};
    use nalgebra::{UnitQuaternion, Vector3};

    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let pose = Pose::new(UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4), Vector3::new(3.0, -2.0, 1.5));
    let result = LocalizationResult {
        frame_id: 0,
        status: Status::Localized,
        pose: Some(pose),
        inliers: Vec::new(),
        stats: LocalizationStats::default(),
    };
    let mut buf = Vec::new();
    write_results(&mut buf, &[result]).unwrap();
    fs::write(dir.path().join("one.jsonl"), buf).unwrap();
    let increments: Vec<OdometryIncrement> = (0..5)
        .map(|k| OdometryIncrement {
            t_from: k as f64,
            t_to: (k + 1) as f64,
            delta: Pose::identity(),
            sigma0: nalgebra::Matrix6::identity() * 1e-4,
        })
        .collect();
    let mut buf = Vec::new();
    write_odometry(&mut buf, &increments).unwrap();
    let odo = dir.path().join("identity.jsonl");
    fs::write(&odo, buf).unwrap();

    let mut s = Vec::new();
    let args = fuse_args(dir.path(), &mut s, "one.jsonl", &odo.to_string_lossy(), "fused.jsonl");
    let o = mcloc(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let fused = read_trajectory(std::io::BufReader::new(fs::File::open(dir.path().join("fused.jsonl")).unwrap())).unwrap();
    assert_eq!(fused.len(), 6);
    for (k, (t, q)) in fused.iter().enumerate() {
        assert_eq!(*t, k as f64);
        assert!(q.distance_to(&pose) < 1e-12 && q.angle_to(&pose) < 1e-12);
    }
}

fn write_truth_results(dir: &Path, drop_last: bool, extra_id: Option<u64>) -> String {
    use mcloc::ransac::{write_results, LocalizationResult, LocalizationStats, Status};
    use mcloc::sim::GroundTruthRecord;
    let text = fs::read_to_string(dir.join("sim/ground_truth.jsonl")).unwrap();
    let mut truth: Vec<GroundTruthRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    if drop_last {
        truth.pop();
    }
    let mut results: Vec<LocalizationResult> = truth
        .iter()
        .map(|g| LocalizationResult {
            frame_id: g.frame_id,
            status: Status::Localized,
            pose: Some(g.pose.into()),
            inliers: Vec::new(),
            stats: LocalizationStats::default(),
        })
        .collect();
    if let Some(id) = extra_id {
        results.push(LocalizationResult::failed(id, LocalizationStats::default()));
    }
    let mut buf = Vec::new();
    write_results(&mut buf, &results).unwrap();
    let path = dir.join("truth_results.jsonl");
    fs::write(&path, buf).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn benchmark_exact_poses_fill_every_row() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let results = write_truth_results(dir.path(), false, None);
    let gt = p(&dir.path().join("sim"), "ground_truth.jsonl");
    let json = p(dir.path(), "table.json");
    let o = mcloc(&["benchmark", "--results", &results, "--ground-truth", &gt, "--json-out", &json]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let rows = table["classes"].as_array().unwrap();
    assert_eq!(rows.len(), mcloc::sim::DEFAULT_CLASSES.len());
    for row in rows {
        assert_eq!(row["percent"].as_f64().unwrap(), 100.0);
    }
}

#[test]
fn benchmark_mismatched_frames_are_rejected() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let results = write_truth_results(dir.path(), false, Some(999));
    let gt = p(&dir.path().join("sim"), "ground_truth.jsonl");
    let o = mcloc(&["benchmark", "--results", &results, "--ground-truth", &gt]);
    assert_eq!(o.code, 2);
    let results = write_truth_results(dir.path(), true, None);
    let o = mcloc(&["benchmark", "--results", &results, "--ground-truth", &gt]);
    assert_eq!(o.code, 2, "{}", o.stdout);
}

#[test]
fn every_subcommand_is_reproducible() {
    let dir = TempDir::new().unwrap();
    simulate_small(dir.path());
    let sim = dir.path().join("sim");
    for name in ["a.jsonl", "b.jsonl"] {
        assert_eq!(localize_small(dir.path(), name, &[]).code, 0);
    }
    assert!(fs::read(dir.path().join("a.jsonl")).unwrap() == fs::read(dir.path().join("b.jsonl")).unwrap());

    let odo = p(&sim, "odometry.jsonl");
    for name in ["fa.jsonl", "fb.jsonl"] {
        let mut s = Vec::new();
        let args = fuse_args(dir.path(), &mut s, "a.jsonl", &odo, name);
        assert_eq!(mcloc(&args).code, 0);
    }
    assert!(fs::read(dir.path().join("fa.jsonl")).unwrap() == fs::read(dir.path().join("fb.jsonl")).unwrap());

    let gt = p(&sim, "ground_truth.jsonl");
    let results = p(dir.path(), "a.jsonl");
    let outs: Vec<String> = ["ta.json", "tb.json"]
        .iter()
        .map(|n| {
            let json = p(dir.path(), n);
            let o = mcloc(&["benchmark", "--results", &results, "--ground-truth", &gt, "--json-out", &json, "--deterministic"]);
            assert_eq!(o.code, 0, "{}", o.stderr);
            fs::read_to_string(json).unwrap() + &o.stdout
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}
