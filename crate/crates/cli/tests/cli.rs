use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use rpointhop::bench::add_noise;
use rpointhop::cloud::apply_transform;
use rpointhop::io::{load_cloud_auto, save_cloud, CloudFormat};
use rpointhop::synth::synth_corpus;
use rpointhop::transform::{rot_x, rot_y, rot_z};
use rpointhop::RigidTransform;

const SMALL_CONFIG: &str = "k_lrf = 32\nnum_points = [256, 192, 128]\nk_neighbors = [16, 16, 16]\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rpointhop"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn rpointhop")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Workspace with a small training corpus, a test corpus and a trained model.
fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), SMALL_CONFIG).unwrap();
    ok(
        &[
            "synth",
            "--output-dir",
            "train",
            "--count",
            "6",
            "--points",
            "512",
            "--seed",
            "0",
        ],
        d,
    );
    ok(
        &[
            "synth",
            "--output-dir",
            "test",
            "--count",
            "3",
            "--points",
            "512",
            "--seed",
            "1",
        ],
        d,
    );
    let out = ok(
        &[
            "train",
            "--input-dir",
            "train",
            "--config",
            "cfg.toml",
            "--output",
            "m.rph",
        ],
        d,
    );
    assert!(out.contains("feature dimension:"));
    assert!(out.contains("surviving channels per hop:"));
    dir
}

/// Source file whose name encodes the motion that produced it from the target.
fn write_moved(d: &Path, angles: [f64; 3], t: [f64; 3], noise: f64) -> (PathBuf, RigidTransform) {
    let target = load_cloud_auto(d.join("test/shape_0000.xyz")).unwrap();
    let tf = RigidTransform::new(rot_z(angles[2]) * rot_y(angles[1]) * rot_x(angles[0]), Vector3::from(t)).unwrap();
    let mut moved = apply_transform(&target, &tf);
    if noise > 0.0 {
        moved = add_noise(&moved, noise, 3).unwrap();
    }
    let name = format!(
        "rx{}_ry{}_rz{}_t{}_{}_{}_n{noise}.xyz",
        angles[0], angles[1], angles[2], t[0], t[1], t[2]
    );
    let path = d.join(name);
    save_cloud(&moved, &path, CloudFormat::Xyz).unwrap();
    (path, tf)
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

#[test]
fn train_is_deterministic_and_rejects_empty_input() {
    let dir = setup();
    let d = dir.path();
    ok(
        &[
            "train",
            "--input-dir",
            "train",
            "--config",
            "cfg.toml",
            "--output",
            "m2.rph",
        ],
        d,
    );
    assert_eq!(
        std::fs::read(d.join("m.rph")).unwrap(),
        std::fs::read(d.join("m2.rph")).unwrap()
    );

    std::fs::create_dir(d.join("empty")).unwrap();
    let out = run(&["train", "--input-dir", "empty", "--output", "x.rph"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no point clouds found"));
    assert!(!d.join("x.rph").exists());

    let out = run(&["train", "--input-dir", "missing", "--output", "x.rph"], d);
    assert!(!out.status.success());
}

#[test]
fn register_recovers_a_rigid_copy() {
    let dir = setup();
    let d = dir.path();
    let (src, tf) = write_moved(d, [30.0, -20.0, 40.0], [0.1, -0.2, 0.3], 0.0);
    std::fs::write(d.join("gt.toml"), tf.to_text()).unwrap();
    let args = [
        "register",
        "--model",
        "m.rph",
        "--source",
        src.to_str().unwrap(),
        "--target",
        "test/shape_0000.xyz",
        "--output",
        "r.toml",
        "--aligned",
        "aligned.xyz",
        "--ground-truth",
        "gt.toml",
        "--m1",
        "128",
        "--m2",
        "64",
    ];
    ok(&args, d);
    let report = std::fs::read_to_string(d.join("r.toml")).unwrap();
    assert!(report_value(&report, "angular_error_deg") < 0.5);
    let est = RigidTransform::from_text(&report).unwrap();
    assert!(est.angular_distance_deg(&tf) < 0.5);
    let aligned = load_cloud_auto(d.join("aligned.xyz")).unwrap();
    let target = load_cloud_auto(d.join("test/shape_0000.xyz")).unwrap();
    let worst = aligned
        .coords()
        .iter()
        .zip(target.coords())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6);

    let out = run(
        &[
            "register",
            "--model",
            "nope.rph",
            "--source",
            "test/shape_0000.xyz",
            "--target",
            "test/shape_0000.xyz",
            "--output",
            "r2.toml",
        ],
        d,
    );
    assert!(!out.status.success());
    assert!(!d.join("r2.toml").exists());
}

#[test]
fn icp_refinement_does_not_increase_the_residual() {
    let dir = setup();
    let d = dir.path();
    let (src, _) = write_moved(d, [10.0, 25.0, -15.0], [0.05, 0.0, -0.1], 0.01);
    let src = src.to_str().unwrap();
    let base = [
        "register",
        "--model",
        "m.rph",
        "--source",
        src,
        "--target",
        "test/shape_0000.xyz",
        "--m1",
        "128",
        "--m2",
        "64",
    ];
    ok(&[&base[..], &["--output", "plain.toml"]].concat(), d);
    ok(&[&base[..], &["--output", "icp.toml", "--icp-refine"]].concat(), d);
    let plain = std::fs::read_to_string(d.join("plain.toml")).unwrap();
    let icp = std::fs::read_to_string(d.join("icp.toml")).unwrap();
    assert!(report_value(&icp, "closest_point_rmse") <= report_value(&plain, "closest_point_rmse"));
}

#[test]
fn features_table_shape_and_invariance() {
    let dir = setup();
    let d = dir.path();
    let out = ok(
        &[
            "features",
            "--model",
            "m.rph",
            "--input",
            "test/shape_0001.xyz",
            "--output",
            "a.tsv",
        ],
        d,
    );
    let model = rpointhop::load_model(d.join("m.rph")).unwrap();
    assert_eq!(out.trim(), format!("128 points x {} features", model.feature_dim()));
    let read = |name: &str| -> Vec<Vec<f64>> {
        std::fs::read_to_string(d.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let a = read("a.tsv");
    assert_eq!(a.len(), 128);
    assert!(a.iter().all(|r| r.len() == 4 + model.feature_dim()));

    let cloud = load_cloud_auto(d.join("test/shape_0001.xyz")).unwrap();
    let tf = RigidTransform::new(rot_z(120.0) * rot_x(35.0), Vector3::new(0.4, 0.1, -0.3)).unwrap();
    save_cloud(&apply_transform(&cloud, &tf), d.join("rot.xyz"), CloudFormat::Xyz).unwrap();
    ok(
        &[
            "features", "--model", "m.rph", "--input", "rot.xyz", "--output", "b.tsv",
        ],
        d,
    );
    let b = read("b.tsv");
    let mut close = 0;
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra[0], rb[0]);
        let diff: f64 = ra[4..]
            .iter()
            .zip(&rb[4..])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = ra[4..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if diff < 1e-4 * norm {
            close += 1;
        }
    }
    assert!(close as f64 >= 0.95 * a.len() as f64, "{close}/{}", a.len());
}

#[test]
fn benchmark_reports_are_reproducible() {
    let dir = setup();
    let d = dir.path();
    let args = [
        "benchmark",
        "--model",
        "m.rph",
        "--test-dir",
        "test",
        "--trials",
        "10",
        "--max-angle",
        "45",
        "--m1",
        "96",
        "--m2",
        "48",
        "--seed",
        "4",
    ];
    ok(&[&args[..], &["--output", "b1.txt"]].concat(), d);
    ok(&[&args[..], &["--output", "b2.txt"]].concat(), d);
    let b1 = std::fs::read_to_string(d.join("b1.txt")).unwrap();
    assert_eq!(b1, std::fs::read_to_string(d.join("b2.txt")).unwrap());
    let rows = b1
        .lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .count();
    assert_eq!(rows, 10 + 1);
    assert!(b1.contains("MSE(R)\tRMSE(R)\tMAE(R)\tMSE(t)\tRMSE(t)\tMAE(t)"));

    let ablation = ok(&[&args[..], &["--ablation", "--partial", "0.8"]].concat(), d);
    assert!(ablation.contains("# aggregate: with ratio test"));
    assert!(ablation.contains("# aggregate: without ratio test"));
    assert_eq!(ablation.matches("MSE(R)\tRMSE(R)\tMAE(R)").count(), 2);

    let bad = run(&[&args[..], &["--partial", "1.5"]].concat(), d);
    assert!(!bad.status.success());
    let icp = ok(
        &[
            "benchmark",
            "--model",
            "m.rph",
            "--test-dir",
            "test",
            "--trials",
            "3",
            "--method",
            "icp",
        ],
        d,
    );
    assert!(icp.contains("method=IcpOnly"));
}

#[test]
fn thread_count_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("RPH_THREADS", "lots")
        .args(["synth", "--output-dir", "s", "--count", "1", "--points", "300"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin()
        .env("RPH_THREADS", "1")
        .args(["synth", "--output-dir", "s", "--count", "1", "--points", "300"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn synth_corpus_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "synth",
            "--output-dir",
            "s",
            "--count",
            "2",
            "--points",
            "300",
            "--seed",
            "9",
            "--format",
            "ply",
        ],
        dir.path(),
    );
    let lib = synth_corpus(2, 300, 9).unwrap();
    let file = load_cloud_auto(dir.path().join("s/shape_0001.ply")).unwrap();
    let worst = lib[1]
        .coords()
        .iter()
        .zip(file.coords())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12);
}
