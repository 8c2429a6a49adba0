//! `rpointhop`: train models, extract descriptors, register clouds and run
//! the registration benchmark from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use rpointhop::bench::{run_benchmark, ExperimentSpec, Method};
use rpointhop::io::{load_cloud_auto, save_cloud, CloudFormat};
use rpointhop::registration::{register, RegisterParams};
use rpointhop::synth::synth_corpus;
use rpointhop::transform::fmt_f64;
use rpointhop::{extract_features_scaled, load_model, save_model, train, ModelConfig, PointCloud, RigidTransform};

#[derive(Parser)]
#[command(
    name = "rpointhop",
    version,
    about = "Rotation-invariant point cloud features and registration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on every point cloud in a directory.
    Train(TrainArgs),
    /// Estimate the rigid transform between two clouds.
    Register(RegisterArgs),
    /// Write per-point descriptors of one cloud as a tab-separated table.
    Features(FeaturesArgs),
    /// Run the synthetic-motion registration benchmark.
    Benchmark(BenchmarkArgs),
    /// Write a corpus of synthetic shapes.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input_dir: PathBuf,
    /// TOML model config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MatchArgs {
    /// Correspondences kept by feature distance.
    #[arg(long, default_value_t = 256)]
    m1: usize,
    /// Correspondences kept by the ratio test.
    #[arg(long, default_value_t = 128)]
    m2: usize,
    #[arg(long)]
    no_ratio_test: bool,
    #[arg(long)]
    ransac: bool,
    #[arg(long)]
    icp_refine: bool,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Transform report (TOML).
    #[arg(long)]
    output: PathBuf,
    /// Where to write the source cloud moved onto the target.
    #[arg(long)]
    aligned: Option<PathBuf>,
    /// Known transform in the report's convention; adds the angular error to the report.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[command(flatten)]
    matching: MatchArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rpointhop,
    Icp,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test_dir: PathBuf,
    #[arg(long, default_value_t = 45.0)]
    max_angle: f64,
    #[arg(long, default_value_t = 0.5)]
    max_translation: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    /// Fraction of source points kept around a random anchor.
    #[arg(long, default_value_t = 1.0)]
    partial: f64,
    /// Crop the target as well, with an independent anchor.
    #[arg(long)]
    both_partial: bool,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run paired trials with and without the ratio test.
    #[arg(long)]
    ablation: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Rpointhop)]
    method: MethodArg,
    /// Randomly reorder source points before registration.
    #[arg(long)]
    shuffle_source: bool,
    #[command(flatten)]
    matching: MatchArgs,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// off, ply or xyz.
    #[arg(long, default_value = "xyz")]
    format: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `RPH_THREADS` caps the worker pool; 0 or unset lets rayon decide.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RPH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("RPH_THREADS must be a count, got '{raw}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Register(a) => cmd_register(a),
        Command::Features(a) => cmd_features(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Loads every cloud with a known extension, in file-name order.
fn load_dir(dir: &Path) -> Result<Vec<PointCloud>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && CloudFormat::from_path(p).is_some())
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no point clouds found in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_cloud_auto(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => ModelConfig::load(p)?,
        None => ModelConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let corpus = load_dir(&a.input_dir)?;
    info!("training on {} clouds", corpus.len());
    let start = Instant::now();
    let model = train(&corpus, &config)?;
    info!("trained in {:.2}s", start.elapsed().as_secs_f64());
    save_model(&model, &a.output)?;
    let per_hop: Vec<String> = model.surviving_per_hop().iter().map(ToString::to_string).collect();
    println!("feature dimension: {}", model.feature_dim());
    println!("surviving channels per hop: {}", per_hop.join(" "));
    Ok(())
}

fn match_params(m: &MatchArgs, seed: u64) -> RegisterParams {
    let mut p = RegisterParams {
        icp_refine: m.icp_refine,
        seed,
        ..RegisterParams::default()
    };
    p.matching.m1 = m.m1;
    p.matching.m2 = m.m2;
    p.matching.ratio_test = !m.no_ratio_test;
    p.matching.use_ransac = m.ransac;
    p
}

fn cmd_register(a: RegisterArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let source = load_cloud_auto(&a.source)?;
    let target = load_cloud_auto(&a.target)?;
    let gt = a.ground_truth.as_ref().map(RigidTransform::load).transpose()?;
    let reg = register(&model, &source, &target, &match_params(&a.matching, a.seed))?;
    info!("registered in {:.3}s", reg.report.runtime_secs);
    let mut text = reg.report.to_text();
    if let Some(gt) = gt {
        let err = reg.transform.angular_distance_deg(&gt);
        let _ = writeln!(text, "angular_error_deg = {}", fmt_f64(err));
        let _ = writeln!(
            text,
            "translation_error = {}",
            fmt_f64((reg.transform.translation - gt.translation).norm())
        );
        println!("angular error: {err:.6} deg");
    }
    write_file(&a.output, &text)?;
    if let Some(path) = &a.aligned {
        let format = CloudFormat::from_path(path).unwrap_or(CloudFormat::Xyz);
        save_cloud(&reg.aligned_source, path, format)?;
    }
    println!("inliers: {} of {} pairs", reg.report.inliers, reg.report.pairs);
    Ok(())
}

fn cmd_features(a: FeaturesArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let cloud = load_cloud_auto(&a.input)?;
    let fs = extract_features_scaled(&model, &cloud, a.seed)?;
    let mut s = String::from("index\tx\ty\tz");
    for d in 0..fs.dim() {
        let _ = write!(s, "\tf{d}");
    }
    s.push('\n');
    for i in 0..fs.len() {
        let p = fs.coords[i];
        let _ = write!(
            s,
            "{}\t{}\t{}\t{}",
            fs.point_indices[i],
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z)
        );
        for v in fs.features.row(i).iter() {
            let _ = write!(s, "\t{}", fmt_f64(*v));
        }
        s.push('\n');
    }
    write_file(&a.output, &s)?;
    println!("{} points x {} features", fs.len(), fs.dim());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let clouds = load_dir(&a.test_dir)?;
    let spec = ExperimentSpec {
        max_angle_deg: a.max_angle,
        translation_range: a.max_translation,
        noise_std: a.noise_std,
        partial_fraction: a.partial,
        both_partial: a.both_partial,
        trials: a.trials,
        seed: a.seed,
        m1: a.matching.m1,
        m2: a.matching.m2,
        use_ratio_test: !a.matching.no_ratio_test,
        use_ransac: a.matching.ransac,
        icp_refine: a.matching.icp_refine,
        method: match a.method {
            MethodArg::Rpointhop => Method::RPointHop,
            MethodArg::Icp => Method::IcpOnly,
        },
        shuffle_source: a.shuffle_source,
        ..ExperimentSpec::default()
    };
    if a.ablation && a.matching.no_ratio_test {
        bail!("--ablation already runs both ratio-test settings; drop --no-ratio-test");
    }
    spec.validate()?;
    let text = if a.ablation {
        let with = run_benchmark(
            &model,
            &clouds,
            &ExperimentSpec {
                use_ratio_test: true,
                ..spec
            },
        )?;
        let without = run_benchmark(
            &model,
            &clouds,
            &ExperimentSpec {
                use_ratio_test: false,
                ..spec
            },
        )?;
        info!("benchmark took {:.2}s", with.runtime_secs + without.runtime_secs);
        format!(
            "{}\n{}",
            with.to_text("with ratio test"),
            without.to_text("without ratio test")
        )
    } else {
        let report = run_benchmark(&model, &clouds, &spec)?;
        info!("benchmark took {:.2}s", report.runtime_secs);
        report.to_text(if spec.use_ratio_test {
            "with ratio test"
        } else {
            "without ratio test"
        })
    };
    match &a.output {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let format: CloudFormat = a.format.parse()?;
    let ext = match format {
        CloudFormat::Off => "off",
        CloudFormat::PlyAscii => "ply",
        CloudFormat::Xyz => "xyz",
    };
    std::fs::create_dir_all(&a.output_dir).with_context(|| format!("cannot create {}", a.output_dir.display()))?;
    let corpus = synth_corpus(a.count, a.points, a.seed)?;
    for (i, cloud) in corpus.iter().enumerate() {
        save_cloud(cloud, a.output_dir.join(format!("shape_{i:04}.{ext}")), format)?;
    }
    println!("wrote {} clouds to {}", corpus.len(), a.output_dir.display());
    Ok(())
}
