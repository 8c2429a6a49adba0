use rpointhop::bench::{
    add_noise, make_partial, run_benchmark, sample_rigid_transform, score_transform, ExperimentSpec, Method,
};
use rpointhop::pipeline::HopConfig;
use rpointhop::registration::{register, RegisterParams};
use rpointhop::synth::synth_corpus;
use rpointhop::transform::EulerXyz;
use rpointhop::{train, ModelConfig, Point, PointCloud};

fn small_config() -> ModelConfig {
    ModelConfig {
        k_lrf: 32,
        hops: vec![
            HopConfig::new(256, 16),
            HopConfig::new(192, 16),
            HopConfig::new(128, 16),
        ],
        ..ModelConfig::default()
    }
}

#[test]
fn partial_clouds_are_metric_balls() {
    let cloud = synth_corpus(1, 512, 4).unwrap().remove(0);
    for seed in 0..20 {
        let part = make_partial(&cloud, 0.75, seed).unwrap();
        assert_eq!(part.len(), 384);
        let kept: Vec<&Point> = part.coords().iter().collect();
        // Some anchor in the cloud sees every kept point no farther than every dropped point.
        let is_ball = cloud.coords().iter().any(|a| {
            let r = kept.iter().map(|p| (*p - a).norm()).fold(0.0, f64::max);
            cloud.coords().iter().filter(|p| (*p - a).norm() <= r).count() == 384
        });
        assert!(is_ball, "seed {seed}");
    }
    assert!(make_partial(&cloud, 0.0, 0).is_err());
    assert_eq!(make_partial(&cloud, 1.0, 0).unwrap().coords(), cloud.coords());
}

#[test]
fn noise_has_the_requested_statistics() {
    let cloud = PointCloud::new(vec![Point::zeros(); 100_000 / 3 + 1]).unwrap();
    let noisy = add_noise(&cloud, 0.01, 7).unwrap();
    let v: Vec<f64> = noisy.coords().iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    assert!(mean.abs() < 0.02 * 0.01 * 3.0);
    assert!((std - 0.01).abs() < 0.02 * 0.01);
    assert_eq!(add_noise(&cloud, 0.0, 7).unwrap().coords(), cloud.coords());
}

#[test]
fn sampled_transforms_respect_ranges() {
    let spec = ExperimentSpec {
        max_angle_deg: 30.0,
        translation_range: 0.25,
        ..Default::default()
    };
    for t in 0..200 {
        let (tf, e) = sample_rigid_transform(&spec, t);
        assert!(e.as_array().iter().all(|a| (0.0..30.0).contains(a)));
        assert!(tf.translation.iter().all(|v| v.abs() <= 0.25));
        let back = EulerXyz::from_matrix(&tf.rotation);
        assert!((back.x - e.x).abs() < 1e-9 && (back.y - e.y).abs() < 1e-9 && (back.z - e.z).abs() < 1e-9);
        let s = score_transform(&tf, &tf);
        assert_eq!(s.rotation, [0.0; 3]);
        assert_eq!(s.translation, [0.0; 3]);
    }
}

#[test]
fn benchmark_runs_reproducibly_and_recovers_rigid_copies() {
    let corpus = synth_corpus(6, 512, 10).unwrap();
    let model = train(&corpus, &small_config()).unwrap();
    let tests = synth_corpus(3, 512, 11).unwrap();
    let spec = ExperimentSpec {
        trials: 6,
        m1: 96,
        m2: 48,
        ..Default::default()
    };
    let a = run_benchmark(&model, &tests, &spec).unwrap();
    let b = run_benchmark(&model, &tests, &spec).unwrap();
    assert_eq!(a.to_text("x"), b.to_text("x"));
    assert_eq!(a.failed(), 0);
    assert!(a.rotation.mae < 1e-6, "{}", a.rotation.mae);
    assert_eq!(a.rotation_mae_by_trial().len(), 6);

    let icp = run_benchmark(
        &model,
        &tests,
        &ExperimentSpec {
            method: Method::IcpOnly,
            ..spec
        },
    )
    .unwrap();
    assert_eq!(icp.trials.len(), 6);

    let mut params = RegisterParams::default();
    params.matching.m1 = 128;
    params.matching.m2 = 64;
    let reg = register(&model, &tests[0], &tests[0], &params).unwrap();
    assert!((reg.transform.rotation - nalgebra::Matrix3::identity()).amax() < 1e-9);
    assert!(reg.transform.translation.norm() < 1e-9);
    assert_eq!(reg.report.pairs, 64);
    assert!(register(&model, &tests[0], &tests[0], &RegisterParams::default()).is_err());
}
