use rpointhop::cloud::{apply_transform, random_sample};
use rpointhop::pipeline::{model_from_bytes, model_to_bytes, HopConfig, MODEL_MAGIC};
use rpointhop::synth::synth_corpus;
use rpointhop::transform::{rot_x, rot_z, RigidTransform};
use rpointhop::{extract_features, extract_features_scaled, load_model, save_model, train, Error, ModelConfig};
use std::sync::OnceLock;

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

fn corpus() -> &'static Vec<rpointhop::PointCloud> {
    static C: OnceLock<Vec<rpointhop::PointCloud>> = OnceLock::new();
    C.get_or_init(|| synth_corpus(8, 512, 0).unwrap())
}

fn model() -> &'static rpointhop::RPointHopModel {
    static M: OnceLock<rpointhop::RPointHopModel> = OnceLock::new();
    M.get_or_init(|| train(corpus(), &small_config()).unwrap())
}

#[test]
fn training_is_deterministic_and_dimension_matches_outputs() {
    let again = train(corpus(), &small_config()).unwrap();
    assert_eq!(model_to_bytes(model()), model_to_bytes(&again));
    let m = model();
    assert_eq!(m.feature_dim(), m.tree.output_dim());
    assert_eq!(*m.surviving_per_hop().last().unwrap(), m.feature_dim());
    let fs = extract_features(m, &corpus()[0], 3).unwrap();
    assert_eq!(fs.dim(), m.feature_dim());
    assert_eq!(fs.len(), 128);
    assert!(fs.features.iter().all(|v| v.is_finite()));
    let fs2 = extract_features(m, &corpus()[0], 3).unwrap();
    assert_eq!(fs.features, fs2.features);
}

#[test]
fn features_are_invariant_to_rigid_motion() {
    let m = model();
    let tf = RigidTransform::new(rot_z(73.0) * rot_x(-41.0), nalgebra::Vector3::new(0.3, -0.2, 0.9)).unwrap();
    for cloud in corpus().iter().take(3) {
        let a = extract_features(m, cloud, 9).unwrap();
        let b = extract_features(m, &apply_transform(cloud, &tf), 9).unwrap();
        assert_eq!(a.point_indices, b.point_indices);
        let scale = a.features.amax().max(1.0);
        let mut invariant = 0;
        for i in 0..a.len() {
            let d = (a.features.row(i) - b.features.row(i)).amax();
            if d <= 1e-6 * scale {
                invariant += 1;
            }
        }
        assert!(invariant as f64 >= 0.99 * a.len() as f64, "{invariant}/{}", a.len());
    }
}

#[test]
fn full_threshold_prunes_everything_after_hop_one() {
    let cfg = ModelConfig {
        energy_threshold: 1.0,
        ..small_config()
    };
    let err = train(corpus(), &cfg).unwrap_err();
    assert!(matches!(err, Error::ZeroSurvivingChannels { hop: 2 }));
    assert_eq!(err.to_string(), "zero surviving channels at hop 2");
}

#[test]
fn too_few_points_is_rejected() {
    let small = random_sample(&corpus()[0], 200, 0).unwrap();
    assert!(matches!(
        extract_features(model(), &small, 0),
        Err(Error::TooFew { .. })
    ));
    assert!(matches!(
        train(std::slice::from_ref(&small), &small_config()),
        Err(Error::TooFew { .. })
    ));
    // The scaled schedule accepts it as long as every hop keeps k neighbors.
    let fs = extract_features_scaled(model(), &small, 0).unwrap();
    assert_eq!(fs.len(), 100);
    let tiny = random_sample(&corpus()[0], 30, 0).unwrap();
    assert!(extract_features_scaled(model(), &tiny, 0).is_err());
    assert!(train(&[], &small_config()).is_err());
}

#[test]
fn model_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rph");
    save_model(model(), &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let original = std::fs::read(&path).unwrap();
    let path2 = dir.path().join("m2.rph");
    save_model(&loaded, &path2).unwrap();
    assert_eq!(original, std::fs::read(&path2).unwrap());
    assert_eq!(&original[..4], MODEL_MAGIC);
    let a = extract_features(model(), &corpus()[1], 0).unwrap();
    let b = extract_features(&loaded, &corpus()[1], 0).unwrap();
    assert_eq!(a.features, b.features);

    std::fs::write(&path2, &original[..original.len() / 2]).unwrap();
    assert!(matches!(load_model(&path2), Err(Error::CorruptModel(_))));

    let mut flipped = original.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(model_from_bytes(&flipped), Err(Error::CorruptModel(_))));

    let mut versioned = original.clone();
    versioned[4..8].copy_from_slice(&99u32.to_le_bytes());
    assert!(matches!(
        model_from_bytes(&versioned),
        Err(Error::UnsupportedVersion(99))
    ));

    let mut magic = original;
    magic[0] = b'X';
    assert!(matches!(model_from_bytes(&magic), Err(Error::CorruptModel(_))));
    assert!(load_model(dir.path().join("missing.rph")).is_err());
}

#[test]
fn aux_attributes_widen_hop_one() {
    let cfg = ModelConfig {
        use_aux_attributes: true,
        ..small_config()
    };
    let m = train(corpus(), &cfg).unwrap();
    assert_eq!(m.aux_width, 4);
    assert_eq!(m.hop1.input_dim(), 28);
    let fs = extract_features(&m, &corpus()[2], 0).unwrap();
    assert_eq!(fs.dim(), m.feature_dim());
    let with_normals = corpus()[2].clone().with_aux(3, vec![0.0; 3 * 512]).unwrap();
    assert!(matches!(
        extract_features(&m, &with_normals, 0),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn config_text_round_trips() {
    let cfg = small_config();
    assert_eq!(ModelConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    assert!(ModelConfig::from_text("bogus = 1").is_err());
    assert!(ModelConfig::from_text("num_points = [10, 20]\nk_neighbors = [8, 8]").is_err());
}
