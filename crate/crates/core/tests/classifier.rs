//! Classifier behavior: initialization, the decision rule, training
//! reproducibility, checkpoints and a desk-size learnability check.

mod common;

use std::collections::BTreeMap;

use common::{model_gradient_error, random_recording};
use motionleak::classifier::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, train, user_decision, ClassifierError, Example, Model,
    ModelConfig, NullSink, TrainedModel, VecSink,
};
use motionleak::dataset::{
    binarize, labeled_users, make_split, resample_training, Inventory, Label, RecordingSource, SplitSizes,
};
use motionleak::featurizer::{featurize_with_len, FeatureMatrix, FEATURE_WIDTH};
use motionleak::rng::rng_from_seed;
use motionleak::synth::{generate_cohort, CohortSpec, Signal};
use motionleak::telemetry::{Frame, Pose};
use proptest::prelude::*;
use rand::Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        seq_len: 16,
        embed_dim: 8,
        ffn_hidden: 16,
        n_layers: 1,
        n_heads: 2,
        epochs: 3,
        batch_size: 4,
        lr: 0.01,
        seed: 11,
        ..ModelConfig::paper()
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize) -> FeatureMatrix {
    let values = (0..rows * FEATURE_WIDTH).map(|_| rng.gen_range(-1.5f32..1.5)).collect();
    FeatureMatrix::from_rows(rows, values, rows)
}

/// Twelve random sequences, labeled by the sign of their first column.
fn toy_set(seq_len: usize) -> Vec<FeatureMatrix> {
    let mut rng = rng_from_seed(77);
    (0..12).map(|_| random_matrix(&mut rng, seq_len)).collect()
}

fn label_of(fm: &FeatureMatrix) -> Label {
    if fm.get(0, 0) >= 0.0 {
        Label::B
    } else {
        Label::A
    }
}

fn examples(set: &[FeatureMatrix]) -> Vec<Example<'_>> {
    set.iter().map(|f| Example { features: f, label: label_of(f) }).collect()
}

#[test]
fn untrained_model_predicts_one_half() {
    let model = Model::<f32>::new(tiny()).unwrap();
    for fm in toy_set(16) {
        assert_eq!(model.predict_sequence(&fm).unwrap(), 0.5);
    }
}

#[test]
fn same_seed_gives_identical_initialization() {
    let a = Model::<f32>::new(tiny()).unwrap();
    let b = Model::<f32>::new(tiny()).unwrap();
    assert_eq!(a, b);
    let c = Model::<f32>::new(ModelConfig { seed: 12, ..tiny() }).unwrap();
    assert_ne!(a.parameters(), c.parameters());
}

#[test]
fn invalid_configs_are_rejected() {
    let five_heads = ModelConfig { n_heads: 5, ..ModelConfig::paper() };
    assert!(matches!(Model::<f32>::new(five_heads), Err(ClassifierError::InvalidConfig(_))));
    let zero_lr = ModelConfig { lr: 0.0, ..tiny() };
    assert!(matches!(Model::<f32>::new(zero_lr), Err(ClassifierError::InvalidConfig(_))));
}

#[test]
fn training_needs_epochs_and_data() {
    let set = toy_set(16);
    let ex = examples(&set);
    let no_epochs = Model::new(ModelConfig { epochs: 0, ..tiny() }).unwrap();
    assert!(matches!(train(no_epochs, &ex, &ex, &NullSink), Err(ClassifierError::EmptyTrainingSchedule)));
    let m = Model::new(tiny()).unwrap();
    assert!(matches!(train(m.clone(), &[], &ex, &NullSink), Err(ClassifierError::EmptyTrainingSet)));
    assert!(matches!(train(m, &ex, &[], &NullSink), Err(ClassifierError::EmptyValidationSet)));
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = Model::<f32>::new(tiny()).unwrap();
    let fm = FeatureMatrix::zeros(32);
    match model.predict_sequence(&fm) {
        Err(ClassifierError::ShapeMismatch { expected, found }) => {
            assert_eq!(expected, (16, FEATURE_WIDTH));
            assert_eq!(found, (32, FEATURE_WIDTH));
        }
        other => panic!("expected ShapeMismatch, got {other:?}"),
    }
}

#[test]
fn user_decision_examples() {
    let (score, class) = user_decision(&[0.9, 0.2, 0.7]).unwrap();
    assert!((score - 0.6).abs() < 1e-12);
    assert_eq!(class, Label::B);
    assert_eq!(user_decision(&[0.5, 0.5]).unwrap(), (0.5, Label::B));
    assert_eq!(user_decision(&[0.3]).unwrap(), (0.3, Label::A));
    assert!(matches!(user_decision(&[]), Err(ClassifierError::NoRecordings)));
    let model = Model::<f32>::new(tiny()).unwrap();
    assert!(matches!(model.predict_user(&[]), Err(ClassifierError::NoRecordings)));
}

#[test]
fn training_is_bitwise_reproducible() {
    let set = toy_set(16);
    let ex = examples(&set);
    let run = || {
        let sink = VecSink::default();
        let t = train(Model::new(tiny()).unwrap(), &ex, &ex, &sink).unwrap();
        (t, sink.0.into_inner().unwrap())
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert_eq!(ha, a.history);
    assert_eq!(a.history.len(), 3);
    assert!(a.best_epoch >= 1 && a.best_epoch <= 3);
    let best = a.history.iter().map(|r| r.val_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(a.best_val_accuracy(), best);
    assert_eq!(a.history.iter().position(|r| r.val_accuracy == best).unwrap() + 1, a.best_epoch);
}

fn trained_tiny() -> TrainedModel {
    let set = toy_set(16);
    let ex = examples(&set);
    train(Model::new(tiny()).unwrap(), &ex, &ex, &NullSink).unwrap()
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let trained = trained_tiny();
    save_checkpoint(&trained, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, trained);
    for fm in toy_set(16) {
        assert_eq!(
            back.model.predict_sequence(&fm).unwrap().to_bits(),
            trained.model.predict_sequence(&fm).unwrap().to_bits()
        );
    }
    assert_eq!(load_checkpoint_for(&path, &tiny()).unwrap(), trained);
}

#[test]
fn damaged_or_foreign_checkpoints_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&trained_tiny(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() - 7]).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(ClassifierError::CorruptPayload(_))));

    let other = ModelConfig { ffn_hidden: 32, ..tiny() };
    assert!(matches!(load_checkpoint_for(&path, &other), Err(ClassifierError::VersionMismatch(_))));

    let text = String::from_utf8_lossy(&bytes[..40]).into_owned();
    let mut renamed = bytes.clone();
    let at = text.find("v1").unwrap();
    renamed[at..at + 2].copy_from_slice(b"v9");
    let old = dir.path().join("old.ckpt");
    std::fs::write(&old, &renamed).unwrap();
    assert!(matches!(load_checkpoint(&old), Err(ClassifierError::VersionMismatch(_))));
}

#[test]
fn trailing_zero_frames_do_not_change_the_prediction() {
    let mut rng = rng_from_seed(5);
    let rec = random_recording(&mut rng, 50);
    let mut padded = rec.clone();
    let zero = Pose::new([0.0; 3], [0.0; 4]);
    for i in 0..30 {
        padded.frames.push(Frame {
            time: 10.0 + i as f32,
            fps: 90,
            head: zero,
            left_hand: zero,
            right_hand: zero,
        });
    }
    let cfg = ModelConfig { seq_len: 96, ..tiny() };
    let a = featurize_with_len(&rec, 96).unwrap();
    let b = featurize_with_len(&padded, 96).unwrap();
    assert_eq!(a.values(), b.values());
    let set: Vec<FeatureMatrix> = toy_set(96);
    let trained = train(Model::new(cfg).unwrap(), &examples(&set), &examples(&set), &NullSink).unwrap();
    let pa = trained.model.predict_sequence(&a).unwrap();
    let pb = trained.model.predict_sequence(&b).unwrap();
    assert_eq!(pa.to_bits(), pb.to_bits());
}

#[test]
fn toy_model_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        seq_len: 8,
        input_dim: 5,
        embed_dim: 6,
        ffn_hidden: 10,
        n_layers: 1,
        n_heads: 2,
        ..ModelConfig::paper()
    };
    let err = model_gradient_error(&cfg, 8);
    assert!(err < 1e-4, "relative gradient error {err:.3e}");
    let masked = ModelConfig { pad_mask: true, ..cfg };
    let err = model_gradient_error(&masked, 5);
    assert!(err < 1e-4, "masked relative gradient error {err:.3e}");
}

#[test]
fn desk_model_learns_a_planted_height_signal() {
    let mut spec = CohortSpec::single(3, 30, "Height", Signal::Height, 0.28);
    spec.recordings_per_user = 8;
    let cohort = generate_cohort(&spec).unwrap();
    let labels = binarize(&cohort.survey, &cohort.attributes[0]).unwrap();
    let users = labeled_users(&labels, &Inventory::from_manifest(&cohort.manifest));
    let plan = make_split("Height", &users, 0, 3, SplitSizes { test_per_class: 5, val_per_class: 5 }).unwrap();
    let config = ModelConfig { seed: 3, ..ModelConfig::desk() };

    let mut features: BTreeMap<String, FeatureMatrix> = BTreeMap::new();
    let samples = resample_training(&plan, 150, 3).unwrap();
    let needed = samples
        .iter()
        .map(|s| s.recording_id.clone())
        .chain(plan.val.iter().flat_map(|u| u.recording_ids.iter().cloned()));
    for id in needed {
        if !features.contains_key(&id) {
            let fm = featurize_with_len(&cohort.load(&id).unwrap(), config.seq_len).unwrap();
            features.insert(id, fm);
        }
    }
    let train_set: Vec<Example> = samples
        .iter()
        .map(|s| Example { features: &features[&s.recording_id], label: s.label })
        .collect();
    let val_set: Vec<Example> = plan
        .val
        .iter()
        .flat_map(|u| u.recording_ids.iter().map(|id| Example { features: &features[id], label: u.label }))
        .collect();
    let trained = train(Model::new(config).unwrap(), &train_set, &val_set, &NullSink).unwrap();
    assert!(trained.history.len() <= 10);
    assert!(trained.best_val_accuracy() >= 0.95, "{:?}", trained.history);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn user_decision_is_the_thresholded_mean(probs in prop::collection::vec(0.0f64..=1.0, 1..20)) {
        let (score, class) = user_decision(&probs).unwrap();
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        prop_assert_eq!(score, mean);
        prop_assert_eq!(class, if mean >= 0.5 { Label::B } else { Label::A });
        prop_assert!((0.0..=1.0).contains(&score));
    }
}
