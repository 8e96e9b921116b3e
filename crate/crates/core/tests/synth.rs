//! Synthetic cohorts on disk: reproducibility, format fidelity and the
//! readers used by experiments.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use common::bit_identical;
use motionleak::dataset::{binarize, read_recording_file, AttributeSpec, Binarized, Label, Manifest, SurveyTable};
use motionleak::synth::{generate_cohort, AttributePlan, Cohort, generate_null_cohort, CohortSpec, RecordingFormat, Signal, SynthError};
use proptest::prelude::*;

fn small(seed: u64) -> CohortSpec {
    let mut s = CohortSpec::single(seed, 3, "Height", Signal::Height, 0.2);
    s.recordings_per_user = 2;
    s.frames_min = 40;
    s.frames_max = 80;
    s
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect()
}

fn walkdir(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walkdir(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn written_cohort_is_byte_identical_across_runs() {
    for format in [RecordingFormat::Canonical, RecordingFormat::Bsor] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_cohort(&small(4)).unwrap().write_dir(a.path(), format).unwrap();
        generate_cohort(&small(4)).unwrap().write_dir(b.path(), format).unwrap();
        let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
        assert_eq!(sa.len(), 6 * 2 + 4);
        assert_eq!(sa, sb);
    }
}

#[test]
fn files_on_disk_match_the_in_memory_cohort() {
    for format in [RecordingFormat::Canonical, RecordingFormat::Bsor] {
        let dir = tempfile::tempdir().unwrap();
        let cohort = generate_cohort(&small(9)).unwrap();
        cohort.write_dir(dir.path(), format).unwrap();

        let manifest = Manifest::from_path(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.entries().len(), 12);
        for e in manifest.entries() {
            let on_disk = read_recording_file(&manifest.resolve(e)).unwrap();
            let i = cohort.user_index(&e.user_id).unwrap();
            let r: usize = e.recording_id.rsplit("-r").next().unwrap().parse().unwrap();
            assert!(bit_identical(&on_disk, &cohort.recording(i, r).unwrap()), "{}", e.recording_id);
        }

        let survey = SurveyTable::from_path(&dir.path().join("survey.csv")).unwrap();
        let spec = AttributeSpec::from_path(&dir.path().join("attributes/Height.toml")).unwrap();
        let labels = binarize(&survey, &spec).unwrap();
        for u in &cohort.users {
            let expected = match u.labels["Height"] {
                Label::A => Binarized::A,
                Label::B => Binarized::B,
            };
            assert_eq!(labels[&u.user_id], expected);
        }
        let spec_back = CohortSpec::from_path(&dir.path().join("cohort.toml")).unwrap();
        assert_eq!(spec_back, small(9));
    }
}

#[test]
fn zero_users_is_an_invalid_spec() {
    let spec = CohortSpec { users_per_class: 0, ..small(1) };
    assert!(matches!(generate_cohort(&spec), Err(SynthError::InvalidSpec(_))));
}

#[test]
fn twenty_users_with_twenty_recordings_write_quickly() {
    let mut spec = CohortSpec::single(2, 10, "Height", Signal::Height, 0.2);
    spec.recordings_per_user = 20;
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    generate_cohort(&spec).unwrap().write_dir(dir.path(), RecordingFormat::Bsor).unwrap();
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "{elapsed:?}");
    assert_eq!(walkdir(&dir.path().join("recordings")).len(), 400);
}

#[test]
fn null_cohort_keeps_labels_and_drops_the_signal() {
    let planted = generate_cohort(&small(6)).unwrap();
    let null = generate_null_cohort(&small(6)).unwrap();
    for (p, n) in planted.users.iter().zip(&null.users) {
        assert_eq!(p.labels, n.labels);
    }
    assert!(null.spec.attributes.iter().all(|a| a.signal == Signal::None && a.effect == 0.0));
    let mean_height = |c: &Cohort, l: Label| {
        let hs: Vec<f64> = c.users.iter().filter(|u| u.labels["Height"] == l).map(|u| u.profile.head_height).collect();
        hs.iter().sum::<f64>() / hs.len() as f64
    };
    assert!(mean_height(&planted, Label::B) - mean_height(&planted, Label::A) > 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn labels_are_balanced_for_every_attribute(seed in any::<u64>(), n in 1usize..12) {
        let mut spec = small(seed);
        spec.users_per_class = n;
        spec.attributes.push(AttributePlan {
            name: "Other".into(),
            signal: Signal::None,
            effect: 0.0,
            share_class_with: None,
        });
        let cohort = generate_cohort(&spec).unwrap();
        prop_assert_eq!(cohort.users.len(), 2 * n);
        for attr in ["Height", "Other"] {
            let b = cohort.users.iter().filter(|u| u.labels[attr] == Label::B).count();
            prop_assert_eq!(b, n);
        }
        let again = generate_cohort(&spec).unwrap();
        prop_assert_eq!(&cohort.users, &again.users);
    }
}
