//! Trains one desk-size classifier on a planted height cohort and reports
//! per-sequence and per-user test accuracy.

use std::collections::BTreeMap;

use motionleak::classifier::{train, Example, Model, ModelConfig, TrainedModel};
use motionleak::dataset::{binarize, labeled_users, make_split, resample_training, Inventory, RecordingSource, SplitSizes};
use motionleak::featurizer::{featurize_with_len, FeatureMatrix};
use motionleak::synth::{generate_cohort, CohortSpec, Signal};

fn main() -> anyhow::Result<()> {
    let mut spec = CohortSpec::single(7, 40, "Height", Signal::Height, 0.28);
    spec.recordings_per_user = 20;
    let cohort = generate_cohort(&spec)?;
    let labels = binarize(&cohort.survey, &cohort.attributes[0])?;
    let users = labeled_users(&labels, &Inventory::from_manifest(&cohort.manifest));
    let plan = make_split("Height", &users, 0, 7, SplitSizes { test_per_class: 5, val_per_class: 5 })?;

    let config = ModelConfig { seed: 7, ..ModelConfig::desk() };
    let mut features: BTreeMap<String, FeatureMatrix> = BTreeMap::new();
    let mut feature = |id: &str| -> anyhow::Result<()> {
        if !features.contains_key(id) {
            features.insert(id.to_string(), featurize_with_len(&cohort.load(id)?, config.seq_len)?);
        }
        Ok(())
    };
    let samples = resample_training(&plan, 200, 7)?;
    for id in samples.iter().map(|s| s.recording_id.as_str()) {
        feature(id)?;
    }
    for u in plan.val.iter().chain(&plan.test) {
        for id in &u.recording_ids {
            feature(id)?;
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

    let started = std::time::Instant::now();
    let sink = |r: &motionleak::classifier::EpochRecord| {
        println!("epoch {:>3}  loss {:.4}  val acc {:.3}", r.epoch, r.train_loss, r.val_accuracy)
    };
    let TrainedModel { model, best_epoch, .. } = train(Model::new(config)?, &train_set, &val_set, &sink)?;
    println!("trained in {:.1?}; best epoch {best_epoch}", started.elapsed());

    let mut correct = 0;
    for u in &plan.test {
        let fms: Vec<&FeatureMatrix> = u.recording_ids.iter().map(|id| &features[id]).collect();
        let (score, class) = model.predict_user(&fms)?;
        println!("{} true {} predicted {} (score {:.3})", u.user_id, u.label, class, score);
        correct += usize::from(class == u.label);
    }
    println!("per-user test accuracy {}/{}", correct, plan.test.len());
    Ok(())
}
