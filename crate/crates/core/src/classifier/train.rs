use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sequence_class, ClassifierError, Model};
use crate::dataset::Label;
use crate::featurizer::FeatureMatrix;
use crate::nn::{AdamConfig, AdamState, Graph, Real};
use crate::rng::child_rng;

/// One labeled sequence.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a FeatureMatrix,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Receives per-epoch progress; may be shared between concurrent jobs.
pub trait ProgressSink: Sync {
    fn epoch(&self, record: &EpochRecord);
}

pub struct NullSink;

impl ProgressSink for NullSink {
    fn epoch(&self, _: &EpochRecord) {}
}

/// Collects every record it receives.
#[derive(Default)]
pub struct VecSink(pub Mutex<Vec<EpochRecord>>);

impl ProgressSink for VecSink {
    fn epoch(&self, record: &EpochRecord) {
        self.0.lock().expect("sink lock").push(*record);
    }
}

impl<F: Fn(&EpochRecord) + Sync> ProgressSink for F {
    fn epoch(&self, record: &EpochRecord) {
        self(record)
    }
}

/// A model restored to its best validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model<f32>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn best_val_accuracy(&self) -> f64 {
        self.history[self.best_epoch - 1].val_accuracy
    }
}

/// Fraction of examples whose thresholded probability matches the label.
pub fn sequence_accuracy<T: Real>(model: &Model<T>, examples: &[Example<'_>]) -> Result<f64, ClassifierError> {
    let mut correct = 0usize;
    for ex in examples {
        if sequence_class(model.predict_sequence(ex.features)?) == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len().max(1) as f64)
}

/// Adam + BCE over seeded mini-batches; after each epoch the validation
/// accuracy is measured and the best epoch's parameters (earliest on ties)
/// are returned.
pub fn train(
    model: Model<f32>,
    train_set: &[Example<'_>],
    val_set: &[Example<'_>],
    sink: &dyn ProgressSink,
) -> Result<TrainedModel, ClassifierError> {
    let cfg = model.config().clone();
    if cfg.epochs == 0 {
        return Err(ClassifierError::EmptyTrainingSchedule);
    }
    if train_set.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if val_set.is_empty() {
        return Err(ClassifierError::EmptyValidationSet);
    }
    let inputs = train_set
        .iter()
        .map(|ex| model.input_tensor(ex.features))
        .collect::<Result<Vec<_>, _>>()?;
    for ex in val_set {
        model.input_tensor(ex.features)?;
    }

    let mut model = model;
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, model.parameters());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut child_rng(cfg.seed, &format!("epoch-{epoch}")));
        let mut loss_sum = 0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Vec<f32>> = model.parameters().iter().map(|p| vec![0.0; p.len()]).collect();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let ex = &train_set[i];
                let mut g = Graph::<f32>::new();
                let (prob, vars) = model.forward(&mut g, inputs[i].clone(), ex.features.valid_rows(), true)?;
                let loss = g.bce(prob, &[ex.label.target()])?;
                let l = g.scalar(loss);
                if !l.is_finite() {
                    return Err(ClassifierError::DivergedLoss { epoch });
                }
                loss_sum += l as f64;
                let back = g.backward(loss);
                for (acc, v) in grads.iter_mut().zip(&vars) {
                    if let Some(gv) = back.of(*v) {
                        for (a, &x) in acc.iter_mut().zip(gv) {
                            *a += x * scale;
                        }
                    }
                }
            }
            adam.step(model.parameters_mut(), &grads)?;
        }
        if !model.all_finite() {
            return Err(ClassifierError::DivergedLoss { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_accuracy: sequence_accuracy(&model, val_set)?,
        };
        sink.epoch(&record);
        history.push(record);
        if best.as_ref().map_or(true, |(_, acc, _)| record.val_accuracy > *acc) {
            best = Some((epoch, record.val_accuracy, model.clone()));
        }
    }
    let (best_epoch, _, model) = best.expect("at least one epoch ran");
    Ok(TrainedModel {
        model,
        best_epoch,
        history,
    })
}
