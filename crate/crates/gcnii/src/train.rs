//! Full-batch training with early stopping on validation loss.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use gcnii_core::graph::{dropedge_sample, renormalized_operator};
use gcnii_core::linalg::max_singular_value;
use gcnii_core::models::{ConfigError, DROPOUT_PLACEMENT};
use gcnii_core::rng::{self, GENERATOR_FAMILY};
use gcnii_core::{Adam, Matrix, Model, ModelConfig, PropMatrix, Tape, TensorError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buckets::{degree_bucket_accuracy, DegreeBucket};
use crate::dataset::{DatasetBundle, Split};

pub const MONITOR: &str = "val_loss";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("split {index} requested but the dataset has {available}")]
    NoSuchSplit { index: usize, available: usize },
    #[error("split has an empty {0} set")]
    EmptySet(&'static str),
    #[error("epoch {epoch}: {source}")]
    Numeric { epoch: usize, source: TensorError },
    #[error("writing epoch log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightNorm {
    pub name: String,
    pub max_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ModelConfig,
    pub seed: u64,
    pub dataset: String,
    pub split_index: usize,
    pub rng_family: String,
    pub monitor: String,
    pub dropout_placement: String,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub val_curve: Vec<EpochRecord>,
    pub wall_time: f64,
    pub degree_buckets: Option<Vec<DegreeBucket>>,
    pub weight_spectrum: Option<Vec<WeightNorm>>,
}

/// What to compute besides accuracy, and where epoch lines go.
#[derive(Default)]
pub struct TrainOptions<'a> {
    pub degree_buckets: bool,
    pub weight_spectrum: bool,
    pub epoch_log: Option<&'a mut dyn Write>,
}

/// A finished run: the result and the restored best-validation model.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub result: RunResult,
    pub model: Model,
}

/// Losses, accuracies and predictions of a model on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_probs: Matrix,
    pub predictions: Vec<usize>,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

fn mean_nll(log_probs: &Matrix, labels: &[usize], nodes: &[usize]) -> f64 {
    let total: f64 = nodes.iter().map(|&v| -log_probs.get(v, labels[v])).sum();
    total / nodes.len() as f64
}

pub fn accuracy(predictions: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes.iter().filter(|&&v| predictions[v] == labels[v]).count();
    correct as f64 / nodes.len() as f64
}

/// Evaluation-mode forward pass over the full graph.
pub fn evaluate(
    model: &Model,
    data: &DatasetBundle,
    prop: &Arc<PropMatrix>,
    split: &Split,
) -> Result<Evaluation, TensorError> {
    let log_probs = model.log_probs(&data.features, prop)?;
    let labels = data.class_indices();
    let predictions = log_probs.argmax_rows();
    let part = |nodes: &[usize]| {
        if nodes.is_empty() {
            (f64::NAN, 0.0)
        } else {
            (mean_nll(&log_probs, &labels, nodes), accuracy(&predictions, &labels, nodes))
        }
    };
    let (train_loss, train_accuracy) = part(&split.train);
    let (val_loss, val_accuracy) = part(&split.val);
    let (test_loss, test_accuracy) = part(&split.test);
    Ok(Evaluation {
        log_probs,
        predictions,
        train_loss,
        train_accuracy,
        val_loss,
        val_accuracy,
        test_loss,
        test_accuracy,
    })
}

/// Trains `config` on split `split_index` of `data`.
///
/// Stops after `max_epochs` or once validation loss has not improved for
/// `patience` epochs, restores the parameters of the best epoch and only
/// then touches the test set.
pub fn train(
    config: &ModelConfig,
    data: &DatasetBundle,
    split_index: usize,
    mut options: TrainOptions<'_>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let split = data.splits.get(split_index).ok_or(TrainError::NoSuchSplit {
        index: split_index,
        available: data.splits.len(),
    })?;
    for (name, set) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if set.is_empty() {
            return Err(TrainError::EmptySet(name));
        }
    }

    let started = Instant::now();
    let labels = data.class_indices();
    let full_prop = Arc::new(renormalized_operator(&data.graph));
    let mut model = Model::new(config.clone(), data.num_features(), data.num_classes)?;
    let mut adam = Adam::new(config.adam(), &model.params.params);
    let mut tape = Tape::new(rng::stream(config.seed, rng::STREAM_DROPOUT));
    let mut edge_rng = rng::stream(config.seed, rng::STREAM_DROPEDGE);

    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.params.clone();
    let mut since_best = 0;
    let mut stopped_epoch = 0;
    let mut val_curve = Vec::new();

    for epoch in 0..config.max_epochs {
        let numeric = |source| TrainError::Numeric { epoch, source };
        let prop = if config.drop_edge > 0.0 {
            let sampled = dropedge_sample(&data.graph, config.drop_edge, &mut edge_rng);
            Arc::new(renormalized_operator(&sampled))
        } else {
            Arc::clone(&full_prop)
        };

        tape.clear();
        let pass = model
            .forward(&mut tape, &data.features, &prop, true)
            .map_err(numeric)?;
        let loss = tape.nll_loss(pass.log_probs, &labels, &split.train).map_err(numeric)?;
        let train_loss = tape.value(loss).get(0, 0);
        tape.backward(loss).map_err(numeric)?;
        let grads: Vec<Option<&Matrix>> = pass.param_vars.iter().map(|&v| tape.grad(v)).collect();
        adam.step(&mut model.params.params, &grads).map_err(numeric)?;

        // Validation only; the test set is read once, after restoring.
        let log_probs = model.log_probs(&data.features, &full_prop).map_err(numeric)?;
        let val_loss = mean_nll(&log_probs, &labels, &split.val);
        let val_acc = accuracy(&log_probs.argmax_rows(), &labels, &split.val);
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        };
        if let Some(log) = options.epoch_log.as_deref_mut() {
            serde_json::to_writer(&mut *log, &record).map_err(std::io::Error::from)?;
            writeln!(log)?;
        }
        val_curve.push(record);
        stopped_epoch = epoch;

        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best_params = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    model.params = best_params;
    let eval = evaluate(&model, data, &full_prop, split).map_err(|source| TrainError::Numeric {
        epoch: best_epoch,
        source,
    })?;

    let degree_buckets = if options.degree_buckets {
        Some(
            degree_bucket_accuracy(&eval.predictions, &labels, &data.graph, &split.test)
                .expect("test set checked nonempty"),
        )
    } else {
        None
    };
    let weight_spectrum = options.weight_spectrum.then(|| weight_spectrum(&model));

    let result = RunResult {
        config: config.clone(),
        seed: config.seed,
        dataset: data.name.clone(),
        split_index,
        rng_family: GENERATOR_FAMILY.to_string(),
        monitor: MONITOR.to_string(),
        dropout_placement: DROPOUT_PLACEMENT.to_string(),
        best_epoch,
        stopped_epoch,
        train_accuracy: eval.train_accuracy,
        val_accuracy: eval.val_accuracy,
        test_accuracy: eval.test_accuracy,
        val_curve,
        wall_time: started.elapsed().as_secs_f64(),
        degree_buckets,
        weight_spectrum,
    };
    Ok(TrainOutcome { result, model })
}

/// Largest singular value of every graph-layer weight, in layer order.
/// An all-zero weight reports 0.
pub fn weight_spectrum(model: &Model) -> Vec<WeightNorm> {
    model
        .params
        .conv_weights()
        .map(|p| WeightNorm {
            name: p.name.clone(),
            max_singular_value: match max_singular_value(&p.value, 1e-10) {
                Ok(s) => s,
                Err(TensorError::ZeroMatrix) => 0.0,
                Err(_) => f64::NAN,
            },
        })
        .collect()
}
