//! Depth × seed sweeps and the multi-split full-supervised protocol.

use gcnii_core::ModelConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetBundle;
use crate::splits::{stratified_splits, SplitError};
use crate::train::{train, RunResult, TrainOptions};

/// One cell of a sweep. A failed run keeps its error text and the sweep
/// carries on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub layers: usize,
    pub seed: u64,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub layers: usize,
    pub completed: usize,
    pub failed: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SweepSummary>,
}

impl SweepReport {
    pub fn mean_at(&self, layers: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.layers == layers && s.completed > 0)
            .map(|s| s.mean_test_accuracy)
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `count` run seeds derived from a master seed.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| master.wrapping_add(i)).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub degree_buckets: bool,
    pub weight_spectrum: bool,
}

/// Trains `template` at every depth in `layers` with every seed in `seeds`,
/// in parallel. Each run is independent and deterministic in its seed, so
/// the report does not depend on scheduling.
pub fn sweep(
    template: &ModelConfig,
    data: &DatasetBundle,
    split_index: usize,
    layers: &[usize],
    seeds: &[u64],
    options: SweepOptions,
) -> SweepReport {
    let cells: Vec<(usize, u64)> = layers
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let runs: Vec<SweepRun> = cells
        .par_iter()
        .map(|&(layers, seed)| {
            let config = ModelConfig {
                num_layers: layers,
                seed,
                ..template.clone()
            };
            let opts = TrainOptions {
                degree_buckets: options.degree_buckets,
                weight_spectrum: options.weight_spectrum,
                epoch_log: None,
            };
            match train(&config, data, split_index, opts) {
                Ok(outcome) => SweepRun {
                    layers,
                    seed,
                    result: Some(outcome.result),
                    error: None,
                },
                Err(e) => SweepRun {
                    layers,
                    seed,
                    result: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let summary = layers
        .iter()
        .map(|&l| {
            let accs: Vec<f64> = runs
                .iter()
                .filter(|r| r.layers == l)
                .filter_map(|r| r.result.as_ref().map(|x| x.test_accuracy))
                .collect();
            let failed = runs.iter().filter(|r| r.layers == l && r.error.is_some()).count();
            let (mean, std) = mean_std(&accs);
            SweepSummary {
                layers: l,
                completed: accs.len(),
                failed,
                mean_test_accuracy: mean,
                std_test_accuracy: std,
            }
        })
        .collect();
    SweepReport { runs, summary }
}

/// Where the full-supervised splits come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitSource {
    /// The first `num_splits` splits shipped with the dataset; generated
    /// with `fallback_seed` if there are fewer.
    Dataset { fallback_seed: u64 },
    /// Fresh stratified 60/20/20 splits.
    Generate { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSupervisedReport {
    pub generated_splits: bool,
    pub runs: Vec<SweepRun>,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

/// Trains `config` once per split and averages test accuracy.
pub fn full_supervised_protocol(
    data: &DatasetBundle,
    config: &ModelConfig,
    num_splits: usize,
    source: SplitSource,
) -> Result<FullSupervisedReport, SplitError> {
    let mut data = data.clone();
    let generated = match source {
        SplitSource::Dataset { .. } if data.splits.len() >= num_splits => {
            data.splits.truncate(num_splits);
            false
        }
        SplitSource::Dataset { fallback_seed: seed } | SplitSource::Generate { seed } => {
            data.splits = stratified_splits(&data.labels, data.num_classes, num_splits, seed)?;
            true
        }
    };
    let runs: Vec<SweepRun> = (0..num_splits)
        .into_par_iter()
        .map(|i| match train(config, &data, i, TrainOptions::default()) {
            Ok(outcome) => SweepRun {
                layers: config.num_layers,
                seed: config.seed,
                result: Some(outcome.result),
                error: None,
            },
            Err(e) => SweepRun {
                layers: config.num_layers,
                seed: config.seed,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let accs: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.result.as_ref().map(|x| x.test_accuracy))
        .collect();
    let (mean, std) = mean_std(&accs);
    Ok(FullSupervisedReport {
        generated_splits: generated,
        runs,
        mean_test_accuracy: mean,
        std_test_accuracy: std,
    })
}
