//! Training harness, dataset directory format and experiment drivers for
//! the models in `gcnii-core`.

pub mod buckets;
pub mod dataset;
pub mod harness;
pub mod presets;
pub mod splits;
pub mod sweep;
pub mod synthetic;
pub mod train;

pub use dataset::{load_dataset, save_dataset, DatasetBundle, DatasetError, Split};
pub use train::{evaluate, train, RunResult, TrainOptions, TrainOutcome};
