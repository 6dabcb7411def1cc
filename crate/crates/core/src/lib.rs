//! Fair identity normalization and equity-scaled evaluation for binary
//! classifiers with identity-attributed samples.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod jsonfmt;
pub mod metrics;
pub mod net;
pub mod norm;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod train;

pub use data::{
    partition_by_attribute, validate_dataset, Attribute, AttributeSet, Dataset, GroupPartition,
    LabeledSample, PredictionRecord, Violation,
};
pub use error::{Error, Result};
pub use metrics::{full_report, Measure, Metric, MetricReport};
pub use net::MlpModel;
pub use norm::NormKind;
pub use optim::AdamWConfig;
pub use synth::{default_benchmark, generate, SynthConfig};
pub use train::{
    evaluate_model, load_checkpoint, run_seeds, save_checkpoint, sweep_momentum, train,
    Checkpoint, RunHistory, SeedAggregate, TrainConfig,
};
