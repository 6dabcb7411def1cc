//! Deterministic training, evaluation and checkpointing.

mod checkpoint;
mod protocol;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Attribute, Dataset, PredictionRecord};
use crate::error::{Error, Result};
use crate::metrics::{full_report, MetricReport, DEFAULT_THRESHOLD};
use crate::net::{cross_entropy, init_mlp, MlpModel};
use crate::norm::{Mode, NormKind, Normalizer, DEFAULT_FIN_MOMENTUM};
use crate::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::rng::{self, Stream};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use protocol::{
    aggregate, momentum_grid, run_seeds, run_seeds_parallel, sweep_momentum, EsAggregation,
    SeedAggregate, SeedOutcome, Summary, SweepPoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Input width followed by the width of every backbone layer.
    pub layer_dims: Vec<usize>,
    pub norm_kind: NormKind,
    pub fin_momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    pub threshold: f64,
    pub shuffle: bool,
    pub es_aggregation: EsAggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![20, 32, 16],
            norm_kind: NormKind::FairIdentity,
            fin_momentum: DEFAULT_FIN_MOMENTUM,
            epochs: 10,
            batch_size: 6,
            optimizer: AdamWConfig::default(),
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            shuffle: true,
            es_aggregation: EsAggregation::PerSeed,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer_dims {:?} needs an input width and at least one positive layer width",
                self.layer_dims
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        let min_batch = if self.norm_kind == NormKind::Batch { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(Error::Config(format!(
                "batch_size must be at least {min_batch} for {}",
                self.norm_kind.label()
            )));
        }
        if !(0.0..=1.0).contains(&self.fin_momentum) {
            return Err(Error::Config(format!(
                "fin_momentum {} outside [0, 1]",
                self.fin_momentum
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        self.optimizer.validate()
    }

    fn check_dataset(&self, dataset: &Dataset, role: &str) -> Result<()> {
        if dataset.d != self.layer_dims[0] {
            return Err(Error::Shape(format!(
                "{role} set has d = {} but layer_dims starts with {}",
                dataset.d, self.layer_dims[0]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's mini-batches, weighted by batch size.
    pub train_loss: f64,
    pub eval: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    /// Cross-entropy of the freshly initialized model on the whole train set.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl RunHistory {
    pub fn final_report(&self) -> &MetricReport {
        &self.epochs.last().expect("at least one epoch").eval
    }

    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().expect("at least one epoch").train_loss
    }
}

pub(crate) fn design_matrix(dataset: &Dataset) -> Array2<f64> {
    Array2::from_shape_fn((dataset.len(), dataset.d), |(i, j)| dataset.samples[i].features[j])
}

fn mean_loss(model: &MlpModel, x: &Array2<f64>, attrs: &[Attribute], labels: &[u8]) -> Result<f64> {
    let (logits, _) = model.forward(x, attrs, Mode::Inference)?;
    Ok(cross_entropy(&logits, labels)?.0)
}

/// Trains a fresh model from `config.seed` and evaluates it on `eval_set`
/// after every epoch.
pub fn train(
    train_set: &Dataset,
    eval_set: &Dataset,
    config: &TrainConfig,
) -> Result<(Checkpoint, RunHistory)> {
    config.validate()?;
    config.check_dataset(train_set, "train")?;
    config.check_dataset(eval_set, "eval")?;
    let mut model = init_mlp(
        &config.layer_dims,
        config.norm_kind,
        train_set.group_count(),
        config.fin_momentum,
        config.seed,
    )?;

    let x = design_matrix(train_set);
    let attrs = train_set.attributes();
    let labels = train_set.labels();
    let initial_train_loss = mean_loss(&model, &x, &attrs, &labels)?;

    let mut shuffle_rng = rng::stream(config.seed, Stream::Shuffle);
    let mut optimizer = AdamWState::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            if config.norm_kind == NormKind::Batch && chunk.len() < 2 {
                continue;
            }
            let xb = x.select(Axis(0), chunk);
            let ab: Vec<Attribute> = chunk.iter().map(|&i| attrs[i]).collect();
            let lb: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (logits, cache) = model.forward(&xb, &ab, Mode::Training)?;
            let (loss, grad_logits) = cross_entropy(&logits, &lb)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            model.update_running_stats(&cache);
            let grads = model.backward(cache, &grad_logits)?;
            adamw_step(
                &mut model.param_blocks_mut(),
                &grads.blocks(),
                &mut optimizer,
                &config.optimizer,
            )?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let (_, eval) = evaluate(&model, eval_set, config.threshold)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            eval,
        });
    }

    let checkpoint = Checkpoint {
        config: config.clone(),
        model,
        epoch: config.epochs,
        rng: rng::describe(config.seed),
    };
    Ok((
        checkpoint,
        RunHistory {
            initial_train_loss,
            epochs,
        },
    ))
}

fn evaluate(
    model: &MlpModel,
    dataset: &Dataset,
    threshold: f64,
) -> Result<(Vec<PredictionRecord>, MetricReport)> {
    if dataset.d != model.input_dim() {
        return Err(Error::Shape(format!(
            "dataset has d = {} but the model expects {}",
            dataset.d,
            model.input_dim()
        )));
    }
    if let Normalizer::FairIdentity(p) = &model.norm {
        if let Some((row, s)) = dataset
            .samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.attribute.0 >= p.group_count())
        {
            return Err(Error::AttributeOutOfRange {
                record: format!("{} (row {})", s.id, row + 1),
                id: s.attribute.0,
                group_count: p.group_count(),
            });
        }
    }
    let scores = model.predict(&design_matrix(dataset), &dataset.attributes())?;
    let records = dataset
        .samples
        .iter()
        .zip(scores)
        .map(|(s, score)| PredictionRecord::new(s.id.clone(), score, s.label, s.attribute))
        .collect::<Result<Vec<_>>>()?;
    let report = full_report(&records, &dataset.attribute_set, threshold)?;
    Ok((records, report))
}

/// Inference-mode predictions and the full metric report for `dataset`.
pub fn evaluate_model(
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    threshold: f64,
) -> Result<(Vec<PredictionRecord>, MetricReport)> {
    evaluate(&checkpoint.model, dataset, threshold)
}
