//! Multi-seed runs, their aggregation, and momentum sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Checkpoint, RunHistory, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{discrepancy, equity_scaled, Metric, MetricReport};

/// How the equity-scaled score of a multi-seed run is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsAggregation {
    /// Score every seed, then average the scores.
    #[default]
    PerSeed,
    /// Average the overall and per-group metrics over seeds, then score the means.
    OfMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub checkpoint: Checkpoint,
    pub history: RunHistory,
}

impl SeedOutcome {
    pub fn report(&self) -> &MetricReport {
        self.history.final_report()
    }
}

/// Mean and sample standard deviation (`n - 1`; zero for one value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

/// Final-epoch metrics summarized over seeds. A metric that is undefined for
/// some seed is summarized over the seeds where it is defined (see `n`), and
/// left out entirely when no seed defines it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seeds: Vec<u64>,
    pub es_aggregation: EsAggregation,
    pub metrics: BTreeMap<String, Summary>,
}

impl SeedAggregate {
    pub fn get(&self, key: &str) -> Option<&Summary> {
        self.metrics.get(key)
    }

    pub fn mean(&self, key: &str) -> Option<f64> {
        self.get(key).map(|s| s.mean)
    }
}

fn collect(values: &mut BTreeMap<String, Vec<f64>>, key: String, value: Option<f64>) {
    let entry = values.entry(key).or_default();
    if let Some(v) = value {
        entry.push(v);
    }
}

/// Summarizes one report per seed. Keys are `accuracy`, `auc`, `es_*`,
/// `delta_*`, `dpd`, `deodds`, and `{metric}.{group name}`.
pub fn aggregate(runs: &[(u64, &MetricReport)], mode: EsAggregation) -> SeedAggregate {
    let mut runs = runs.to_vec();
    runs.sort_by_key(|(seed, _)| *seed);
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (_, report) in &runs {
        for metric in Metric::ALL {
            let name = metric.name();
            collect(&mut values, name.to_string(), report.overall(metric).value());
            collect(&mut values, format!("delta_{name}"), report.delta(metric).value());
            if mode == EsAggregation::PerSeed {
                collect(&mut values, format!("es_{name}"), report.equity_scaled(metric).value());
            }
            for (g, group) in report.groups.iter().enumerate() {
                collect(&mut values, format!("{name}.{group}"), report.group(g, metric).value());
            }
        }
        collect(&mut values, "dpd".into(), report.dpd.value());
        collect(&mut values, "deodds".into(), report.deodds.value());
    }
    let mut metrics: BTreeMap<String, Summary> = values
        .iter()
        .filter_map(|(k, v)| Summary::of(v).map(|s| (k.clone(), s)))
        .collect();

    if mode == EsAggregation::OfMeans {
        if let Some((_, first)) = runs.first() {
            for metric in Metric::ALL {
                let name = metric.name();
                let Some(overall) = metrics.get(name) else { continue };
                let groups: BTreeMap<usize, f64> = first
                    .groups
                    .iter()
                    .enumerate()
                    .filter_map(|(g, group)| {
                        metrics.get(&format!("{name}.{group}")).map(|s| (g, s.mean))
                    })
                    .collect();
                if let Ok(delta) = discrepancy(overall.mean, &groups) {
                    let es = Summary {
                        mean: equity_scaled(overall.mean, delta),
                        std: 0.0,
                        n: overall.n,
                    };
                    metrics.insert(format!("es_{name}"), es);
                }
            }
        }
    }

    SeedAggregate {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        es_aggregation: mode,
        metrics,
    }
}

fn run_one(train_set: &Dataset, eval_set: &Dataset, config: &TrainConfig, seed: u64) -> Result<SeedOutcome> {
    let config = TrainConfig {
        seed,
        ..config.clone()
    };
    let (checkpoint, history) = train(train_set, eval_set, &config).map_err(|e| Error::Seed {
        seed,
        source: Box::new(e),
    })?;
    Ok(SeedOutcome {
        seed,
        checkpoint,
        history,
    })
}

fn finish(
    mut outcomes: Vec<SeedOutcome>,
    config: &TrainConfig,
) -> (Vec<SeedOutcome>, SeedAggregate) {
    outcomes.sort_by_key(|o| o.seed);
    let reports: Vec<(u64, &MetricReport)> = outcomes.iter().map(|o| (o.seed, o.report())).collect();
    let agg = aggregate(&reports, config.es_aggregation);
    (outcomes, agg)
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config("seeds must be distinct".into()));
    }
    Ok(())
}

/// Trains one model per seed, sequentially. `config.seed` is ignored.
pub fn run_seeds(
    train_set: &Dataset,
    eval_set: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<(Vec<SeedOutcome>, SeedAggregate)> {
    config.validate()?;
    check_seeds(seeds)?;
    let outcomes = seeds
        .iter()
        .map(|&s| run_one(train_set, eval_set, config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(outcomes, config))
}

/// [`run_seeds`] on a pool of `workers` threads. Every seed owns its random
/// streams, so the result is identical to the sequential one.
pub fn run_seeds_parallel(
    train_set: &Dataset,
    eval_set: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<(Vec<SeedOutcome>, SeedAggregate)> {
    if workers <= 1 {
        return run_seeds(train_set, eval_set, config, seeds);
    }
    config.validate()?;
    check_seeds(seeds)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let outcomes = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_one(train_set, eval_set, config, s))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(finish(outcomes, config))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub momentum: f64,
    pub outcomes: Vec<SeedOutcome>,
    pub aggregate: SeedAggregate,
}

/// `start, start + step, ...` up to `stop` inclusive, each value rounded to
/// 12 decimals so that `0.1 * 3` comes out as `0.3`.
pub fn momentum_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(start <= stop) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!(
            "bad momentum grid {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Runs every seed at every momentum in `grid` (sorted ascending, within
/// [0, 1]) for a normalizer kind that has a momentum.
pub fn sweep_momentum(
    train_set: &Dataset,
    eval_set: &Dataset,
    config: &TrainConfig,
    grid: &[f64],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<SweepPoint>> {
    if !config.norm_kind.has_momentum() {
        return Err(Error::Config(format!(
            "{} has no momentum to sweep",
            config.norm_kind.label()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("momentum grid is empty".into()));
    }
    if grid.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::Config("momentum grid must lie within [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("momentum grid must be strictly increasing".into()));
    }
    grid.iter()
        .map(|&momentum| {
            let config = TrainConfig {
                fin_momentum: momentum,
                ..config.clone()
            };
            let (outcomes, aggregate) =
                run_seeds_parallel(train_set, eval_set, &config, seeds, workers)?;
            Ok(SweepPoint {
                momentum,
                outcomes,
                aggregate,
            })
        })
        .collect()
}
