use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use fin_equity::metrics::{prediction_histogram, Measure, Metric, MetricReport};
use fin_equity::synth::{self, SynthConfig};
use fin_equity::train::{
    evaluate_model, momentum_grid, run_seeds_parallel, sweep_momentum, Checkpoint, EsAggregation,
    SeedAggregate, Summary,
};
use fin_equity::{full_report, Dataset, NormKind, TrainConfig};
use serde::Serialize;

use crate::io;
use crate::{
    CliError, Command, EvaluateArgs, ReportArgs, SweepArgs, SynthArgs, TrainArgs, THREADS_ENV,
};

const REPORT_DECIMALS: usize = 6;

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::SweepMomentum(a) => cmd_sweep(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    }
}

fn print(out: &mut dyn Write, text: String) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })
}

/// Worker count from the environment; sequential when unset.
pub fn workers() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV}=`{v}` must be a positive integer"
            ))),
        },
    }
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("--seeds: `{s}` is not a seed")))
        })
        .collect()
}

/// `start:stop:step` or `a,b,c`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("--grid: `{s}` is not a number")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => Ok(momentum_grid(num(start)?, num(stop)?, num(step)?)?),
        [_] => text.split(',').map(num).collect(),
        _ => Err(CliError::Usage(format!(
            "--grid `{text}`: expected start:stop:step or a comma-separated list"
        ))),
    }
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    let config = match path {
        Some(p) => io::read_json(p)?,
        None => TrainConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn check_dims(config: &TrainConfig, data: &Dataset, path: &Path) -> Result<(), CliError> {
    if config.layer_dims[0] != data.d {
        return Err(CliError::input(
            path,
            format!(
                "dataset has {} features but the config's layer_dims start with {}",
                data.d, config.layer_dims[0]
            ),
        ));
    }
    Ok(())
}

fn load_pair(
    config: &TrainConfig,
    train: &Path,
    eval: &Path,
    groups: Option<&Path>,
) -> Result<(Dataset, Dataset), CliError> {
    let train_set = io::read_dataset(train, groups)?;
    let eval_set = io::read_dataset(eval, groups)?;
    check_dims(config, &train_set, train)?;
    check_dims(config, &eval_set, eval)?;
    if train_set.group_count() < eval_set.group_count() && groups.is_none() {
        // Keep group ids and names aligned across the two files.
        let set = eval_set.attribute_set.clone();
        let train_set = Dataset::new(train_set.d, set, train_set.samples)?;
        return Ok((train_set, eval_set));
    }
    if eval_set.group_count() < train_set.group_count() && groups.is_none() {
        let set = train_set.attribute_set.clone();
        let eval_set = Dataset::new(eval_set.d, set, eval_set.samples)?;
        return Ok((train_set, eval_set));
    }
    Ok((train_set, eval_set))
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config: SynthConfig = match &args.config {
        Some(p) => io::read_json(p)?,
        None => synth::default_benchmark(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (train, eval) = synth::generate(&config)?;
    io::write_dataset(&args.out_train, &train)?;
    io::write_dataset(&args.out_eval, &eval)?;
    if let Some(p) = &args.groups_out {
        io::write_groups(p, &train.attribute_set)?;
    }
    let mut text = format!(
        "{:<12} {:>6} {:>6} {:>6} {:>6}\n",
        "group", "train", "pos", "eval", "pos"
    );
    for (g, name) in train.attribute_set.names().iter().enumerate() {
        let count = |ds: &Dataset, positive: bool| {
            ds.samples
                .iter()
                .filter(|s| s.attribute.0 == g && (!positive || s.label == 1))
                .count()
        };
        text += &format!(
            "{:<12} {:>6} {:>6} {:>6} {:>6}\n",
            name,
            count(&train, false),
            count(&train, true),
            count(&eval, false),
            count(&eval, true)
        );
    }
    print(out, text)
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    norm_kind: NormKind,
    fin_momentum: f64,
    seeds: &'a [u64],
    es_aggregation: EsAggregation,
    metrics: &'a BTreeMap<String, Summary>,
}

/// `73.03±1.45`: percentages, two decimals.
pub fn mean_std(s: &Summary) -> String {
    format!("{:.2}±{:.2}", 100.0 * s.mean, 100.0 * s.std)
}

fn aggregate_table(agg: &SeedAggregate) -> String {
    let mut text = format!("{:<24} {}\n", "metric", "mean±std (%)");
    for (key, s) in &agg.metrics {
        text += &format!("{key:<24} {}\n", mean_std(s));
    }
    text
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_train_config(args.config.as_deref())?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![config.seed],
    };
    let (train_set, eval_set) =
        load_pair(&config, &args.train, &args.eval, args.groups.as_deref())?;
    let (outcomes, agg) = run_seeds_parallel(&train_set, &eval_set, &config, &seeds, workers()?)?;

    let prefix = &args.out_prefix;
    for o in &outcomes {
        let ckpt = PathBuf::from(format!("{prefix}seed{}.ckpt.json", o.seed));
        io::write_text(&ckpt, &o.checkpoint.to_json()?)?;
        let history = PathBuf::from(format!("{prefix}seed{}.history.json", o.seed));
        io::write_json(&history, &o.history, REPORT_DECIMALS)?;
    }
    let file = AggregateFile {
        norm_kind: config.norm_kind,
        fin_momentum: config.fin_momentum,
        seeds: &agg.seeds,
        es_aggregation: agg.es_aggregation,
        metrics: &agg.metrics,
    };
    io::write_json(Path::new(&format!("{prefix}aggregate.json")), &file, REPORT_DECIMALS)?;
    print(
        out,
        format!(
            "{} over {} seed(s)\n{}",
            config.norm_kind.label(),
            seeds.len(),
            aggregate_table(&agg)
        ),
    )
}

fn measure(m: Measure, percent: bool) -> String {
    match m.value() {
        Some(v) if percent => format!("{:.2}", 100.0 * v),
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    }
}

/// Per-metric table: overall, each group, delta and the equity-scaled score.
pub fn report_table(report: &MetricReport, percent: bool) -> String {
    let mut header = format!("{:<10} {:>10}", "metric", "overall");
    for g in &report.groups {
        header += &format!(" {g:>10}");
    }
    header += &format!(" {:>10} {:>10}\n", "delta", "es");
    let mut text = header;
    for metric in Metric::ALL {
        text += &format!("{:<10} {:>10}", metric.name(), measure(report.overall(metric), percent));
        for g in 0..report.groups.len() {
            text += &format!(" {:>10}", measure(report.group(g, metric), percent));
        }
        text += &format!(
            " {:>10} {:>10}\n",
            measure(report.delta(metric), percent),
            measure(report.equity_scaled(metric), percent)
        );
    }
    text += &format!(
        "dpd {}  deodds {}\n",
        measure(report.dpd, percent),
        measure(report.deodds, percent)
    );
    text
}

fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let checkpoint: Checkpoint = Checkpoint::from_json(&io::read_text(&args.checkpoint)?)
        .map_err(|e| match e {
            fin_equity::Error::CheckpointMalformed(source) => CliError::Json {
                path: args.checkpoint.display().to_string(),
                source,
            },
            other => CliError::Core(other),
        })?;
    let data = io::read_dataset(&args.data, args.groups.as_deref())?;
    let threshold = args.threshold.unwrap_or(checkpoint.config.threshold);
    let (records, report) = evaluate_model(&checkpoint, &data, threshold).map_err(|e| match e {
        fin_equity::Error::AttributeOutOfRange { .. } | fin_equity::Error::Shape(_) => {
            CliError::input(&args.data, e.to_string())
        }
        other => CliError::Core(other),
    })?;
    io::write_json(&args.out, &report, REPORT_DECIMALS)?;
    if let Some(p) = &args.preds_out {
        io::write_predictions(p, &records)?;
    }
    print(out, report_table(&report, args.percent))
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (records, set) = io::read_predictions(&args.predictions, args.groups.as_deref())?;
    let report = full_report(&records, &set, args.threshold)?;
    io::write_json(&args.out, &report, REPORT_DECIMALS)?;
    if let Some(p) = &args.hist_out {
        let hist = prediction_histogram(&records, args.threshold, args.bins)?;
        io::write_histogram(p, &hist)?;
    }
    print(out, report_table(&report, args.percent))
}

/// Keys written as per-m arrays in the sweep file.
pub const SWEEP_KEYS: [&str; 6] = ["auc", "es_auc", "dpd", "deodds", "accuracy", "es_accuracy"];

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_train_config(args.config.as_deref())?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![config.seed],
    };
    let grid = parse_grid(&args.grid)?;
    let (train_set, eval_set) =
        load_pair(&config, &args.train, &args.eval, args.groups.as_deref())?;
    let points = sweep_momentum(&train_set, &eval_set, &config, &grid, &seeds, workers()?)?;

    let mut file = serde_json::Map::new();
    file.insert("norm_kind".into(), serde_json::to_value(config.norm_kind).expect("enum"));
    file.insert("seeds".into(), seeds.clone().into());
    file.insert("m".into(), points.iter().map(|p| p.momentum).collect::<Vec<_>>().into());
    for key in SWEEP_KEYS {
        let column = |f: fn(&Summary) -> f64| -> serde_json::Value {
            points
                .iter()
                .map(|p| p.aggregate.get(key).map(f))
                .collect::<Vec<Option<f64>>>()
                .into()
        };
        file.insert(key.into(), column(|s| s.mean));
        file.insert(format!("{key}_std"), column(|s| s.std));
    }
    io::write_json(&args.out, &file, REPORT_DECIMALS)?;

    let mut text = format!("{:>5}", "m");
    for key in &SWEEP_KEYS[..4] {
        text += &format!(" {key:>14}");
    }
    text.push('\n');
    for p in &points {
        text += &format!("{:>5.2}", p.momentum);
        for key in &SWEEP_KEYS[..4] {
            let cell = p.aggregate.get(key).map_or("undefined".into(), mean_std);
            text += &format!(" {cell:>14}");
        }
        text.push('\n');
    }
    print(out, text)
}
