//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Run with `cargo test -p fin-equity-cli --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use common::{cli, craft_predictions, path_str};
use fin_equity::data::{Attribute, AttributeSet, Dataset};
use fin_equity::gradcheck::{check_model, kink_margin};
use fin_equity::metrics::{auc, discrepancy, equity_scaled, Metric};
use fin_equity::net::{init_mlp, BlockKind, ParamBlock};
use fin_equity::norm::{FinParams, Mode, NormKind, Normalizer};
use fin_equity::optim::{adamw_step, AdamWConfig, AdamWState};
use fin_equity::synth::{default_benchmark, generate, oracle_auc};
use fin_equity::train::{
    evaluate_model, load_checkpoint, run_seeds_parallel, save_checkpoint, train, TrainConfig,
};
use fin_equity_cli::io;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [NormKind; 4] = [
    NormKind::None,
    NormKind::Batch,
    NormKind::LearnableShared,
    NormKind::FairIdentity,
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn es_of(overall: f64, groups: &[f64]) -> f64 {
    let g: BTreeMap<usize, f64> = groups.iter().copied().enumerate().collect();
    equity_scaled(overall, discrepancy(overall, &g).unwrap())
}

fn es_reconciliation() -> Outcome {
    let no_norm = es_of(0.8695, &[0.8929, 0.8166, 0.8936]);
    let fin = es_of(0.8714, &[0.8958, 0.8270, 0.8760]);
    let two_groups = es_of(0.8612, &[0.8526, 0.8735]);

    // The same row through the audit command on predictions that realize it.
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.csv");
    let report = dir.path().join("report.json");
    io::write_predictions(&preds, &craft_predictions(0.8695, &[0.8929, 0.8166, 0.8936], 100)).unwrap();
    let (code, _) = cli(&["report", "--predictions", path_str(&preds), "--out", path_str(&report)]);
    let stored: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let from_cli = stored["equity_scaled"]["auc"].as_f64().unwrap_or(f64::NAN);

    let pass = format!("{no_norm:.4}") == "0.7902"
        && (fin - 0.8118).abs() <= 0.0015
        && format!("{two_groups:.4}") == "0.8436"
        && code == 0
        && format!("{from_cli:.4}") == "0.7902";
    Outcome {
        pass,
        detail: format!(
            "3-group no-norm {no_norm:.4} (0.7902), FIN {fin:.5} (0.8118 ±0.0015), \
             2-group {two_groups:.4} (0.8436), via report command {from_cli:.4}"
        ),
    }
}

fn seed_averaged_rows() -> Outcome {
    let pct = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x / 100.0).collect() };
    let no_norm = es_of(0.8497, &pct(&[88.00, 79.46, 86.28]));
    let lbn = es_of(0.8492, &pct(&[86.74, 81.22, 85.78]));
    let bn = es_of(0.8439, &pct(&[87.51, 79.27, 84.93]));
    let pass = (no_norm - 0.7736).abs() <= 0.005 && (lbn - 0.7984).abs() <= 0.005;
    Outcome {
        pass,
        detail: format!(
            "no-norm {no_norm:.4} vs 0.7736, L-BN {lbn:.4} vs 0.7984 (±0.005); \
             BN {bn:.4} vs printed 0.7686 is a known aggregation artifact (off by {:.4}, not scored)",
            (bn - 0.7686).abs()
        ),
    }
}

fn pair_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        // A small pool of score levels forces ties.
        let levels = rng.random_range(1..=n.max(2));
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let diff = (auc(&scores, &labels).unwrap() - pair_oracle(&scores, &labels)).abs();
        worst = worst.max(diff);
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("1000 tied instances, max |rank - pairs| = {worst:.1e}"),
    }
}

fn gradient_suite() -> Outcome {
    let mut worst_by_kind = Vec::new();
    let mut pass = true;
    for kind in KINDS {
        let mut rng = ChaCha8Rng::seed_from_u64(7 + kind as u64);
        let mut worst = 0.0f64;
        let mut done = 0;
        while done < 20 {
            let dims = [5, 4, 3];
            let (batch, groups) = (6, 3);
            let model = init_mlp(&dims, kind, groups, rng.random_range(0.0..1.0), rng.random()).unwrap();
            let x = Array2::from_shape_fn((batch, dims[0]), |_| rng.random_range(-2.0..2.0));
            if kink_margin(&model, &x) < 1e-3 {
                continue;
            }
            let attrs: Vec<Attribute> = (0..batch).map(|_| Attribute(rng.random_range(0..groups))).collect();
            let probe = Array2::from_shape_fn((batch, 2), |_| rng.random_range(-1.0..1.0));
            let check = check_model(&model, &x, &attrs, &probe, Mode::Training, 1e-5).unwrap();
            worst = worst.max(check.max_relative_error);
            done += 1;
        }
        pass &= worst < 1e-4;
        worst_by_kind.push(format!("{} {worst:.1e}", kind.label()));
    }
    Outcome {
        pass,
        detail: format!("20 configs per kind, max relative error: {}", worst_by_kind.join(", ")),
    }
}

fn small_benchmark() -> (Dataset, Dataset) {
    let mut c = default_benchmark();
    c.d = 8;
    for g in &mut c.groups {
        g.n_train = 80;
        g.n_eval = 30;
    }
    generate(&c).unwrap()
}

fn small_config(kind: NormKind, seed: u64) -> TrainConfig {
    TrainConfig {
        layer_dims: vec![8, 12, 6],
        norm_kind: kind,
        epochs: 5,
        seed,
        optimizer: AdamWConfig { lr: 1e-3, ..AdamWConfig::default() },
        ..TrainConfig::default()
    }
}

fn degeneracy_gates() -> Outcome {
    let (tr, ev) = small_benchmark();
    let mut full_momentum = true;
    for seed in 0..3 {
        let fin = TrainConfig { fin_momentum: 1.0, ..small_config(NormKind::FairIdentity, seed) };
        let (fc, fh) = train(&tr, &ev, &fin).unwrap();
        let (nc, nh) = train(&tr, &ev, &small_config(NormKind::None, seed)).unwrap();
        full_momentum &= fh == nh && fc.model.backbone == nc.model.backbone && fc.model.head == nc.model.head;
    }

    let one_group = |ds: &Dataset| {
        let mut samples = ds.samples.clone();
        samples.iter_mut().for_each(|s| s.attribute = Attribute(0));
        Dataset::new(ds.d, AttributeSet::anonymous(1).unwrap(), samples).unwrap()
    };
    let (tr1, ev1) = (one_group(&tr), one_group(&ev));
    let mut shared = true;
    for seed in 0..3 {
        let (lc, lh) = train(&tr1, &ev1, &small_config(NormKind::LearnableShared, seed)).unwrap();
        let (fc, fh) = train(&tr1, &ev1, &small_config(NormKind::FairIdentity, seed)).unwrap();
        let same_norm = match (&lc.model.norm, &fc.model.norm) {
            (Normalizer::LearnableShared(a), Normalizer::FairIdentity(b)) => a == b,
            _ => false,
        };
        shared &= lh == fh && lc.model.backbone == fc.model.backbone && lc.model.head == fc.model.head && same_norm;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = FinParams::new(Array2::zeros((3, 4)), Array2::zeros((3, 4)), 0.3).unwrap();
    let mut state = AdamWState::default();
    let config = AdamWConfig { lr: 1e-2, ..AdamWConfig::default() };
    let mut positive = true;
    for _ in 0..10_000 {
        let g: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..3.0)).collect();
        let mut blocks = vec![ParamBlock {
            name: "norm.tau".into(),
            kind: BlockKind::Normalizer,
            values: params.tau.as_slice_mut().unwrap(),
        }];
        adamw_step(&mut blocks, &[&g], &mut state, &config).unwrap();
        positive &= params.sigma().iter().all(|&s| s > 0.0 && s.is_finite());
    }
    let min_sigma = params.sigma().iter().cloned().fold(f64::INFINITY, f64::min);

    Outcome {
        pass: full_momentum && shared && positive,
        detail: format!(
            "FIN m=1 == no-norm: {full_momentum}; L-BN == 1-group FIN: {shared}; \
             sigma > 0 over 10000 tau updates: {positive} (min {min_sigma:.2e})"
        ),
    }
}

const TREND_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Mean ES-AUC and per-seed hardest-group AUC for one recipe.
fn trend_run(tr: &Dataset, ev: &Dataset, base: &TrainConfig, kind: NormKind) -> (f64, Vec<f64>) {
    let config = TrainConfig { norm_kind: kind, ..base.clone() };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(TREND_SEEDS.len());
    let (outcomes, agg) = run_seeds_parallel(tr, ev, &config, &TREND_SEEDS, workers).unwrap();
    let hardest = outcomes
        .iter()
        .map(|o| o.report().group(1, Metric::Auc).value().unwrap())
        .collect();
    (agg.mean("es_auc").unwrap(), hardest)
}

fn end_to_end_trend() -> (Outcome, String) {
    let bench = default_benchmark();
    assert_eq!(bench.groups[1].separation, 1.2, "group 1 is the hardest group");
    let (tr, ev) = generate(&bench).unwrap();
    let recipe = |epochs| TrainConfig { epochs, fin_momentum: 0.3, ..TrainConfig::default() };

    let base = recipe(50);
    let (fin_es, fin_hard) = trend_run(&tr, &ev, &base, NormKind::FairIdentity);
    let (none_es, none_hard) = trend_run(&tr, &ev, &base, NormKind::None);
    let wins = fin_hard.iter().zip(&none_hard).filter(|(f, n)| f >= n).count();
    let outcome = Outcome {
        pass: fin_es > none_es && wins >= 4,
        detail: format!(
            "lr 5e-5, batch 6, 50 epochs: ES-AUC FIN {fin_es:.4} vs no-norm {none_es:.4}; \
             hardest-group AUC FIN >= no-norm in {wins}/5 seeds"
        ),
    };

    // The 10-epoch recipe is reported for reference; it is not scored.
    let short = recipe(10);
    let (fin_es, fin_hard) = trend_run(&tr, &ev, &short, NormKind::FairIdentity);
    let (none_es, none_hard) = trend_run(&tr, &ev, &short, NormKind::None);
    let wins = fin_hard.iter().zip(&none_hard).filter(|(f, n)| f >= n).count();
    let info = format!(
        "10 epochs (undertrained): ES-AUC FIN {fin_es:.4} vs no-norm {none_es:.4}; hardest group {wins}/5"
    );
    (outcome, info)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s);
    let (tr, ev) = small_benchmark();
    io::write_dataset(&p("train.csv"), &tr).unwrap();
    io::write_dataset(&p("eval.csv"), &ev).unwrap();
    fs::write(p("config.json"), r#"{"layer_dims": [8, 12, 6], "epochs": 3, "optimizer": {"lr": 0.001}}"#).unwrap();
    let run = |tag: &str| {
        let prefix = format!("{}/{tag}-", dir.path().display());
        let (code, _) = cli(&[
            "train", "--config", path_str(&p("config.json")), "--train", path_str(&p("train.csv")),
            "--eval", path_str(&p("eval.csv")), "--seeds", "11,12", "--out-prefix", &prefix,
        ]);
        assert_eq!(code, 0);
        (
            fs::read(format!("{prefix}seed11.ckpt.json")).unwrap(),
            fs::read(format!("{prefix}seed12.ckpt.json")).unwrap(),
        )
    };
    let identical_files = run("a") == run("b");

    let mut preserved = true;
    for kind in KINDS {
        let (ckpt, history) = train(&tr, &ev, &small_config(kind, 3)).unwrap();
        let path = p(&format!("{}.ckpt.json", kind.label()));
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let (_, report) = evaluate_model(&loaded, &ev, ckpt.config.threshold).unwrap();
        preserved &= &report == history.final_report() && loaded == ckpt;
    }
    Outcome {
        pass: identical_files && preserved,
        detail: format!(
            "train command twice -> byte-identical checkpoints: {identical_files}; \
             save -> load -> evaluate reproduces the report for every kind: {preserved}"
        ),
    }
}

fn synthetic_oracle() -> Outcome {
    const PAIRS: usize = 100_000;
    let mut config = default_benchmark();
    for g in &mut config.groups {
        g.n_train = 270_000;
        g.n_eval = 1;
    }
    let (train, _) = generate(&config).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (g, spec) in config.groups.iter().enumerate() {
        let class = |y: u8| -> Vec<f64> {
            train
                .samples
                .iter()
                .filter(|s| s.attribute.0 == g && s.label == y)
                .map(|s| s.features[0])
                .take(PAIRS)
                .collect()
        };
        let (pos, neg) = (class(1), class(0));
        let wins = pos.iter().zip(&neg).filter(|(p, n)| p > n).count();
        let estimate = wins as f64 / PAIRS as f64;
        let expected = oracle_auc(spec.separation);
        pass &= pos.len() == PAIRS && neg.len() == PAIRS && (estimate - expected).abs() < 0.01;
        parts.push(format!("{} {estimate:.4} vs {expected:.4}", spec.name));
    }
    Outcome {
        pass,
        detail: format!("1e5 pairs per group: {}", parts.join(", ")),
    }
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failures += 1;
        }
        println!("{status} {name}: {} [{:.1}s]", outcome.detail, start.elapsed().as_secs_f64());
    };
    report("es-reconciliation", &es_reconciliation);
    report("seed-averaged-rows", &seed_averaged_rows);
    report("auc-oracle", &auc_oracle);
    report("gradient-suite", &gradient_suite);
    report("degeneracy-gates", &degeneracy_gates);
    let info = std::cell::RefCell::new(String::new());
    report("end-to-end-trend", &|| {
        let (outcome, note) = end_to_end_trend();
        *info.borrow_mut() = note;
        outcome
    });
    println!("INFO end-to-end-trend: {}", info.borrow());
    report("determinism", &determinism);
    report("synthetic-oracle", &synthetic_oracle);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
