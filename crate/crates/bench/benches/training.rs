use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fin_equity::data::Attribute;
use fin_equity::net::{cross_entropy, init_mlp};
use fin_equity::norm::{Mode, NormKind};
use fin_equity::optim::{adamw_step, AdamWConfig, AdamWState};
use fin_equity::synth::{default_benchmark, generate};
use fin_equity::train::{train, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [NormKind; 4] = [
    NormKind::None,
    NormKind::Batch,
    NormKind::LearnableShared,
    NormKind::FairIdentity,
];

/// One mini-batch step: forward, loss, backward, optimizer update.
fn bench_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = 6;
    let x = Array2::from_shape_fn((batch, 20), |_| rng.random_range(-1.0..1.0));
    let attrs: Vec<Attribute> = (0..batch).map(|i| Attribute(i % 3)).collect();
    let labels: Vec<u8> = (0..batch).map(|i| (i % 2) as u8).collect();
    let config = AdamWConfig::default();

    let mut group = c.benchmark_group("train_step");
    for kind in KINDS {
        let mut model = init_mlp(&[20, 32, 16], kind, 3, 0.3, 0).unwrap();
        let mut state = AdamWState::default();
        group.bench_function(BenchmarkId::from_parameter(kind.label()), |b| {
            b.iter(|| {
                let (logits, cache) = model.forward(&x, &attrs, Mode::Training).unwrap();
                let (_, grad) = cross_entropy(&logits, &labels).unwrap();
                model.update_running_stats(&cache);
                let grads = model.backward(cache, &grad).unwrap();
                adamw_step(&mut model.param_blocks_mut(), &grads.blocks(), &mut state, &config).unwrap();
            })
        });
    }
    group.finish();
}

/// A full epoch on the default benchmark, including the evaluation pass.
fn bench_epoch(c: &mut Criterion) {
    let (tr, ev) = generate(&default_benchmark()).unwrap();
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    for kind in [NormKind::None, NormKind::FairIdentity] {
        let config = TrainConfig { norm_kind: kind, epochs: 1, ..TrainConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(kind.label()), |b| {
            b.iter(|| train(&tr, &ev, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_step, bench_epoch);
criterion_main!(benches);
