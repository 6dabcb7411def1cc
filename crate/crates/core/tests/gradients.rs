use fin_equity::gradcheck::{check_model, kink_margin};
use fin_equity::net::init_mlp;
use fin_equity::norm::{Mode, NormKind};
use fin_equity::Attribute;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [NormKind; 4] = [
    NormKind::None,
    NormKind::Batch,
    NormKind::LearnableShared,
    NormKind::FairIdentity,
];

fn worst_error(kind: NormKind, dims: &[usize], batch: usize, draws: usize, mode: Mode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 100);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < draws {
        let groups = 3;
        let m = rng.random_range(0.0..1.0);
        let model = init_mlp(dims, kind, groups, m, rng.random()).unwrap();
        let x = Array2::from_shape_fn((batch, dims[0]), |_| rng.random_range(-2.0..2.0));
        if kink_margin(&model, &x) < 1e-3 {
            continue;
        }
        let attrs: Vec<Attribute> = (0..batch).map(|_| Attribute(rng.random_range(0..groups))).collect();
        let probe = Array2::from_shape_fn((batch, 2), |_| rng.random_range(-1.0..1.0));
        let check = check_model(&model, &x, &attrs, &probe, mode, 1e-5).unwrap();
        assert!(
            check.max_relative_error < 1e-4,
            "{kind:?}: {} at {:?}",
            check.max_relative_error,
            check.worst
        );
        worst = worst.max(check.max_relative_error);
        done += 1;
    }
    worst
}

#[test]
fn every_normalizer_matches_finite_differences() {
    for kind in KINDS {
        worst_error(kind, &[5, 4, 3], 6, 20, Mode::Training);
    }
}

#[test]
fn deeper_backbone_matches_finite_differences() {
    for kind in KINDS {
        worst_error(kind, &[6, 8, 5, 4], 5, 5, Mode::Training);
    }
}

#[test]
fn batch_norm_inference_path_matches_finite_differences() {
    worst_error(NormKind::Batch, &[5, 4, 3], 6, 10, Mode::Inference);
}
