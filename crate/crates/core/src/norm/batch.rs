use ndarray::{Array1, Array2, Axis};

use super::Mode;
use crate::error::{Error, Result};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Batch normalization with a learnable affine and running statistics for
/// inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormState {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
            running_mean: Array1::zeros(d),
            running_var: Array1::ones(d),
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// running estimates. Inference caches are ignored.
    pub fn update_running_stats(&mut self, cache: &BatchNormCache) {
        let Some(stats) = &cache.batch else {
            return;
        };
        let n = cache.x_hat.nrows() as f64;
        let unbiased = &stats.var * (n / (n - 1.0));
        let k = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - k) + &stats.mean * k;
        self.running_var = &self.running_var * (1.0 - k) + unbiased * k;
    }
}

#[derive(Debug)]
struct BatchStats {
    mean: Array1<f64>,
    var: Array1<f64>,
}

#[derive(Debug)]
pub struct BatchNormCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    gamma: Array1<f64>,
    /// Present only for training-mode passes.
    batch: Option<BatchStats>,
}

pub fn bn_forward(
    z: &Array2<f64>,
    state: &BatchNormState,
    mode: Mode,
) -> Result<(Array2<f64>, BatchNormCache)> {
    if z.ncols() != state.gamma.len() {
        return Err(Error::Shape(format!(
            "batch norm expects {} features, got {}",
            state.gamma.len(),
            z.ncols()
        )));
    }
    let (mean, var, batch) = match mode {
        Mode::Training => {
            if z.nrows() < 2 {
                return Err(Error::Input(
                    "batch normalization needs at least 2 samples in training mode".into(),
                ));
            }
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let var = z.var_axis(Axis(0), 0.0);
            let stats = BatchStats {
                mean: mean.clone(),
                var: var.clone(),
            };
            (mean, var, Some(stats))
        }
        Mode::Inference => (state.running_mean.clone(), state.running_var.clone(), None),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + state.eps).sqrt());
    let x_hat = (z - &mean) * &inv_std;
    let out = &x_hat * &state.gamma + &state.beta;
    let cache = BatchNormCache {
        x_hat,
        inv_std,
        gamma: state.gamma.clone(),
        batch,
    };
    Ok((out, cache))
}

/// Returns `(grad_z, grad_gamma, grad_beta)`. In training mode the input
/// gradient includes the coupling through the batch mean and variance.
pub fn bn_backward(
    grad_out: &Array2<f64>,
    cache: BatchNormCache,
) -> Result<(Array2<f64>, Array1<f64>, Array1<f64>)> {
    if grad_out.dim() != cache.x_hat.dim() {
        return Err(Error::CacheMismatch(format!(
            "gradient shape {:?} vs forward shape {:?}",
            grad_out.dim(),
            cache.x_hat.dim()
        )));
    }
    let grad_beta = grad_out.sum_axis(Axis(0));
    let grad_gamma = (grad_out * &cache.x_hat).sum_axis(Axis(0));
    let grad_x_hat = grad_out * &cache.gamma;
    let grad_z = match cache.batch {
        Some(_) => {
            let n = grad_out.nrows() as f64;
            let sum = grad_x_hat.sum_axis(Axis(0));
            let dot = (&grad_x_hat * &cache.x_hat).sum_axis(Axis(0));
            ((&grad_x_hat * n) - &sum - &cache.x_hat * &dot) * &(&cache.inv_std / n)
        }
        None => grad_x_hat * &cache.inv_std,
    };
    Ok((grad_z, grad_gamma, grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_column_maps_to_beta() {
        let mut state = BatchNormState::new(2);
        state.beta = array![0.25, -1.0];
        let z = array![[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]];
        let (out, _) = bn_forward(&z, &state, Mode::Training).unwrap();
        for i in 0..3 {
            assert_eq!(out[[i, 0]], 0.25);
        }
    }

    #[test]
    fn symmetric_pair_normalizes_to_unit() {
        let state = BatchNormState::new(3);
        let z = array![[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]];
        let (out, _) = bn_forward(&z, &state, Mode::Training).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        for j in 0..3 {
            assert!((out[[0, j]] + expected).abs() < 1e-15);
            assert!((out[[1, j]] - expected).abs() < 1e-15);
        }
        assert!((expected - 1.0).abs() < 1e-5);
    }

    #[test]
    fn single_sample_training_batch_is_rejected() {
        let state = BatchNormState::new(2);
        assert!(bn_forward(&array![[1.0, 2.0]], &state, Mode::Training).is_err());
        assert!(bn_forward(&array![[1.0, 2.0]], &state, Mode::Inference).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut state = BatchNormState::new(1);
        let z = array![[1.0], [3.0]];
        let (_, cache) = bn_forward(&z, &state, Mode::Training).unwrap();
        state.update_running_stats(&cache);
        // mean 2, unbiased var 2
        assert!((state.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((state.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);

        let before = state.clone();
        let (_, cache) = bn_forward(&z, &state, Mode::Inference).unwrap();
        state.update_running_stats(&cache);
        assert_eq!(state, before);
    }

    fn gradient_check(mode: Mode, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (8, 5);
        let mut state = BatchNormState::new(d);
        state.gamma = Array1::from_shape_fn(d, |_| rng.random_range(0.5..1.5));
        state.beta = Array1::from_shape_fn(d, |_| rng.random_range(-0.5..0.5));
        state.running_mean = Array1::from_shape_fn(d, |_| rng.random_range(-0.5..0.5));
        state.running_var = Array1::from_shape_fn(d, |_| rng.random_range(0.5..2.0));
        let z = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let w = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let loss = |z: &Array2<f64>, s: &BatchNormState| {
            let (out, _) = bn_forward(z, s, mode).unwrap();
            (&out * &w).sum()
        };
        let (_, cache) = bn_forward(&z, &state, mode).unwrap();
        let (gz, gg, gb) = bn_backward(&w, cache).unwrap();
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        for idx in ndarray::indices(z.dim()) {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[idx] += h;
            zm[idx] -= h;
            let fd = (loss(&zp, &state) - loss(&zm, &state)) / (2.0 * h);
            assert!(rel(gz[idx], fd) < 1e-4, "z{idx:?}: {} vs {fd}", gz[idx]);
        }
        for j in 0..d {
            let (mut sp, mut sm) = (state.clone(), state.clone());
            sp.gamma[j] += h;
            sm.gamma[j] -= h;
            let fd = (loss(&z, &sp) - loss(&z, &sm)) / (2.0 * h);
            assert!(rel(gg[j], fd) < 1e-4);
            let (mut sp, mut sm) = (state.clone(), state.clone());
            sp.beta[j] += h;
            sm.beta[j] -= h;
            let fd = (loss(&z, &sp) - loss(&z, &sm)) / (2.0 * h);
            assert!(rel(gb[j], fd) < 1e-4);
        }
    }

    #[test]
    fn training_gradients_match_central_differences() {
        for seed in 0..10 {
            gradient_check(Mode::Training, seed);
        }
    }

    #[test]
    fn inference_gradients_match_central_differences() {
        for seed in 0..5 {
            gradient_check(Mode::Inference, seed);
        }
    }
}
