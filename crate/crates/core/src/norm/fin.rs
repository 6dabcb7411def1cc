use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{softplus, softplus_grad};
use crate::data::Attribute;
use crate::error::{Error, Result};

pub const DEFAULT_FIN_MOMENTUM: f64 = 0.3;

/// Learnable per-group statistics.
///
/// Row `A` of `mu` is the mean of group `A`; its spread is
/// `softplus(tau[A])`, which stays positive however `tau` is updated.
#[derive(Debug, Clone, PartialEq)]
pub struct FinParams {
    pub mu: Array2<f64>,
    pub tau: Array2<f64>,
    pub momentum: f64,
}

impl FinParams {
    pub fn new(mu: Array2<f64>, tau: Array2<f64>, momentum: f64) -> Result<Self> {
        if mu.dim() != tau.dim() {
            return Err(Error::Shape(format!(
                "mu {:?} and tau {:?} differ",
                mu.dim(),
                tau.dim()
            )));
        }
        if mu.nrows() == 0 || mu.ncols() == 0 {
            return Err(Error::Shape("FIN needs at least one group and one feature".into()));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1]")));
        }
        Ok(Self { mu, tau, momentum })
    }

    pub fn group_count(&self) -> usize {
        self.mu.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn sigma(&self) -> Array2<f64> {
        self.tau.mapv(softplus)
    }
}

/// Draws `mu` and `tau` from a standard normal: all of `mu` first, then `tau`.
pub fn init_fin<R: Rng + ?Sized>(
    group_count: usize,
    d: usize,
    momentum: f64,
    rng: &mut R,
) -> Result<FinParams> {
    let mut draw = |_| rng.sample::<f64, _>(StandardNormal);
    let mu = Array2::from_shape_fn((group_count, d), &mut draw);
    let tau = Array2::from_shape_fn((group_count, d), &mut draw);
    FinParams::new(mu, tau, momentum)
}

/// Everything [`fin_backward`] needs from its forward call.
#[derive(Debug)]
pub struct FinCache {
    groups: Vec<usize>,
    /// `z - mu[A]` per sample.
    centered: Array2<f64>,
    sigma: Array2<f64>,
    sigma_grad: Array2<f64>,
    momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinGrads {
    pub z: Array2<f64>,
    pub mu: Array2<f64>,
    pub tau: Array2<f64>,
}

/// `z_hat = (z - mu[A]) / sigma[A]`, output `(1 - m) * z_hat + m * z`, row by
/// row with each sample's own group `A`.
pub fn fin_forward(
    z: &Array2<f64>,
    attrs: &[Attribute],
    params: &FinParams,
) -> Result<(Array2<f64>, FinCache)> {
    if attrs.len() != z.nrows() {
        return Err(Error::Shape(format!(
            "{} attributes for a batch of {}",
            attrs.len(),
            z.nrows()
        )));
    }
    if z.ncols() != params.dim() {
        return Err(Error::Shape(format!(
            "FIN expects {} features, got {}",
            params.dim(),
            z.ncols()
        )));
    }
    let group_count = params.group_count();
    let groups = attrs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.0 < group_count {
                Ok(a.0)
            } else {
                Err(Error::AttributeOutOfRange {
                    record: format!("batch position {i}"),
                    id: a.0,
                    group_count,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let m = params.momentum;
    let sigma = params.sigma();
    let mut centered = Array2::zeros(z.dim());
    let mut out = Array2::zeros(z.dim());
    for (i, &g) in groups.iter().enumerate() {
        Zip::from(centered.row_mut(i))
            .and(out.row_mut(i))
            .and(z.row(i))
            .and(params.mu.row(g))
            .and(sigma.row(g))
            .for_each(|c, o, &zi, &mu, &s| {
                *c = zi - mu;
                let z_hat = *c / s;
                *o = (1.0 - m) * z_hat + m * zi;
            });
    }
    let cache = FinCache {
        groups,
        centered,
        sigma,
        sigma_grad: params.tau.mapv(softplus_grad),
        momentum: m,
    };
    Ok((out, cache))
}

/// Chain-rule gradients of [`fin_forward`]. Contributions of samples that
/// share a group are summed; groups absent from the batch get zeros.
pub fn fin_backward(grad_out: &Array2<f64>, cache: FinCache) -> Result<FinGrads> {
    if grad_out.dim() != cache.centered.dim() {
        return Err(Error::CacheMismatch(format!(
            "gradient shape {:?} vs forward shape {:?}",
            grad_out.dim(),
            cache.centered.dim()
        )));
    }
    let m = cache.momentum;
    let keep = 1.0 - m;
    let mut grad_z = Array2::zeros(grad_out.dim());
    let mut grad_mu = Array2::zeros(cache.sigma.dim());
    let mut grad_sigma = Array2::<f64>::zeros(cache.sigma.dim());
    for (i, &g) in cache.groups.iter().enumerate() {
        let (mut gmu, mut gsig) = (grad_mu.row_mut(g), grad_sigma.row_mut(g));
        Zip::from(grad_z.row_mut(i))
            .and(&mut gmu)
            .and(&mut gsig)
            .and(grad_out.row(i))
            .and(cache.centered.row(i))
            .and(cache.sigma.row(g))
            .for_each(|gz, gm, gs, &go, &c, &s| {
                *gz = go * (keep / s + m);
                *gm -= go * keep / s;
                *gs -= go * keep * c / (s * s);
            });
    }
    let grad_tau = grad_sigma * &cache.sigma_grad;
    Ok(FinGrads {
        z: grad_z,
        mu: grad_mu,
        tau: grad_tau,
    })
}

/// Learnable shared normalization: FIN with every sample in group 0.
pub fn lbn_forward(z: &Array2<f64>, params: &FinParams) -> Result<(Array2<f64>, FinCache)> {
    if params.group_count() != 1 {
        return Err(Error::Shape(format!(
            "shared normalizer has {} groups, expected 1",
            params.group_count()
        )));
    }
    fin_forward(z, &vec![Attribute(0); z.nrows()], params)
}

pub fn lbn_backward(grad_out: &Array2<f64>, cache: FinCache) -> Result<FinGrads> {
    fin_backward(grad_out, cache)
}
