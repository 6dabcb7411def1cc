//! Normalizers that sit between the backbone features and the linear head.
//!
//! [`NormKind::FairIdentity`] normalizes each sample with the learnable mean
//! and spread of its own identity group, then blends the result with the raw
//! feature. [`NormKind::LearnableShared`] is the same layer with a single
//! group, and [`NormKind::Batch`] is ordinary batch normalization.

mod batch;
mod fin;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::Attribute;
use crate::error::{Error, Result};

pub use batch::{bn_backward, bn_forward, BatchNormCache, BatchNormState};
pub use fin::{
    fin_backward, fin_forward, init_fin, lbn_backward, lbn_forward, FinCache, FinGrads,
    FinParams, DEFAULT_FIN_MOMENTUM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[serde(alias = "no_norm")]
    None,
    #[serde(alias = "bn")]
    Batch,
    #[serde(alias = "lbn", alias = "l_bn")]
    LearnableShared,
    #[serde(alias = "fin")]
    FairIdentity,
}

impl NormKind {
    pub fn label(self) -> &'static str {
        match self {
            NormKind::None => "No Norm",
            NormKind::Batch => "BN",
            NormKind::LearnableShared => "L-BN",
            NormKind::FairIdentity => "FIN",
        }
    }

    /// Whether the kind carries a momentum blend between normalized and raw features.
    pub fn has_momentum(self) -> bool {
        matches!(self, NormKind::LearnableShared | NormKind::FairIdentity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Training,
    Inference,
}

/// `log(1 + exp(t))` without overflow for large `t`.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`]: the logistic sigmoid.
pub fn softplus_grad(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    None,
    Batch(BatchNormState),
    LearnableShared(FinParams),
    FairIdentity(FinParams),
}

#[derive(Debug)]
pub enum NormCache {
    None { rows: usize, cols: usize },
    Batch(BatchNormCache),
    Fin(FinCache),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormGrads {
    None,
    Batch { gamma: Array1<f64>, beta: Array1<f64> },
    Fin { mu: Array2<f64>, tau: Array2<f64> },
}

impl NormGrads {
    pub fn scale(&mut self, factor: f64) {
        match self {
            NormGrads::None => {}
            NormGrads::Batch { gamma, beta } => {
                *gamma *= factor;
                *beta *= factor;
            }
            NormGrads::Fin { mu, tau } => {
                *mu *= factor;
                *tau *= factor;
            }
        }
    }
}

impl Normalizer {
    pub fn kind(&self) -> NormKind {
        match self {
            Normalizer::None => NormKind::None,
            Normalizer::Batch(_) => NormKind::Batch,
            Normalizer::LearnableShared(_) => NormKind::LearnableShared,
            Normalizer::FairIdentity(_) => NormKind::FairIdentity,
        }
    }

    /// Feature dimensionality the normalizer was built for (`None` for the identity).
    pub fn dim(&self) -> Option<usize> {
        match self {
            Normalizer::None => None,
            Normalizer::Batch(s) => Some(s.gamma.len()),
            Normalizer::LearnableShared(p) | Normalizer::FairIdentity(p) => Some(p.dim()),
        }
    }

    pub fn forward(
        &self,
        z: &Array2<f64>,
        attrs: &[Attribute],
        mode: Mode,
    ) -> Result<(Array2<f64>, NormCache)> {
        if let Some(d) = self.dim() {
            if z.ncols() != d {
                return Err(Error::Shape(format!(
                    "normalizer expects {d} features, got {}",
                    z.ncols()
                )));
            }
        }
        match self {
            Normalizer::None => Ok((
                z.clone(),
                NormCache::None {
                    rows: z.nrows(),
                    cols: z.ncols(),
                },
            )),
            Normalizer::Batch(state) => {
                let (out, cache) = bn_forward(z, state, mode)?;
                Ok((out, NormCache::Batch(cache)))
            }
            Normalizer::LearnableShared(p) => {
                let (out, cache) = lbn_forward(z, p)?;
                Ok((out, NormCache::Fin(cache)))
            }
            Normalizer::FairIdentity(p) => {
                let (out, cache) = fin_forward(z, attrs, p)?;
                Ok((out, NormCache::Fin(cache)))
            }
        }
    }

    /// Consumes the cache of the matching forward call.
    pub fn backward(
        &self,
        grad_out: &Array2<f64>,
        cache: NormCache,
    ) -> Result<(Array2<f64>, NormGrads)> {
        match (self, cache) {
            (Normalizer::None, NormCache::None { rows, cols }) => {
                if grad_out.dim() != (rows, cols) {
                    return Err(Error::CacheMismatch(format!(
                        "gradient shape {:?} vs forward shape {:?}",
                        grad_out.dim(),
                        (rows, cols)
                    )));
                }
                Ok((grad_out.clone(), NormGrads::None))
            }
            (Normalizer::Batch(_), NormCache::Batch(cache)) => {
                let (gz, gamma, beta) = bn_backward(grad_out, cache)?;
                Ok((gz, NormGrads::Batch { gamma, beta }))
            }
            (Normalizer::LearnableShared(_), NormCache::Fin(cache)) => {
                let g = lbn_backward(grad_out, cache)?;
                Ok((g.z, NormGrads::Fin { mu: g.mu, tau: g.tau }))
            }
            (Normalizer::FairIdentity(_), NormCache::Fin(cache)) => {
                let g = fin_backward(grad_out, cache)?;
                Ok((g.z, NormGrads::Fin { mu: g.mu, tau: g.tau }))
            }
            (n, _) => Err(Error::CacheMismatch(format!(
                "cache does not belong to a {} forward pass",
                n.kind().label()
            ))),
        }
    }
}
