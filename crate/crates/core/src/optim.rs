//! AdamW: Adam moments with weight decay applied directly to the parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{BlockKind, ParamBlock};

/// Which parameter kinds receive weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayMask {
    pub weights: bool,
    pub biases: bool,
    pub normalizer: bool,
}

impl Default for DecayMask {
    fn default() -> Self {
        Self {
            weights: true,
            biases: false,
            normalizer: false,
        }
    }
}

impl DecayMask {
    pub fn applies(&self, kind: BlockKind) -> bool {
        match kind {
            BlockKind::Weight => self.weights,
            BlockKind::Bias => self.biases,
            BlockKind::Normalizer => self.normalizer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mask: DecayMask,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
            decay_mask: DecayMask::default(),
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config(format!("betas ({b1}, {b2}) must lie in [0, 1)")));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// One AdamW update over all blocks. Gradients are checked for finiteness
/// before any parameter is touched.
pub fn adamw_step(
    params: &mut [ParamBlock<'_>],
    grads: &[&[f64]],
    state: &mut AdamWState,
    config: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameter blocks but {} gradient blocks",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.values.len() != g.len() {
            return Err(Error::Shape(format!(
                "block `{}` has {} values but {} gradients",
                p.name,
                p.values.len(),
                g.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: p.name.clone(),
            });
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
        state.v = state.m.clone();
    }
    let congruent = state.m.len() == params.len()
        && params
            .iter()
            .zip(&state.m)
            .all(|(p, m)| p.values.len() == m.len());
    if !congruent {
        return Err(Error::Shape("optimizer state does not match the parameters".into()));
    }

    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let (b1, b2) = config.betas;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = config.lr;

    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let decay = if config.decay_mask.applies(p.kind) {
            1.0 - lr * config.weight_decay
        } else {
            1.0
        };
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p.values[i] = p.values[i] * decay - lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
