//! Central finite-difference check of [`MlpModel::backward`].
//!
//! The probe loss is `sum(logits * R)` for a fixed matrix `R`, so the
//! analytic side is `backward` with `grad_logits = R` while the numeric side
//! only ever calls `forward`.

use ndarray::Array2;

use crate::data::Attribute;
use crate::error::Result;
use crate::net::MlpModel;
use crate::norm::Mode;

/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Block and flat index of the worst entry.
    pub worst: (String, usize),
    pub entries: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn probe_loss(model: &MlpModel, x: &Array2<f64>, attrs: &[Attribute], probe: &Array2<f64>, mode: Mode) -> Result<f64> {
    let (logits, _) = model.forward(x, attrs, mode)?;
    Ok((&logits * probe).sum())
}

/// Smallest `|pre-activation|` over the hidden backbone layers. A step `h`
/// well below this margin never crosses a ReLU kink.
pub fn kink_margin(model: &MlpModel, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    for layer in &model.backbone[..model.backbone.len() - 1] {
        let h = a.dot(&layer.w) + &layer.b;
        margin = h.iter().fold(margin, |m, v| m.min(v.abs()));
        a = h.mapv(|v| v.max(0.0));
    }
    margin
}

/// Compares every parameter gradient and the input gradient against central
/// differences with step `h`.
pub fn check_model(
    model: &MlpModel,
    x: &Array2<f64>,
    attrs: &[Attribute],
    probe: &Array2<f64>,
    mode: Mode,
    h: f64,
) -> Result<GradCheck> {
    let (_, cache) = model.forward(x, attrs, mode)?;
    let grads = model.backward(cache, probe)?;
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();

    let mut result = GradCheck {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        entries: 0,
    };
    let mut record = |name: &str, i: usize, a: f64, n: f64| {
        let e = relative_error(a, n);
        result.entries += 1;
        if e > result.max_relative_error || result.worst.0.is_empty() {
            result.max_relative_error = result.max_relative_error.max(e);
            result.worst = (name.to_string(), i);
        }
    };

    let mut probe_model = model.clone();
    let names: Vec<String> = probe_model.param_blocks_mut().iter().map(|b| b.name.clone()).collect();
    for (k, name) in names.iter().enumerate() {
        for i in 0..analytic[k].len() {
            let original = probe_model.param_blocks_mut()[k].values[i];
            probe_model.param_blocks_mut()[k].values[i] = original + h;
            let plus = probe_loss(&probe_model, x, attrs, probe, mode)?;
            probe_model.param_blocks_mut()[k].values[i] = original - h;
            let minus = probe_loss(&probe_model, x, attrs, probe, mode)?;
            probe_model.param_blocks_mut()[k].values[i] = original;
            record(name, i, analytic[k][i], (plus - minus) / (2.0 * h));
        }
    }

    for (i, idx) in ndarray::indices(x.dim()).into_iter().enumerate() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[idx] += h;
        xm[idx] -= h;
        let numeric = (probe_loss(model, &xp, attrs, probe, mode)?
            - probe_loss(model, &xm, attrs, probe, mode)?)
            / (2.0 * h);
        record("input", i, grads.input[idx], numeric);
    }
    Ok(result)
}
