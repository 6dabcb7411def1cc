//! Performance and group-fairness metrics.
//!
//! Every value is a fraction in `[0, 1]`; percentages are a display concern.
//! A metric that cannot be computed for some input (no samples, one class
//! only) is reported as [`Error::UndefinedMetric`], never imputed.

mod auc;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::GroupPartition;
use crate::error::{Error, Result};

pub use auc::auc;
pub use report::{
    full_report, prediction_histogram, Histogram, HistogramBin, Measure, Metric, MetricReport,
};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    /// True positive rate, `None` without positive labels.
    pub fn tpr(&self) -> Option<f64> {
        let p = self.positives();
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    /// False positive rate, `None` without negative labels.
    pub fn fpr(&self) -> Option<f64> {
        let n = self.negatives();
        (n > 0).then(|| self.fp as f64 / n as f64)
    }

    fn add(&mut self, decision: u8, label: u8) {
        match (decision, label) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::Input(format!("threshold {threshold} outside [0, 1]")))
    }
}

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Input(format!("{what}: length mismatch ({a} vs {b})")))
    }
}

/// Binarizes scores: 1 iff `score >= threshold`.
pub fn decide(scores: &[f64], threshold: f64) -> Result<Vec<u8>> {
    check_threshold(threshold)?;
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if (0.0..=1.0).contains(&s) {
                Ok(u8::from(s >= threshold))
            } else {
                Err(Error::Input(format!("score {s} at position {i} outside [0, 1]")))
            }
        })
        .collect()
}

pub fn accuracy(decisions: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(decisions.len(), labels.len(), "accuracy")?;
    if decisions.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = decisions.iter().zip(labels).filter(|(d, l)| d == l).count();
    Ok(hits as f64 / decisions.len() as f64)
}

pub fn confusion(decisions: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    check_lengths(decisions.len(), labels.len(), "confusion")?;
    let mut counts = ConfusionCounts::default();
    for (&d, &l) in decisions.iter().zip(labels) {
        counts.add(d, l);
    }
    Ok(counts)
}

pub fn selection_rate(decisions: &[u8]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::UndefinedMetric("selection rate of an empty set".into()));
    }
    let selected = decisions.iter().filter(|&&d| d == 1).count();
    Ok(selected as f64 / decisions.len() as f64)
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn gather<T: Copy>(values: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| values[i]).collect()
}

/// Demographic parity difference: max minus min of per-group selection rates.
/// Empty groups are skipped.
pub fn dpd(decisions: &[u8], partition: &GroupPartition) -> Result<f64> {
    let rates = partition
        .nonempty_groups()
        .map(|(_, ix)| selection_rate(&gather(decisions, ix)))
        .collect::<Result<Vec<_>>>()?;
    if rates.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "DPD needs at least 2 nonempty groups, found {}",
            rates.len()
        )));
    }
    Ok(spread(&rates))
}

/// Equalized odds difference: the larger of the between-group TPR gap and FPR
/// gap. A group enters the TPR gap only if it has positive labels and the FPR
/// gap only if it has negative labels.
pub fn deodds(decisions: &[u8], labels: &[u8], partition: &GroupPartition) -> Result<f64> {
    check_lengths(decisions.len(), labels.len(), "deodds")?;
    let mut tprs = Vec::new();
    let mut fprs = Vec::new();
    for (_, ix) in partition.nonempty_groups() {
        let counts = confusion(&gather(decisions, ix), &gather(labels, ix))?;
        tprs.extend(counts.tpr());
        fprs.extend(counts.fpr());
    }
    let gap = |rates: &[f64]| (rates.len() >= 2).then(|| spread(rates));
    match (gap(&tprs), gap(&fprs)) {
        (Some(t), Some(f)) => Ok(t.max(f)),
        (Some(g), None) | (None, Some(g)) => Ok(g),
        (None, None) => Err(Error::UndefinedMetric(
            "DEOdds needs at least 2 groups with both label classes".into(),
        )),
    }
}

/// Sum over groups of the absolute gap between the overall value and the
/// group's value.
pub fn discrepancy(overall: f64, group_values: &BTreeMap<usize, f64>) -> Result<f64> {
    if group_values.is_empty() {
        return Err(Error::UndefinedMetric("discrepancy over zero groups".into()));
    }
    let is_fraction = |v: f64| (0.0..=1.0).contains(&v);
    if !is_fraction(overall) {
        return Err(Error::Input(format!(
            "overall value {overall} is not a fraction in [0, 1]"
        )));
    }
    if let Some((g, v)) = group_values.iter().find(|(_, &v)| !is_fraction(v)) {
        return Err(Error::Input(format!(
            "group {g} value {v} is not a fraction in [0, 1]"
        )));
    }
    Ok(group_values.values().map(|v| (overall - v).abs()).sum())
}

/// `overall / (1 + delta)`; never exceeds `overall` for `delta >= 0`.
pub fn equity_scaled(overall: f64, delta: f64) -> f64 {
    debug_assert!(delta >= 0.0, "discrepancy must be non-negative");
    overall / (1.0 + delta)
}
