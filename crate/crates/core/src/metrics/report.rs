use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::{accuracy, auc, check_threshold, confusion, decide, deodds, discrepancy, dpd};
use super::{equity_scaled, gather, ConfusionCounts};
use crate::data::{partition_by_attribute, AttributeSet, PredictionRecord};
use crate::error::{Error, Result};

/// Metrics that get per-group values, a discrepancy and an equity-scaled form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Accuracy, Metric::Auc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Auc => "auc",
        }
    }
}

/// A metric value, or an explicit flag that it could not be computed.
/// Serialized as a JSON number or the string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Value(f64),
    Undefined,
}

impl Measure {
    pub fn value(self) -> Option<f64> {
        match self {
            Measure::Value(v) => Some(v),
            Measure::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Measure::Value(_))
    }
}

impl From<Result<f64>> for Measure {
    fn from(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Measure::Value(v),
            Err(_) => Measure::Undefined,
        }
    }
}

impl From<Option<f64>> for Measure {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Measure::Undefined, Measure::Value)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Value(v) => fmt::Display::fmt(v, f),
            Measure::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Measure {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Measure::Value(v) => s.serialize_f64(*v),
            Measure::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct MeasureVisitor;

        impl Visitor<'_> for MeasureVisitor {
            type Value = Measure;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"undefined\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Measure, E> {
                Ok(Measure::Value(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Measure, E> {
                Ok(Measure::Value(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Measure, E> {
                Ok(Measure::Value(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Measure, E> {
                if v == "undefined" {
                    Ok(Measure::Undefined)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(MeasureVisitor)
    }
}

/// Overall and per-group performance, discrepancies, equity-scaled values and
/// group-fairness gaps for one set of predictions at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub groups: Vec<String>,
    pub group_sizes: BTreeMap<usize, usize>,
    pub overall: BTreeMap<Metric, Measure>,
    pub per_group: BTreeMap<usize, BTreeMap<Metric, Measure>>,
    pub delta: BTreeMap<Metric, Measure>,
    pub equity_scaled: BTreeMap<Metric, Measure>,
    pub dpd: Measure,
    pub deodds: Measure,
    pub confusion: ConfusionCounts,
}

impl MetricReport {
    pub fn overall(&self, metric: Metric) -> Measure {
        self.overall.get(&metric).copied().unwrap_or(Measure::Undefined)
    }

    pub fn delta(&self, metric: Metric) -> Measure {
        self.delta.get(&metric).copied().unwrap_or(Measure::Undefined)
    }

    pub fn equity_scaled(&self, metric: Metric) -> Measure {
        self.equity_scaled
            .get(&metric)
            .copied()
            .unwrap_or(Measure::Undefined)
    }

    pub fn group(&self, group: usize, metric: Metric) -> Measure {
        self.per_group
            .get(&group)
            .and_then(|m| m.get(&metric))
            .copied()
            .unwrap_or(Measure::Undefined)
    }
}

/// Computes every metric for `records`. A metric that is undefined for some
/// group or for the whole set is flagged in place; the report itself only
/// fails on invalid input.
pub fn full_report(
    records: &[PredictionRecord],
    attribute_set: &AttributeSet,
    threshold: f64,
) -> Result<MetricReport> {
    check_threshold(threshold)?;
    let partition = partition_by_attribute(records, attribute_set)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    if let Some(r) = records.iter().find(|r| r.label > 1) {
        return Err(Error::Input(format!("record {}: label {} is not binary", r.id, r.label)));
    }
    let decisions = decide(&scores, threshold)?;

    let evaluate = |metric: Metric, ix: Option<&[usize]>| -> Measure {
        let (s, d, l) = match ix {
            Some(ix) => (gather(&scores, ix), gather(&decisions, ix), gather(&labels, ix)),
            None => (scores.clone(), decisions.clone(), labels.clone()),
        };
        match metric {
            Metric::Accuracy => accuracy(&d, &l).into(),
            Metric::Auc => auc(&s, &l).into(),
        }
    };

    let mut overall = BTreeMap::new();
    let mut per_group: BTreeMap<usize, BTreeMap<Metric, Measure>> = BTreeMap::new();
    let mut delta = BTreeMap::new();
    let mut scaled = BTreeMap::new();
    for metric in Metric::ALL {
        let total = evaluate(metric, None);
        let mut defined_groups = BTreeMap::new();
        for (g, ix) in partition.groups() {
            let value = evaluate(metric, Some(ix));
            if let Measure::Value(v) = value {
                defined_groups.insert(g, v);
            }
            per_group.entry(g).or_default().insert(metric, value);
        }
        let gap: Measure = match total {
            Measure::Value(t) => discrepancy(t, &defined_groups).into(),
            Measure::Undefined => Measure::Undefined,
        };
        let es = match (total, gap) {
            (Measure::Value(t), Measure::Value(g)) => Measure::Value(equity_scaled(t, g)),
            _ => Measure::Undefined,
        };
        overall.insert(metric, total);
        delta.insert(metric, gap);
        scaled.insert(metric, es);
    }

    Ok(MetricReport {
        threshold,
        groups: attribute_set.names().to_vec(),
        group_sizes: partition.sizes().into_iter().enumerate().collect(),
        overall,
        per_group,
        delta,
        equity_scaled: scaled,
        dpd: dpd(&decisions, &partition).into(),
        deodds: deodds(&decisions, &labels, &partition).into(),
        confusion: confusion(&decisions, &labels)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub counts: ConfusionCounts,
}

/// Score histogram split by confusion category. Bins are uniform over
/// `[0, 1]`, left-closed, with the last bin closed on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub threshold: f64,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn totals(&self) -> ConfusionCounts {
        let mut t = ConfusionCounts::default();
        for b in &self.bins {
            t.tp += b.counts.tp;
            t.fp += b.counts.fp;
            t.tn += b.counts.tn;
            t.fn_ += b.counts.fn_;
        }
        t
    }
}

fn bin_edge(k: usize, bins: usize) -> f64 {
    k as f64 / bins as f64
}

fn bin_of(score: f64, bins: usize) -> usize {
    let mut k = ((score * bins as f64).floor() as usize).min(bins - 1);
    // settle rounding at the edges against the same edges reported in the output
    while k + 1 < bins && score >= bin_edge(k + 1, bins) {
        k += 1;
    }
    while k > 0 && score < bin_edge(k, bins) {
        k -= 1;
    }
    k
}

pub fn prediction_histogram(
    records: &[PredictionRecord],
    threshold: f64,
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Input("histogram needs at least one bin".into()));
    }
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let decisions = decide(&scores, threshold)?;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lo: bin_edge(k, bins),
            hi: bin_edge(k + 1, bins),
            counts: ConfusionCounts::default(),
        })
        .collect();
    for (r, &d) in records.iter().zip(&decisions) {
        out[bin_of(r.score, bins)].counts.add(d, r.label);
    }
    Ok(Histogram {
        threshold,
        bins: out,
    })
}
