//! Labeled, identity-attributed samples and their partition into groups.
//!
//! Identity attributes are digitized: every sample carries an integer group
//! id, and the human-readable names live once in an [`AttributeSet`].

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Digitized identity of a sample (index into an [`AttributeSet`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Attribute(pub usize);

impl Attribute {
    pub fn id(self) -> usize {
        self.0
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    names: Vec<String>,
}

impl AttributeSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Input("attribute set needs at least one group".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Input("attribute names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Input(format!("duplicate attribute name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    /// `group0`, `group1`, ... for data that arrives without a names sidecar.
    pub fn anonymous(group_count: usize) -> Result<Self> {
        Self::new((0..group_count).map(|k| format!("group{k}")))
    }

    pub fn group_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, attribute: Attribute) -> Option<&str> {
        self.names.get(attribute.0).map(String::as_str)
    }

    pub fn contains(&self, attribute: Attribute) -> bool {
        attribute.0 < self.names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: u8,
    pub attribute: Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub d: usize,
    pub attribute_set: AttributeSet,
    pub samples: Vec<LabeledSample>,
}

/// One reason a dataset failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending sample position, `None` for dataset-level problems.
    pub index: Option<usize>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "sample {i}: {}", self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

impl Dataset {
    /// Builds a dataset and rejects it if any invariant is violated.
    pub fn new(d: usize, attribute_set: AttributeSet, samples: Vec<LabeledSample>) -> Result<Self> {
        let dataset = Self {
            d,
            attribute_set,
            samples,
        };
        match validate_dataset(&dataset) {
            Ok(()) => Ok(dataset),
            Err(violations) => Err(Error::Input(
                violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.attribute_set.group_count()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn attributes(&self) -> Vec<Attribute> {
        self.samples.iter().map(|s| s.attribute).collect()
    }
}

/// Checks every dataset invariant, collecting all violations rather than
/// stopping at the first.
pub fn validate_dataset(dataset: &Dataset) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if dataset.samples.is_empty() {
        violations.push(Violation {
            index: None,
            reason: "dataset has no samples".into(),
        });
    }
    if dataset.d == 0 {
        violations.push(Violation {
            index: None,
            reason: "feature dimensionality must be positive".into(),
        });
    }
    let group_count = dataset.attribute_set.group_count();
    for (i, sample) in dataset.samples.iter().enumerate() {
        if sample.features.len() != dataset.d {
            violations.push(Violation {
                index: Some(i),
                reason: format!(
                    "feature length mismatch: expected d = {}, found {}",
                    dataset.d,
                    sample.features.len()
                ),
            });
        }
        if let Some(j) = sample.features.iter().position(|v| !v.is_finite()) {
            violations.push(Violation {
                index: Some(i),
                reason: format!("non-finite feature at position {j}"),
            });
        }
        if sample.label > 1 {
            violations.push(Violation {
                index: Some(i),
                reason: format!("label {} is not binary", sample.label),
            });
        }
        if sample.attribute.0 >= group_count {
            violations.push(Violation {
                index: Some(i),
                reason: format!(
                    "attribute id {} out of range (group_count = {group_count})",
                    sample.attribute.0
                ),
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// One evaluated sample: the atom of every metric computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// Probability of the positive class.
    pub score: f64,
    pub label: u8,
    pub attribute: Attribute,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, score: f64, label: u8, attribute: Attribute) -> Result<Self> {
        let id = id.into();
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Input(format!("record {id}: score {score} outside [0, 1]")));
        }
        if label > 1 {
            return Err(Error::Input(format!("record {id}: label {label} is not binary")));
        }
        Ok(Self {
            id,
            score,
            label,
            attribute,
        })
    }
}

/// Record positions grouped by attribute id. Groups may be empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    indices_by_group: Vec<Vec<usize>>,
}

impl GroupPartition {
    /// Partition from plain attribute ids (no record ids available for errors).
    pub fn from_attributes(attributes: &[Attribute], group_count: usize) -> Result<Self> {
        let mut indices_by_group = vec![Vec::new(); group_count];
        for (i, a) in attributes.iter().enumerate() {
            let bucket = indices_by_group
                .get_mut(a.0)
                .ok_or_else(|| Error::AttributeOutOfRange {
                    record: format!("#{i}"),
                    id: a.0,
                    group_count,
                })?;
            bucket.push(i);
        }
        Ok(Self { indices_by_group })
    }

    pub fn group_count(&self) -> usize {
        self.indices_by_group.len()
    }

    pub fn group(&self, id: usize) -> &[usize] {
        &self.indices_by_group[id]
    }

    pub fn groups(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.indices_by_group
            .iter()
            .enumerate()
            .map(|(g, ix)| (g, ix.as_slice()))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.indices_by_group.iter().map(Vec::len).collect()
    }

    pub fn nonempty_groups(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.groups().filter(|(_, ix)| !ix.is_empty())
    }
}

pub fn partition_by_attribute(
    records: &[PredictionRecord],
    attribute_set: &AttributeSet,
) -> Result<GroupPartition> {
    let group_count = attribute_set.group_count();
    let mut indices_by_group = vec![Vec::new(); group_count];
    for (i, r) in records.iter().enumerate() {
        let bucket = indices_by_group
            .get_mut(r.attribute.0)
            .ok_or_else(|| Error::AttributeOutOfRange {
                record: format!("{} (index {i})", r.id),
                id: r.attribute.0,
                group_count,
            })?;
        bucket.push(i);
    }
    Ok(GroupPartition { indices_by_group })
}
