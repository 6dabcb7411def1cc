//! Seeded generator of identity-structured binary classification cohorts.
//!
//! Within group `A`, a sample of class `y` has features
//! `y * separation * noise_std * e0 + offset_A + noise`, with `e0` the first
//! axis and i.i.d. Gaussian noise. The Bayes score inside a group is the
//! first coordinate, and its AUC is `Phi(separation / sqrt(2))`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::data::{Attribute, AttributeSet, Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Shift added to every feature of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Offset {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Offset {
    fn at(&self, j: usize) -> f64 {
        match self {
            Offset::Scalar(v) => *v,
            Offset::Vector(v) => v[j],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub n_train: usize,
    pub n_eval: usize,
    pub prevalence: f64,
    /// Distance between class means along the first axis, in noise-std units.
    pub separation: f64,
    pub offset: Offset,
    pub noise_std: f64,
}

impl GroupSpec {
    /// Number of positives among `n` samples: the prevalence, rounded.
    pub fn positives(&self, n: usize) -> usize {
        (self.prevalence * n as f64).round() as usize
    }

    /// AUC of the Bayes score within this group.
    pub fn oracle_auc(&self) -> f64 {
        oracle_auc(self.separation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("synthetic cohort needs at least one group".into()));
        }
        if self.d < 2 {
            return Err(Error::Config(format!("d = {} must be at least 2", self.d)));
        }
        self.attribute_set()?;
        for g in &self.groups {
            let bad = |what: String| Err(Error::Config(format!("group `{}`: {what}", g.name)));
            if !(g.prevalence > 0.0 && g.prevalence < 1.0) {
                return bad(format!("prevalence {} outside (0, 1)", g.prevalence));
            }
            if !(g.noise_std > 0.0 && g.noise_std.is_finite()) {
                return bad(format!("noise_std {} must be positive", g.noise_std));
            }
            if !(g.separation >= 0.0 && g.separation.is_finite()) {
                return bad(format!("separation {} must be non-negative", g.separation));
            }
            if g.n_train == 0 || g.n_eval == 0 {
                return bad("n_train and n_eval must be positive".into());
            }
            match &g.offset {
                Offset::Vector(v) if v.len() != self.d => {
                    return bad(format!("offset has {} entries, expected {}", v.len(), self.d));
                }
                Offset::Vector(v) if v.iter().any(|x| !x.is_finite()) => {
                    return bad("offset must be finite".into());
                }
                Offset::Scalar(x) if !x.is_finite() => return bad("offset must be finite".into()),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn attribute_set(&self) -> Result<AttributeSet> {
        AttributeSet::new(self.groups.iter().map(|g| g.name.clone()))
    }
}

/// Three balanced groups with the prevalences of the motivating cohort; the
/// middle group is the hardest to separate.
pub fn default_benchmark() -> SynthConfig {
    let group = |name: &str, prevalence, separation, offset| GroupSpec {
        name: name.to_string(),
        n_train: 1000,
        n_eval: 300,
        prevalence,
        separation,
        offset: Offset::Scalar(offset),
        noise_std: 1.0,
    };
    SynthConfig {
        d: 20,
        groups: vec![
            group("Asian", 0.474, 2.0, 1.0),
            group("Black", 0.614, 1.2, -1.0),
            group("White", 0.484, 1.8, 0.0),
        ],
        seed: 0,
    }
}

/// `Phi(separation / sqrt(2))`: AUC of two unit-variance Gaussian classes
/// whose means differ by `separation`.
pub fn oracle_auc(separation: f64) -> f64 {
    StdNormal::standard().cdf(separation / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy)]
enum Split {
    Train,
    Eval,
}

fn draw_split<R: Rng>(config: &SynthConfig, split: Split, rng: &mut R) -> Vec<LabeledSample> {
    let tag = match split {
        Split::Train => "train",
        Split::Eval => "eval",
    };
    let mut samples = Vec::new();
    for (g, spec) in config.groups.iter().enumerate() {
        let n = match split {
            Split::Train => spec.n_train,
            Split::Eval => spec.n_eval,
        };
        let positives = spec.positives(n);
        let noise = Normal::new(0.0, spec.noise_std).expect("validated noise_std");
        for k in 0..n {
            let label = u8::from(k >= n - positives);
            let mut features: Vec<f64> = (0..config.d)
                .map(|j| spec.offset.at(j) + noise.sample(rng))
                .collect();
            features[0] += f64::from(label) * spec.separation * spec.noise_std;
            samples.push(LabeledSample {
                id: format!("{tag}-g{g}-{k}"),
                features,
                label,
                attribute: Attribute(g),
            });
        }
    }
    samples.shuffle(rng);
    samples
}

/// Draws the train split, then the eval split, from one seeded stream.
/// Within a split, samples are produced group by group (negatives first) and
/// then shuffled.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let attribute_set = config.attribute_set()?;
    let mut rng = rng::stream(config.seed, Stream::Synth);
    let train = draw_split(config, Split::Train, &mut rng);
    let eval = draw_split(config, Split::Eval, &mut rng);
    Ok((
        Dataset::new(config.d, attribute_set.clone(), train)?,
        Dataset::new(config.d, attribute_set, eval)?,
    ))
}
