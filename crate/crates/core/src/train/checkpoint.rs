//! Checkpoint files: config, weights, normalizer state and provenance, as
//! JSON with every float written to 17 significant digits.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::jsonfmt::{self, FloatStyle};
use crate::net::{Affine, MlpModel};
use crate::norm::{BatchNormState, FinParams, Normalizer};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: MlpModel,
    /// Number of completed epochs.
    pub epoch: usize,
    /// Description of the random streams the run was seeded with.
    pub rng: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NormFile {
    Batch {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        eps: f64,
        momentum: f64,
    },
    LearnableShared {
        mu: Vec<Vec<f64>>,
        tau: Vec<Vec<f64>>,
        m: f64,
    },
    FairIdentity {
        mu: Vec<Vec<f64>>,
        tau: Vec<Vec<f64>>,
        m: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    version: u64,
    config: TrainConfig,
    backbone: Vec<LayerFile>,
    norm: Option<NormFile>,
    head: LayerFile,
    epoch: usize,
    rng: String,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix(name: &str, rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::CheckpointShape(format!("`{name}` has ragged rows")));
    }
    let nrows = rows.len();
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| Error::CheckpointShape(format!("`{name}`: {e}")))
}

impl LayerFile {
    fn from_affine(a: &Affine) -> Self {
        Self {
            w: rows(&a.w),
            b: a.b.to_vec(),
        }
    }

    fn into_affine(self, name: &str) -> Result<Affine> {
        Ok(Affine {
            w: matrix(&format!("{name}.w"), self.w)?,
            b: Array1::from(self.b),
        })
    }
}

impl NormFile {
    fn from_normalizer(n: &Normalizer) -> Option<Self> {
        match n {
            Normalizer::None => None,
            Normalizer::Batch(s) => Some(NormFile::Batch {
                gamma: s.gamma.to_vec(),
                beta: s.beta.to_vec(),
                running_mean: s.running_mean.to_vec(),
                running_var: s.running_var.to_vec(),
                eps: s.eps,
                momentum: s.momentum,
            }),
            Normalizer::LearnableShared(p) => Some(NormFile::LearnableShared {
                mu: rows(&p.mu),
                tau: rows(&p.tau),
                m: p.momentum,
            }),
            Normalizer::FairIdentity(p) => Some(NormFile::FairIdentity {
                mu: rows(&p.mu),
                tau: rows(&p.tau),
                m: p.momentum,
            }),
        }
    }

    fn into_normalizer(file: Option<Self>) -> Result<Normalizer> {
        let fin = |mu, tau, m| -> Result<FinParams> {
            FinParams::new(matrix("norm.mu", mu)?, matrix("norm.tau", tau)?, m)
                .map_err(|e| Error::CheckpointShape(e.to_string()))
        };
        Ok(match file {
            None => Normalizer::None,
            Some(NormFile::Batch {
                gamma,
                beta,
                running_mean,
                running_var,
                eps,
                momentum,
            }) => {
                let d = gamma.len();
                if [beta.len(), running_mean.len(), running_var.len()] != [d; 3] {
                    return Err(Error::CheckpointShape(
                        "batch normalizer vectors have different lengths".into(),
                    ));
                }
                Normalizer::Batch(BatchNormState {
                    gamma: Array1::from(gamma),
                    beta: Array1::from(beta),
                    running_mean: Array1::from(running_mean),
                    running_var: Array1::from(running_var),
                    eps,
                    momentum,
                })
            }
            Some(NormFile::LearnableShared { mu, tau, m }) => {
                let p = fin(mu, tau, m)?;
                if p.group_count() != 1 {
                    return Err(Error::CheckpointShape(format!(
                        "learnable_shared normalizer has {} groups, expected 1",
                        p.group_count()
                    )));
                }
                Normalizer::LearnableShared(p)
            }
            Some(NormFile::FairIdentity { mu, tau, m }) => Normalizer::FairIdentity(fin(mu, tau, m)?),
        })
    }
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            backbone: self.model.backbone.iter().map(LayerFile::from_affine).collect(),
            norm: NormFile::from_normalizer(&self.model.norm),
            head: LayerFile::from_affine(&self.model.head),
            epoch: self.epoch,
            rng: self.rng.clone(),
        };
        Ok(jsonfmt::to_string(&file, FloatStyle::RoundTrip, false)?)
    }

    /// Parses a checkpoint, checking the version before the layout and the
    /// layout before the shapes.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(serde_json::Value::as_u64);
        if found != Some(CHECKPOINT_VERSION) {
            // A missing or non-integer version reads as 0.
            return Err(Error::CheckpointVersion {
                found: found.unwrap_or(0),
                expected: CHECKPOINT_VERSION,
            });
        }
        let file: CheckpointFile = serde_json::from_value(value)?;
        let backbone = file
            .backbone
            .into_iter()
            .enumerate()
            .map(|(k, l)| l.into_affine(&format!("backbone.{k}")))
            .collect::<Result<Vec<_>>>()?;
        let head = file.head.into_affine("head")?;
        let norm = NormFile::into_normalizer(file.norm)?;
        if norm.kind() != file.config.norm_kind {
            return Err(Error::CheckpointShape(format!(
                "config says {} but the stored normalizer is {}",
                file.config.norm_kind.label(),
                norm.kind().label()
            )));
        }
        let model = MlpModel::new(backbone, norm, head).map_err(|e| match e {
            Error::Shape(msg) => Error::CheckpointShape(msg),
            other => other,
        })?;
        if model.layer_dims() != file.config.layer_dims {
            return Err(Error::CheckpointShape(format!(
                "weights have layer dims {:?} but config says {:?}",
                model.layer_dims(),
                file.config.layer_dims
            )));
        }
        Ok(Self {
            config: file.config,
            model,
            epoch: file.epoch,
            rng: file.rng,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}
