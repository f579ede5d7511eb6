use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, Rssm, RssmArch, Ssm, SsmArch, SurrogateModel, TrainConfig};
use crate::data::NormStats;
use crate::nn::ParamLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Arch {
    Ssm(SsmArch),
    Rssm(RssmArch),
}

/// On-disk form of a trained zone model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Arch,
    /// Flat weight arrays keyed by layer name.
    pub weights: BTreeMap<String, Vec<f64>>,
    pub norm_stats: NormStats,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
}

fn split_weights(layout: &ParamLayout, params: &[f64]) -> BTreeMap<String, Vec<f64>> {
    layout
        .entries
        .iter()
        .map(|(name, off, size)| (name.clone(), params[*off..off + size].to_vec()))
        .collect()
}

fn join_weights(layout: &ParamLayout, weights: &BTreeMap<String, Vec<f64>>) -> Result<Vec<f64>, ModelError> {
    if weights.len() != layout.entries.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} weight arrays, found {}",
            layout.entries.len(),
            weights.len()
        )));
    }
    let mut params = vec![0.0; layout.len()];
    for (name, off, size) in &layout.entries {
        let w = weights
            .get(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing weights {name:?}")))?;
        if w.len() != *size {
            return Err(ModelError::Checkpoint(format!(
                "{name:?} has {} values, expected {size}",
                w.len()
            )));
        }
        params[*off..off + size].copy_from_slice(w);
    }
    Ok(params)
}

impl Checkpoint {
    pub fn from_model(model: &SurrogateModel, seed: u64, train_config: Option<TrainConfig>) -> Self {
        let (arch, weights, norm_stats) = match model {
            SurrogateModel::Ssm(m) => (Arch::Ssm(m.arch.clone()), split_weights(m.layout(), &m.params), m.stats),
            SurrogateModel::Rssm(m) => (Arch::Rssm(m.arch.clone()), split_weights(m.layout(), &m.params), m.stats),
        };
        Self {
            arch,
            weights,
            norm_stats,
            seed,
            train_config,
        }
    }

    pub fn to_model(&self) -> Result<SurrogateModel, ModelError> {
        if self.weights.values().flatten().any(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite("checkpoint weights"));
        }
        Ok(match &self.arch {
            Arch::Ssm(a) => {
                let blank = Ssm::zeroed(a.clone(), self.norm_stats)?;
                let params = join_weights(blank.layout(), &self.weights)?;
                SurrogateModel::Ssm(Ssm::from_params(a.clone(), self.norm_stats, params)?)
            }
            Arch::Rssm(a) => {
                let blank = Rssm::zeroed(a.clone(), self.norm_stats)?;
                let params = join_weights(blank.layout(), &self.weights)?;
                SurrogateModel::Rssm(Rssm::from_params(a.clone(), self.norm_stats, params)?)
            }
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, checkpoint)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
