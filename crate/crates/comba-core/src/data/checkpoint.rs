//! Versioned JSON checkpoints of named parameter tensors.
//!
//! Doubles survive the trip exactly: serialization uses the shortest
//! representation that parses back to the same bit pattern, and saving is
//! deterministic, so save → load → save reproduces the file byte-for-byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelSpec};
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::train::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: ModelSpec,
    pub config: Option<TrainConfig>,
    pub tensors: Vec<NamedTensor>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &ModelParams,
    params: &ParamSet,
    config: Option<&TrainConfig>,
) -> Result<()> {
    let tensors = params
        .iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            data: p.value.data().to_vec(),
        })
        .collect();
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        spec: model.spec.clone(),
        config: config.cloned(),
        tensors,
    };
    fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointIncompatible(format!(
            "version {} (this build reads {})",
            ckpt.version, CHECKPOINT_VERSION
        )));
    }
    Ok(ckpt)
}

/// Copy checkpoint tensors into an existing parameter set, insisting on an
/// exact name/shape correspondence.
pub fn restore_into(ckpt: &Checkpoint, params: &mut ParamSet) -> Result<()> {
    if ckpt.tensors.len() != params.len() {
        return Err(Error::CheckpointIncompatible(format!(
            "checkpoint holds {} tensors, model expects {}",
            ckpt.tensors.len(),
            params.len()
        )));
    }
    for t in &ckpt.tensors {
        let id = params.find(&t.name).ok_or_else(|| {
            Error::CheckpointIncompatible(format!("model has no parameter named {:?}", t.name))
        })?;
        if params.value(id).shape() != t.shape.as_slice() {
            return Err(Error::CheckpointIncompatible(format!(
                "{}: checkpoint shape {:?} vs model shape {:?}",
                t.name,
                t.shape,
                params.value(id).shape()
            )));
        }
        params.param_mut(id).value = Tensor::from_vec(&t.shape, t.data.clone())
            .map_err(|e| Error::CheckpointIncompatible(format!("{}: {e}", t.name)))?;
    }
    Ok(())
}

/// Rebuild the model a checkpoint describes and load its weights.
pub fn restore_model(path: &Path) -> Result<(ModelParams, ParamSet, Option<TrainConfig>)> {
    let ckpt = load_checkpoint(path)?;
    let (model, mut params) = ModelParams::build(ckpt.spec.clone(), &mut RngState::new(0))?;
    restore_into(&ckpt, &mut params)?;
    Ok((model, params, ckpt.config))
}
