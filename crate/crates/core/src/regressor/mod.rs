//! Frame-level PSPI regressors: a bidirectional LSTM over a centered window
//! and a one-hidden-layer feedforward baseline on single frames.

mod bilstm;
mod ffn;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{rmsprop_step, RmspropConfig};

pub use bilstm::{train_regressor, BiLstmDims, BiLstmRegressor, Direction, LstmCellParams};
pub use ffn::{train_ffn, FeedforwardRegressor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    /// Hidden units per LSTM direction.
    pub hidden: usize,
    /// Width of the ReLU layer on the concatenated final states.
    pub head_units: usize,
    pub window_radius: usize,
    /// Hidden units of the feedforward baseline.
    pub ffn_hidden: usize,
    pub rmsprop: RmspropConfig,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            hidden: 128,
            head_units: 64,
            window_radius: 7,
            ffn_hidden: 200,
            rmsprop: RmspropConfig::default(),
        }
    }
}

/// One supervised frame: `frame` of `sequence` should map to `target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTarget {
    pub sequence: usize,
    pub frame: usize,
    pub target: f64,
}

/// Feature sequences plus the frames selected for training. Windows are cut
/// on the fly, so each frame is stored once.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDataset {
    pub sequences: Vec<Vec<Vec<f64>>>,
    pub items: Vec<FrameTarget>,
}

impl FrameDataset {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::invalid("training set has no frames"));
        }
        for (s, seq) in self.sequences.iter().enumerate() {
            if let Some(f) = seq.iter().find(|f| f.len() != input_dim) {
                return Err(Error::invalid(format!(
                    "training sequence {s}: frame has {} features, model expects {input_dim}",
                    f.len()
                )));
            }
        }
        for (i, it) in self.items.iter().enumerate() {
            let ok = self.sequences.get(it.sequence).is_some_and(|s| it.frame < s.len());
            if !ok {
                return Err(Error::invalid(format!(
                    "training item {i} points at missing frame ({}, {})",
                    it.sequence, it.frame
                )));
            }
            if !it.target.is_finite() {
                return Err(Error::NonFinite(format!("target of training item {i}")));
            }
        }
        Ok(())
    }
}

/// Index of the frame at `offset` from `center`, replicating the edge frames.
pub(crate) fn clamped(center: usize, offset: isize, len: usize) -> usize {
    (center as isize + offset).clamp(0, len as isize - 1) as usize
}

pub(crate) trait FrameModel {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn input_dim(&self) -> usize;
    /// Adds `scale * d(err^2)/d(params)` to `grad` and returns `err^2`.
    fn accumulate(&self, frames: &[Vec<f64>], center: usize, target: f64, scale: f64, grad: &mut [f64]) -> f64;
}

/// Mini-batch RMSProp on mean squared error; returns the mean training loss
/// of each epoch.
pub(crate) fn train_rmsprop<M: FrameModel>(
    model: &mut M,
    data: &FrameDataset,
    cfg: &RmspropConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    data.validate(model.input_dim())?;
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let n = model.params().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut order: Vec<usize> = (0..data.items.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let it = data.items[i];
                loss += model.accumulate(&data.sequences[it.sequence], it.frame, it.target, scale, &mut grad);
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
            }
            total += loss;
            rmsprop_step(model.params_mut(), &grad, &mut state, cfg.learning_rate, cfg.decay, cfg.epsilon)?;
        }
        history.push(total / data.items.len() as f64);
    }
    Ok(history)
}

pub(crate) fn uniform_fill(dst: &mut [f64], radius: f64, rng: &mut ChaCha8Rng) {
    for v in dst {
        *v = rng.gen_range(-radius..=radius);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A named, shaped slice of a flat parameter vector, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub(crate) fn to_blocks(specs: &[(&str, Vec<usize>)], params: &[f64]) -> Vec<ParamBlock> {
    let mut offset = 0;
    specs
        .iter()
        .map(|(name, shape)| {
            let len: usize = shape.iter().product();
            let block = ParamBlock {
                name: (*name).to_string(),
                shape: shape.clone(),
                values: params[offset..offset + len].to_vec(),
            };
            offset += len;
            block
        })
        .collect()
}

pub(crate) fn from_blocks(specs: &[(&str, Vec<usize>)], blocks: &[ParamBlock]) -> Result<Vec<f64>> {
    if specs.len() != blocks.len() {
        return Err(Error::invalid(format!(
            "expected {} parameter blocks, found {}",
            specs.len(),
            blocks.len()
        )));
    }
    let mut params = Vec::new();
    for ((name, shape), block) in specs.iter().zip(blocks) {
        if block.name != *name || block.shape != *shape || block.values.len() != shape.iter().product::<usize>() {
            return Err(Error::invalid(format!(
                "parameter block {} {:?} does not match expected {name} {shape:?}",
                block.name, block.shape
            )));
        }
        if block.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter block {name}")));
        }
        params.extend_from_slice(&block.values);
    }
    Ok(params)
}
