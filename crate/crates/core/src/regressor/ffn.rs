use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, from_blocks, to_blocks, train_rmsprop, uniform_fill, FrameDataset, FrameModel, ParamBlock};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::optim::RmspropConfig;

/// One ReLU hidden layer on a single frame, scalar affine output.
///
/// Parameters: hidden weights (`hidden x d`, row-major), hidden bias, output
/// weights, output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedforwardRegressor {
    input_dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FfnJson {
    kind: String,
    input_dim: usize,
    hidden: usize,
    blocks: Vec<ParamBlock>,
}

const KIND: &str = "ffn";

impl FeedforwardRegressor {
    fn param_len(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + 2 * hidden + 1
    }

    fn block_specs(input_dim: usize, hidden: usize) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("hidden.weights", vec![hidden, input_dim]),
            ("hidden.bias", vec![hidden]),
            ("out.weights", vec![hidden]),
            ("out.bias", vec![1]),
        ]
    }

    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut m = Self::from_params(input_dim, hidden, vec![0.0; Self::param_len(input_dim, hidden)])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, rest) = m.params.split_at_mut(hidden * input_dim);
        uniform_fill(w, 1.0 / (input_dim as f64).sqrt(), &mut rng);
        uniform_fill(&mut rest[hidden..2 * hidden], 1.0 / (hidden as f64).sqrt(), &mut rng);
        Ok(m)
    }

    pub fn from_params(input_dim: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::invalid("feedforward dimensions must be positive"));
        }
        if params.len() != Self::param_len(input_dim, hidden) {
            return Err(Error::Shape {
                expected: Self::param_len(input_dim, hidden),
                found: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feedforward parameters".into()));
        }
        Ok(FeedforwardRegressor {
            input_dim,
            hidden,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden);
        let b = h * d;
        (0..h).map(|k| self.params[b + k] + dot(&self.params[k * d..(k + 1) * d], x)).collect()
    }

    fn output(&self, pre: &[f64]) -> f64 {
        let (d, h) = (self.input_dim, self.hidden);
        let ow = h * d + h;
        self.params[ow + h] + pre.iter().zip(&self.params[ow..ow + h]).map(|(a, w)| a.max(0.0) * w).sum::<f64>()
    }

    fn check(&self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                found: frame.len(),
            });
        }
        Ok(())
    }

    pub fn forward_ffn(&self, frame: &[f64]) -> Result<f64> {
        self.check(frame)?;
        Ok(self.output(&self.pre_activations(frame)))
    }

    pub fn predict_sequence(&self, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        if frames.is_empty() {
            return Err(Error::invalid("cannot predict an empty sequence"));
        }
        frames.iter().map(|f| Ok(self.forward_ffn(f)?.clamp(0.0, 1.0))).collect()
    }

    /// Mean squared error over `(frame, target)` pairs and its gradient.
    pub fn loss_and_gradient_ffn(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, t) in batch {
            self.check(x)?;
            loss += self.backprop(x, *t, scale, &mut grad);
        }
        Ok((loss * scale, grad))
    }

    fn backprop(&self, x: &[f64], target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let (d, h) = (self.input_dim, self.hidden);
        let (hb, ow) = (h * d, h * d + h);
        let pre = self.pre_activations(x);
        let err = self.output(&pre) - target;
        let dy = 2.0 * err * scale;
        grad[ow + h] += dy;
        for (k, &a) in pre.iter().enumerate() {
            if a <= 0.0 {
                continue;
            }
            grad[ow + k] += dy * a;
            let da = dy * self.params[ow + k];
            grad[hb + k] += da;
            axpy(da, x, &mut grad[k * d..(k + 1) * d]);
        }
        err * err
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &FfnJson {
                kind: KIND.into(),
                input_dim: self.input_dim,
                hidden: self.hidden,
                blocks: to_blocks(&Self::block_specs(self.input_dim, self.hidden), &self.params),
            },
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let doc: FfnJson = read_json(path)?;
        if doc.kind != KIND {
            return Err(Error::invalid(format!("{}: expected a {KIND} model, found {}", path.display(), doc.kind)));
        }
        let params = from_blocks(&Self::block_specs(doc.input_dim, doc.hidden), &doc.blocks)?;
        Self::from_params(doc.input_dim, doc.hidden, params)
    }
}

impl FrameModel for FeedforwardRegressor {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn accumulate(&self, frames: &[Vec<f64>], center: usize, target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        self.backprop(&frames[center], target, scale, grad)
    }
}

pub fn train_ffn(
    mut model: FeedforwardRegressor,
    data: &FrameDataset,
    cfg: &RmspropConfig,
    seed: u64,
) -> Result<(FeedforwardRegressor, Vec<f64>)> {
    let history = train_rmsprop(&mut model, data, cfg, seed)?;
    Ok((model, history))
}
