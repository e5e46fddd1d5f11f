//! Latent-state hidden conditional random field for sequence classification.
//!
//! One linear-chain CRF per class `k` scores a hidden path `h_1..h_T` as
//!
//! ```text
//! f_k(S, H) = sum_t u_k[h_t] . s_t  +  sum_{t>=2} m_k[h_{t-1}, h_t]
//! ```
//!
//! where `u_k` is a `C x d` unary weight matrix and `m_k` a stationary `C x C`
//! transition table. The class posterior marginalizes the hidden path:
//! `P(k | S) = Z_k(S) / sum_j Z_j(S)` with `Z_k = sum_H exp f_k(S, H)`.
//! Everything is evaluated in log space.
//!
//! Frames passed to the model must already carry the constant bias coordinate
//! (see [`with_bias`]); class index `k` corresponds to VAS value `k`.

mod inference;
mod objective;
mod oracle;
mod scaled;
mod train;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use inference::StateMarginals;
pub use objective::{rll_and_gradient_flat, LabeledSequence};
pub use oracle::{brute_force_class_posterior, brute_force_log_partition, brute_force_state_marginals};
pub use train::{train_hcrf, HcrfTrainConfig};

/// Number of VAS levels (0..=10) and the default hidden-state count.
pub const DEFAULT_CLASSES: usize = 11;
pub const DEFAULT_STATES: usize = 11;

/// Appends the constant 1 bias coordinate to every frame.
pub fn with_bias(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|f| {
            let mut v = Vec::with_capacity(f.len() + 1);
            v.extend_from_slice(f);
            v.push(1.0);
            v
        })
        .collect()
}

/// Shape of an HCRF parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HcrfDims {
    pub num_classes: usize,
    pub num_states: usize,
    pub feature_dim: usize,
}

impl HcrfDims {
    pub fn new(num_classes: usize, num_states: usize, feature_dim: usize) -> Result<Self> {
        if num_classes == 0 || num_states == 0 || feature_dim == 0 {
            return Err(Error::invalid("HCRF needs K, C, d >= 1"));
        }
        Ok(HcrfDims {
            num_classes,
            num_states,
            feature_dim,
        })
    }

    fn unary_len(&self) -> usize {
        self.num_states * self.feature_dim
    }

    pub(crate) fn class_len(&self) -> usize {
        self.unary_len() + self.num_states * self.num_states
    }

    pub fn param_len(&self) -> usize {
        self.num_classes * self.class_len()
    }

    /// Offset of `u_k[c, 0]`.
    pub(crate) fn unary_offset(&self, k: usize, c: usize) -> usize {
        k * self.class_len() + c * self.feature_dim
    }

    /// Offset of `m_k[0, 0]`.
    pub(crate) fn transition_offset(&self, k: usize) -> usize {
        k * self.class_len() + self.unary_len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HcrfModel {
    dims: HcrfDims,
    params: Vec<f64>,
}

impl HcrfModel {
    pub fn zeros(dims: HcrfDims) -> Self {
        HcrfModel {
            params: vec![0.0; dims.param_len()],
            dims,
        }
    }

    /// Parameters drawn uniformly from `[-scale, scale]`.
    pub fn random(dims: HcrfDims, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..dims.param_len())
            .map(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 })
            .collect();
        HcrfModel { dims, params }
    }

    pub fn from_params(dims: HcrfDims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.param_len() {
            return Err(Error::Shape {
                expected: dims.param_len(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("HCRF parameters".into()));
        }
        Ok(HcrfModel { dims, params })
    }

    pub fn dims(&self) -> HcrfDims {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.dims.num_classes
    }

    pub fn num_states(&self) -> usize {
        self.dims.num_states
    }

    pub fn feature_dim(&self) -> usize {
        self.dims.feature_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row `c` of `u_k`.
    pub fn unary_weights(&self, k: usize, c: usize) -> &[f64] {
        let o = self.dims.unary_offset(k, c);
        &self.params[o..o + self.dims.feature_dim]
    }

    pub fn unary_weights_mut(&mut self, k: usize, c: usize) -> &mut [f64] {
        let o = self.dims.unary_offset(k, c);
        &mut self.params[o..o + self.dims.feature_dim]
    }

    /// `m_k` as a row-major `C x C` slice.
    pub fn transitions(&self, k: usize) -> &[f64] {
        let o = self.dims.transition_offset(k);
        &self.params[o..o + self.dims.num_states * self.dims.num_states]
    }

    pub fn transitions_mut(&mut self, k: usize) -> &mut [f64] {
        let o = self.dims.transition_offset(k);
        let n = self.dims.num_states * self.dims.num_states;
        &mut self.params[o..o + n]
    }

    fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.dims.num_classes {
            return Err(Error::invalid(format!(
                "class {k} out of range (K = {})",
                self.dims.num_classes
            )));
        }
        Ok(())
    }

    fn check_state(&self, c: usize) -> Result<()> {
        if c >= self.dims.num_states {
            return Err(Error::invalid(format!(
                "hidden state {c} out of range (C = {})",
                self.dims.num_states
            )));
        }
        Ok(())
    }

    pub(crate) fn check_frames(&self, frames: &[Vec<f64>]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::invalid("HCRF sequence must have at least one frame"));
        }
        for f in frames {
            if f.len() != self.dims.feature_dim {
                return Err(Error::Shape {
                    expected: self.dims.feature_dim,
                    found: f.len(),
                });
            }
        }
        Ok(())
    }

    /// `u_k[c] . frame`.
    pub fn unary_potential(&self, k: usize, c: usize, frame: &[f64]) -> Result<f64> {
        self.check_class(k)?;
        self.check_state(c)?;
        if frame.len() != self.dims.feature_dim {
            return Err(Error::Shape {
                expected: self.dims.feature_dim,
                found: frame.len(),
            });
        }
        Ok(dot(self.unary_weights(k, c), frame))
    }

    /// `m_k[c, l]`: score of moving from state `c` to state `l`.
    pub fn edge_potential(&self, k: usize, c: usize, l: usize) -> Result<f64> {
        self.check_class(k)?;
        self.check_state(c)?;
        self.check_state(l)?;
        Ok(self.transitions(k)[c * self.dims.num_states + l])
    }

    /// Score of one hidden path under class `k`.
    pub fn sequence_score(&self, k: usize, frames: &[Vec<f64>], path: &[usize]) -> Result<f64> {
        self.check_class(k)?;
        self.check_frames(frames)?;
        if path.len() != frames.len() {
            return Err(Error::Shape {
                expected: frames.len(),
                found: path.len(),
            });
        }
        let mut score = 0.0;
        for (t, (&h, x)) in path.iter().zip(frames).enumerate() {
            score += self.unary_potential(k, h, x)?;
            if t > 0 {
                score += self.edge_potential(k, path[t - 1], h)?;
            }
        }
        Ok(score)
    }

    pub fn log_partition(&self, k: usize, frames: &[Vec<f64>]) -> Result<f64> {
        self.check_class(k)?;
        self.check_frames(frames)?;
        Ok(inference::forward(self, k, frames).log_z)
    }

    /// `P(k | S)` for every class.
    pub fn class_posterior(&self, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_frames(frames)?;
        let log_z: Vec<f64> = (0..self.dims.num_classes)
            .map(|k| inference::forward(self, k, frames).log_z)
            .collect();
        Ok(inference::softmax(&log_z))
    }

    pub fn state_marginals(&self, k: usize, frames: &[Vec<f64>]) -> Result<StateMarginals> {
        self.check_class(k)?;
        self.check_frames(frames)?;
        Ok(inference::state_marginals(self, k, frames))
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn predict_vas(&self, frames: &[Vec<f64>]) -> Result<usize> {
        let post = self.class_posterior(frames)?;
        let mut best = 0;
        for (k, &p) in post.iter().enumerate() {
            if p > post[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Regularized negative log-likelihood and its gradient at this model.
    pub fn rll_and_gradient(&self, data: &[LabeledSequence], lambda: f64) -> Result<(f64, Vec<f64>)> {
        for seq in data {
            self.check_frames(&seq.frames)?;
        }
        rll_and_gradient_flat(self.dims, &self.params, data, lambda)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, &HcrfModelJson::from(self))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let doc: HcrfModelJson = crate::io::read_json(path)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct HcrfClassJson {
    /// `C x d`, row-major.
    u: Vec<f64>,
    /// `C x C`, row-major.
    m: Vec<f64>,
}

/// On-disk form of [`HcrfModel`].
#[derive(Serialize, Deserialize)]
pub struct HcrfModelJson {
    num_classes: usize,
    num_states: usize,
    feature_dim: usize,
    classes: Vec<HcrfClassJson>,
}

impl From<&HcrfModel> for HcrfModelJson {
    fn from(model: &HcrfModel) -> Self {
        let d = model.dims;
        let classes = (0..d.num_classes)
            .map(|k| {
                let o = k * d.class_len();
                HcrfClassJson {
                    u: model.params[o..o + d.unary_len()].to_vec(),
                    m: model.transitions(k).to_vec(),
                }
            })
            .collect();
        HcrfModelJson {
            num_classes: d.num_classes,
            num_states: d.num_states,
            feature_dim: d.feature_dim,
            classes,
        }
    }
}

impl TryFrom<HcrfModelJson> for HcrfModel {
    type Error = Error;

    fn try_from(doc: HcrfModelJson) -> Result<Self> {
        let dims = HcrfDims::new(doc.num_classes, doc.num_states, doc.feature_dim)?;
        if doc.classes.len() != dims.num_classes {
            return Err(Error::Shape {
                expected: dims.num_classes,
                found: doc.classes.len(),
            });
        }
        let mut params = Vec::with_capacity(dims.param_len());
        for class in doc.classes {
            if class.u.len() != dims.unary_len() {
                return Err(Error::Shape {
                    expected: dims.unary_len(),
                    found: class.u.len(),
                });
            }
            if class.m.len() != dims.num_states * dims.num_states {
                return Err(Error::Shape {
                    expected: dims.num_states * dims.num_states,
                    found: class.m.len(),
                });
            }
            params.extend(class.u);
            params.extend(class.m);
        }
        HcrfModel::from_params(dims, params)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HcrfModel {
        HcrfModel::random(HcrfDims::new(3, 2, 3).unwrap(), 1.0, 11)
    }

    #[test]
    fn zero_model_potentials_vanish() {
        let m = HcrfModel::zeros(HcrfDims::new(2, 3, 2).unwrap());
        assert_eq!(m.unary_potential(1, 2, &[0.4, 1.0]).unwrap(), 0.0);
        assert_eq!(m.edge_potential(0, 1, 2).unwrap(), 0.0);
        let frames = vec![vec![0.1, 1.0], vec![0.9, 1.0]];
        assert_eq!(m.sequence_score(1, &frames, &[0, 2]).unwrap(), 0.0);
    }

    #[test]
    fn unary_basis_and_scalar_loop() {
        let mut m = HcrfModel::zeros(HcrfDims::new(1, 2, 3).unwrap());
        m.unary_weights_mut(0, 1).copy_from_slice(&[1.0, 0.0, 0.0]);
        assert_eq!(m.unary_potential(0, 1, &[0.3, 5.0, 1.0]).unwrap(), 0.3);

        let m = small();
        let x = [0.25, -1.5, 1.0];
        for k in 0..3 {
            for c in 0..2 {
                let mut acc = 0.0;
                for j in 0..3 {
                    acc += m.params()[k * (2 * 3 + 4) + c * 3 + j] * x[j];
                }
                assert!((m.unary_potential(k, c, &x).unwrap() - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_transitions() {
        let mut m = HcrfModel::zeros(HcrfDims::new(1, 3, 1).unwrap());
        for c in 0..3 {
            m.transitions_mut(0)[c * 3 + c] = 1.0;
        }
        for c in 0..3 {
            for l in 0..3 {
                assert_eq!(m.edge_potential(0, c, l).unwrap(), if c == l { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn sequence_score_term_by_term() {
        let m = small();
        let frames = vec![vec![0.2, -0.4, 1.0], vec![1.1, 0.3, 1.0], vec![-0.7, 0.9, 1.0]];
        let path = [1, 0, 1];
        let k = 2;
        let u = |c: usize, x: &[f64]| -> f64 {
            let row = &m.params()[k * 10 + c * 3..k * 10 + c * 3 + 3];
            row[0] * x[0] + row[1] * x[1] + row[2] * x[2]
        };
        let tr = |c: usize, l: usize| m.params()[k * 10 + 6 + c * 2 + l];
        let expected = u(1, &frames[0]) + u(0, &frames[1]) + u(1, &frames[2]) + tr(1, 0) + tr(0, 1);
        assert!((m.sequence_score(k, &frames, &path).unwrap() - expected).abs() < 1e-14);
        assert!((m.sequence_score(k, &frames[..1], &path[..1]).unwrap() - u(1, &frames[0])).abs() < 1e-15);
    }

    #[test]
    fn index_and_shape_errors() {
        let m = small();
        assert!(m.unary_potential(3, 0, &[0.0; 3]).is_err());
        assert!(m.unary_potential(0, 2, &[0.0; 3]).is_err());
        assert!(m.unary_potential(0, 0, &[0.0; 2]).is_err());
        assert!(m.edge_potential(0, 0, 5).is_err());
        assert!(m.sequence_score(0, &[vec![0.0; 3]], &[0, 1]).is_err());
        assert!(m.predict_vas(&[vec![0.0; 4]]).is_err());
    }

    #[test]
    fn zero_model_predicts_lowest_class() {
        let m = HcrfModel::zeros(HcrfDims::new(11, 11, 3).unwrap());
        let frames = vec![vec![0.5, 1.0, 1.0]; 4];
        let post = m.class_posterior(&frames).unwrap();
        for p in &post {
            assert!((p - 1.0 / 11.0).abs() < 1e-14);
        }
        assert_eq!(m.predict_vas(&frames).unwrap(), 0);
    }

    #[test]
    fn json_round_trip() {
        let m = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hcrf.json");
        m.save_json(&path).unwrap();
        assert_eq!(HcrfModel::load_json(&path).unwrap(), m);
    }
}
