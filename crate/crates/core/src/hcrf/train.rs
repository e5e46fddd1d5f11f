use serde::{Deserialize, Serialize};

use super::objective::{rll_and_gradient_flat, LabeledSequence};
use super::{HcrfDims, HcrfModel};
use crate::error::{Error, Result};
use crate::optim::{lbfgs_minimize, LbfgsConfig, LbfgsResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HcrfTrainConfig {
    pub num_classes: usize,
    pub num_states: usize,
    /// L2 penalty weight.
    pub lambda: f64,
    /// When non-empty, `lambda` is picked from this grid on a held-out
    /// subset of the training persons (done by the pipeline).
    pub lambda_grid: Vec<f64>,
    pub init_scale: f64,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
}

impl Default for HcrfTrainConfig {
    fn default() -> Self {
        HcrfTrainConfig {
            num_classes: super::DEFAULT_CLASSES,
            num_states: super::DEFAULT_STATES,
            lambda: 1.0,
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0],
            init_scale: 0.1,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// Fits an HCRF by L-BFGS on the regularized negative log-likelihood,
/// starting from parameters drawn uniformly in `[-init_scale, init_scale]`.
pub fn train_hcrf(data: &[LabeledSequence], cfg: &HcrfTrainConfig) -> Result<(HcrfModel, LbfgsResult)> {
    let first = data
        .first()
        .ok_or_else(|| Error::invalid("HCRF training needs at least one labelled sequence"))?;
    let feature_dim = first
        .frames
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("HCRF training sequence 0 is empty"))?;
    if !(cfg.lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {}", cfg.lambda)));
    }
    let dims = HcrfDims::new(cfg.num_classes, cfg.num_states, feature_dim)?;
    let init = HcrfModel::random(dims, cfg.init_scale, cfg.seed);

    // Validates labels and shapes once up front.
    rll_and_gradient_flat(dims, init.params(), data, cfg.lambda)?;

    let result = lbfgs_minimize(
        |p| match rll_and_gradient_flat(dims, p, data, cfg.lambda) {
            Ok(vg) => vg,
            Err(_) => (f64::NAN, vec![f64::NAN; p.len()]),
        },
        init.params(),
        &cfg.lbfgs,
    )?;
    let model = HcrfModel::from_params(dims, result.x.clone())?;
    Ok((model, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Vec<LabeledSequence> {
        let seq = |v: f64, label| LabeledSequence {
            frames: vec![vec![v, 1.0]],
            label,
        };
        vec![seq(-1.0, 0), seq(-0.8, 0), seq(-1.2, 0), seq(1.0, 1), seq(0.9, 1), seq(1.3, 1)]
    }

    fn cfg(lambda: f64) -> HcrfTrainConfig {
        HcrfTrainConfig {
            num_classes: 2,
            num_states: 2,
            lambda,
            seed: 4,
            ..HcrfTrainConfig::default()
        }
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let data = separable();
        let (model, res) = train_hcrf(&data, &cfg(0.01)).unwrap();
        for s in &data {
            assert_eq!(model.predict_vas(&s.frames).unwrap(), s.label);
        }
        assert!(res.value <= res.trace[0].value);
        for w in res.trace.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
    }

    #[test]
    fn heavy_penalty_flattens_posterior() {
        let data = separable();
        let (weak, _) = train_hcrf(&data, &cfg(0.01)).unwrap();
        let (strong, _) = train_hcrf(&data, &cfg(1e4)).unwrap();
        let norm = |m: &HcrfModel| m.params().iter().map(|p| p * p).sum::<f64>();
        assert!(norm(&strong) < norm(&weak));
        for s in &data {
            let post = strong.class_posterior(&s.frames).unwrap();
            assert!((post[0] - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let data = separable();
        let (a, _) = train_hcrf(&data, &cfg(0.1)).unwrap();
        let (b, _) = train_hcrf(&data, &cfg(0.1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_data_rejected() {
        assert!(train_hcrf(&[], &cfg(0.1)).is_err());
    }
}
