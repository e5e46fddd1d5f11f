use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 30,
        }
    }
}

/// One in-place RMSProp update.
///
/// `state` holds the running mean of squared gradients and is updated first;
/// the parameter step then divides by `sqrt(state) + eps`.
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut [f64],
    lr: f64,
    decay: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape {
            expected: params.len(),
            found: grads.len(),
        });
    }
    if params.len() != state.len() {
        return Err(Error::Shape {
            expected: params.len(),
            found: state.len(),
        });
    }
    if !(lr.is_finite() && decay.is_finite() && eps.is_finite()) {
        return Err(Error::NonFinite("rmsprop hyper-parameters".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient coordinate {i}")));
    }
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *s = decay * *s + (1.0 - decay) * g * g;
        if lr != 0.0 && g != 0.0 {
            *p -= lr * g / (s.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut p = vec![1.0, -2.0];
        let mut s = vec![0.5, 2.0];
        rmsprop_step(&mut p, &[0.0, 0.0], &mut s, 0.1, 0.9, 1e-8).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert!((s[0] - 0.45).abs() < 1e-15);
        assert!((s[1] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn scalar_step() {
        let mut p = vec![0.0];
        let mut s = vec![0.0];
        rmsprop_step(&mut p, &[1.0], &mut s, 0.1, 0.9, 0.0).unwrap();
        assert!((s[0] - 0.1).abs() < 1e-15);
        assert!((p[0] + 0.316_227_766_016_837_94).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut p = vec![0.3, 0.7];
        let mut s = vec![0.0; 2];
        rmsprop_step(&mut p, &[5.0, -3.0], &mut s, 0.0, 0.9, 1e-8).unwrap();
        assert_eq!(p, vec![0.3, 0.7]);
    }

    #[test]
    fn rejects_nan_gradient_and_shape_mismatch() {
        let mut p = vec![0.0];
        let mut s = vec![0.0];
        assert!(rmsprop_step(&mut p, &[f64::NAN], &mut s, 0.1, 0.9, 1e-8).is_err());
        assert!(rmsprop_step(&mut p, &[1.0, 2.0], &mut s, 0.1, 0.9, 1e-8).is_err());
    }
}
