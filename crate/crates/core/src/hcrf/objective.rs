use serde::{Deserialize, Serialize};

use super::inference::{forward_tables, log_sum_exp, unary_table};
use super::scaled::{log_expectations, scaled_forward, ScaledChain};
use super::HcrfDims;
use crate::error::{Error, Result};

/// A bias-augmented feature sequence with its class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub frames: Vec<Vec<f64>>,
    pub label: usize,
}

fn validate(dims: HcrfDims, params: &[f64], data: &[LabeledSequence]) -> Result<()> {
    if params.len() != dims.param_len() {
        return Err(Error::Shape {
            expected: dims.param_len(),
            found: params.len(),
        });
    }
    for (i, seq) in data.iter().enumerate() {
        if seq.label >= dims.num_classes {
            return Err(Error::invalid(format!(
                "sequence {i}: label {} outside [0, {}]",
                seq.label,
                dims.num_classes - 1
            )));
        }
        if seq.frames.is_empty() {
            return Err(Error::invalid(format!("sequence {i} is empty")));
        }
        if let Some(f) = seq.frames.iter().find(|f| f.len() != dims.feature_dim) {
            return Err(Error::Shape {
                expected: dims.feature_dim,
                found: f.len(),
            });
        }
    }
    Ok(())
}

fn transitions(dims: HcrfDims, params: &[f64], k: usize) -> &[f64] {
    let o = dims.transition_offset(k);
    &params[o..o + dims.num_states * dims.num_states]
}

/// `-sum_i log P(v_i | S_i) + lambda * ||params||^2` and its gradient.
///
/// Per sequence, the gradient with respect to `theta_k` is the expected
/// feature count under `P(H | S, k)` weighted by `P(k | S) - I(k = v)`;
/// the expectations come from forward-backward state marginals, computed in
/// scaled probability space with a log-space fallback.
pub fn rll_and_gradient_flat(
    dims: HcrfDims,
    params: &[f64],
    data: &[LabeledSequence],
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    validate(dims, params, data)?;

    let c_n = dims.num_states;
    let d = dims.feature_dim;
    let mut value = 0.0;
    let mut grad = vec![0.0; params.len()];

    for seq in data {
        let chains: Vec<(Vec<f64>, Option<ScaledChain>, f64)> = (0..dims.num_classes)
            .map(|k| {
                let unary = unary_table(params, k, dims, &seq.frames);
                let trans = transitions(dims, params, k);
                match scaled_forward(&unary, trans, c_n) {
                    Some(chain) => {
                        let lz = chain.log_z;
                        (unary, Some(chain), lz)
                    }
                    None => {
                        let lz = forward_tables(unary.clone(), trans, c_n).log_z;
                        (unary, None, lz)
                    }
                }
            })
            .collect();
        let log_z: Vec<f64> = chains.iter().map(|c| c.2).collect();
        let log_total = log_sum_exp(&log_z);
        value -= log_z[seq.label] - log_total;

        for (k, (unary, scaled, _)) in chains.iter().enumerate() {
            let indicator = if k == seq.label { 1.0 } else { 0.0 };
            let weight = (log_z[k] - log_total).exp() - indicator;
            if weight == 0.0 {
                continue;
            }
            let trans = transitions(dims, params, k);
            let stats = scaled
                .as_ref()
                .and_then(|c| c.expectations(c_n))
                .unwrap_or_else(|| log_expectations(unary, trans, c_n).1);

            for (t, x) in seq.frames.iter().enumerate() {
                for c in 0..c_n {
                    let coef = weight * stats.unary[t * c_n + c];
                    let o = dims.unary_offset(k, c);
                    for (g, xj) in grad[o..o + d].iter_mut().zip(x) {
                        *g += coef * xj;
                    }
                }
            }
            let t_off = dims.transition_offset(k);
            for (g, xi) in grad[t_off..t_off + c_n * c_n].iter_mut().zip(&stats.pairwise_sum) {
                *g += weight * xi;
            }
        }
    }

    if lambda > 0.0 {
        for (g, p) in grad.iter_mut().zip(params) {
            value += lambda * p * p;
            *g += 2.0 * lambda * p;
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::super::HcrfModel;
    use super::*;
    use crate::optim::{finite_difference_gradient, relative_error};
    use rand::{Rng, SeedableRng};

    fn dataset(dims: HcrfDims, n: usize, t: usize, seed: u64) -> Vec<LabeledSequence> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| LabeledSequence {
                frames: (0..t)
                    .map(|_| {
                        let mut f: Vec<f64> = (0..dims.feature_dim - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        f.push(1.0);
                        f
                    })
                    .collect(),
                label: i % dims.num_classes,
            })
            .collect()
    }

    #[test]
    fn zero_model_value_and_symmetry() {
        let dims = HcrfDims::new(4, 3, 2).unwrap();
        let data = dataset(dims, 5, 3, 1);
        let (v, g) = rll_and_gradient_flat(dims, &vec![0.0; dims.param_len()], &data, 0.0).unwrap();
        assert!((v - 5.0 * 4f64.ln()).abs() < 1e-12);
        // Uniform pairwise marginals: class weights (P(k) - I(k = v)) sum to zero.
        let total: f64 = (0..4).map(|k| g[dims.transition_offset(k)]).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn symmetric_classes_have_zero_transition_gradient() {
        // Two identical zero classes, one sequence labelled with each.
        let dims = HcrfDims::new(2, 2, 2).unwrap();
        let mut data = dataset(dims, 2, 4, 3);
        data[1].frames = data[0].frames.clone();
        let (_, g) = rll_and_gradient_flat(dims, &vec![0.0; dims.param_len()], &data, 0.0).unwrap();
        for k in 0..2 {
            let o = dims.transition_offset(k);
            for v in &g[o..o + 4] {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let dims = HcrfDims::new(3, 2, 2).unwrap();
        let data = dataset(dims, 3, 4, 5);
        let model = HcrfModel::random(dims, 1.0, 8);
        for lambda in [0.0, 0.5] {
            let (_, g) = rll_and_gradient_flat(dims, model.params(), &data, lambda).unwrap();
            let fd = finite_difference_gradient(
                |p| rll_and_gradient_flat(dims, p, &data, lambda).unwrap().0,
                model.params(),
                1e-6,
            );
            for (a, b) in g.iter().zip(&fd) {
                assert!(relative_error(*a, *b, 1e-8) < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn extreme_parameters_match_log_space_value() {
        let dims = HcrfDims::new(3, 3, 2).unwrap();
        let data = dataset(dims, 4, 6, 9);
        let model = HcrfModel::random(dims, 900.0, 2);
        let (v, g) = rll_and_gradient_flat(dims, model.params(), &data, 0.0).unwrap();
        let mut expected = 0.0;
        for s in &data {
            expected -= model.class_posterior(&s.frames).unwrap()[s.label].ln();
        }
        assert!(g.iter().all(|x| x.is_finite()));
        if expected.is_finite() {
            assert!((v - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{v} vs {expected}");
        }
    }

    #[test]
    fn rejects_bad_labels_and_lambda() {
        let dims = HcrfDims::new(2, 2, 2).unwrap();
        let mut data = dataset(dims, 1, 2, 1);
        let p = vec![0.0; dims.param_len()];
        assert!(rll_and_gradient_flat(dims, &p, &data, -1.0).is_err());
        data[0].label = 2;
        assert!(rll_and_gradient_flat(dims, &p, &data, 0.0).is_err());
    }
}
