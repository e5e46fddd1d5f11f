//! Log-space forward-backward for one class-conditional chain.

use super::{dot, HcrfModel};

/// Posterior state marginals under one class.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMarginals {
    /// `unary[t][c] = P(h_t = c | S, k)`.
    pub unary: Vec<Vec<f64>>,
    /// `pairwise[t - 1][c * C + l] = P(h_{t-1} = c, h_t = l | S, k)` for `t >= 1`.
    pub pairwise: Vec<Vec<f64>>,
    pub log_z: f64,
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|v| (v - lse).exp()).collect()
}

/// Forward pass tables for a chain with `C` states over `T` frames, all
/// stored row-major as `T x C`.
pub(crate) struct Chain {
    pub unary: Vec<f64>,
    pub alpha: Vec<f64>,
    pub log_z: f64,
}

pub(crate) fn unary_table(params: &[f64], k: usize, model_dims: super::HcrfDims, frames: &[Vec<f64>]) -> Vec<f64> {
    let c_n = model_dims.num_states;
    let d = model_dims.feature_dim;
    let mut table = Vec::with_capacity(frames.len() * c_n);
    for x in frames {
        for c in 0..c_n {
            let o = model_dims.unary_offset(k, c);
            table.push(dot(&params[o..o + d], x));
        }
    }
    table
}

/// `alpha[t][l] = U[t][l] + lse_c(alpha[t-1][c] + m[c][l])`.
pub(crate) fn forward_tables(unary: Vec<f64>, trans: &[f64], c_n: usize) -> Chain {
    let t_n = unary.len() / c_n;
    let mut alpha = vec![0.0; t_n * c_n];
    alpha[..c_n].copy_from_slice(&unary[..c_n]);
    let mut scratch = vec![0.0; c_n];
    for t in 1..t_n {
        let (prev_rows, cur_rows) = alpha.split_at_mut(t * c_n);
        let prev = &prev_rows[(t - 1) * c_n..];
        for l in 0..c_n {
            for c in 0..c_n {
                scratch[c] = prev[c] + trans[c * c_n + l];
            }
            cur_rows[l] = unary[t * c_n + l] + log_sum_exp(&scratch);
        }
    }
    let log_z = log_sum_exp(&alpha[(t_n - 1) * c_n..]);
    Chain { unary, alpha, log_z }
}

/// `beta[t][c] = lse_l(m[c][l] + U[t+1][l] + beta[t+1][l])`, `beta[T-1] = 0`.
pub(crate) fn backward_table(unary: &[f64], trans: &[f64], c_n: usize) -> Vec<f64> {
    let t_n = unary.len() / c_n;
    let mut beta = vec![0.0; t_n * c_n];
    let mut scratch = vec![0.0; c_n];
    for t in (0..t_n.saturating_sub(1)).rev() {
        let (cur_rows, next_rows) = beta.split_at_mut((t + 1) * c_n);
        let next = &next_rows[..c_n];
        let u_next = &unary[(t + 1) * c_n..(t + 2) * c_n];
        for c in 0..c_n {
            for l in 0..c_n {
                scratch[l] = trans[c * c_n + l] + u_next[l] + next[l];
            }
            cur_rows[t * c_n + c] = log_sum_exp(&scratch);
        }
    }
    beta
}

pub(crate) fn forward(model: &HcrfModel, k: usize, frames: &[Vec<f64>]) -> Chain {
    let dims = model.dims();
    let unary = unary_table(model.params(), k, dims, frames);
    forward_tables(unary, model.transitions(k), dims.num_states)
}

pub(crate) fn state_marginals(model: &HcrfModel, k: usize, frames: &[Vec<f64>]) -> StateMarginals {
    let c_n = model.num_states();
    let trans = model.transitions(k);
    let chain = forward(model, k, frames);
    let beta = backward_table(&chain.unary, trans, c_n);
    let t_n = frames.len();
    let log_z = chain.log_z;

    let unary = (0..t_n)
        .map(|t| {
            (0..c_n)
                .map(|c| (chain.alpha[t * c_n + c] + beta[t * c_n + c] - log_z).exp())
                .collect()
        })
        .collect();
    let pairwise = (1..t_n)
        .map(|t| {
            let mut p = vec![0.0; c_n * c_n];
            for c in 0..c_n {
                for l in 0..c_n {
                    p[c * c_n + l] = (chain.alpha[(t - 1) * c_n + c]
                        + trans[c * c_n + l]
                        + chain.unary[t * c_n + l]
                        + beta[t * c_n + l]
                        - log_z)
                        .exp();
                }
            }
            p
        })
        .collect();
    StateMarginals {
        unary,
        pairwise,
        log_z,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{brute_force_log_partition, brute_force_state_marginals, HcrfDims};
    use super::*;

    fn frames(t: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..t)
            .map(|_| {
                let mut f: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                f.push(1.0);
                f
            })
            .collect()
    }

    #[test]
    fn zero_model_partition_is_t_log_c() {
        let m = HcrfModel::zeros(HcrfDims::new(2, 3, 2).unwrap());
        let x = frames(5, 2, 1);
        let lz = m.log_partition(1, &x).unwrap();
        assert!((lz - 5.0 * 3f64.ln()).abs() < 1e-12);
        let marg = m.state_marginals(0, &x).unwrap();
        for row in &marg.unary {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_frame_is_softmax_of_unaries() {
        let m = HcrfModel::random(HcrfDims::new(2, 4, 3).unwrap(), 1.0, 3);
        let x = frames(1, 3, 2);
        let scores: Vec<f64> = (0..4).map(|c| m.unary_potential(1, c, &x[0]).unwrap()).collect();
        assert!((m.log_partition(1, &x).unwrap() - log_sum_exp(&scores)).abs() < 1e-12);
        let marg = m.state_marginals(1, &x).unwrap();
        assert!(marg.pairwise.is_empty());
        for (p, q) in marg.unary[0].iter().zip(softmax(&scores)) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_path_enumeration() {
        let m = HcrfModel::random(HcrfDims::new(2, 3, 2).unwrap(), 1.5, 9);
        let x = frames(4, 2, 4);
        let fast = m.log_partition(0, &x).unwrap();
        let slow = brute_force_log_partition(&m, 0, &x).unwrap();
        assert!((fast - slow).abs() / slow.abs().max(1e-300) < 1e-10);

        let m = HcrfModel::random(HcrfDims::new(2, 2, 2).unwrap(), 1.5, 10);
        let x = frames(3, 2, 5);
        let fb = m.state_marginals(1, &x).unwrap();
        let bf = brute_force_state_marginals(&m, 1, &x).unwrap();
        for (a, b) in fb.unary.iter().flatten().zip(bf.unary.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in fb.pairwise.iter().flatten().zip(bf.pairwise.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn long_sequences_stay_finite() {
        let m = HcrfModel::random(HcrfDims::new(2, 11, 3).unwrap(), 5.0, 1);
        let x: Vec<Vec<f64>> = frames(2000, 3, 7).into_iter().map(|f| f.iter().map(|v| v * 40.0).collect()).collect();
        let lz = m.log_partition(0, &x).unwrap();
        assert!(lz.is_finite());
        let post = m.class_posterior(&x).unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
