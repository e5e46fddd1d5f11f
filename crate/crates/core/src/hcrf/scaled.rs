//! Forward-backward in probability space with per-step normalization.
//!
//! Potentials are shifted by their row maxima before exponentiation and the
//! forward messages are renormalized at every frame, so no exponential is
//! taken inside the recursions. Callers fall back to the log-space
//! recursion whenever a normalizer under- or overflows.

use super::inference::{backward_table, forward_tables};

/// Expected sufficient statistics of one class-conditional chain.
pub(crate) struct Expectations {
    /// `T x C` state marginals.
    pub unary: Vec<f64>,
    /// `C x C` pairwise marginals summed over `t >= 1`.
    pub pairwise_sum: Vec<f64>,
}

pub(crate) struct ScaledChain {
    /// `T x C`, `exp(U[t][c] - max_c U[t][c])`.
    phi: Vec<f64>,
    /// `C x C`, `exp(m[c][l] - max m)`.
    edge: Vec<f64>,
    /// `T x C` normalized forward messages.
    alpha: Vec<f64>,
    /// Per-frame normalizers.
    scale: Vec<f64>,
    pub log_z: f64,
}

fn usable(v: f64) -> bool {
    v.is_finite() && v > f64::MIN_POSITIVE
}

pub(crate) fn scaled_forward(unary: &[f64], trans: &[f64], c_n: usize) -> Option<ScaledChain> {
    let t_n = unary.len() / c_n;
    let edge_shift = trans.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edge: Vec<f64> = trans.iter().map(|m| (m - edge_shift).exp()).collect();
    let mut phi = vec![0.0; unary.len()];
    let mut shifts = vec![0.0; t_n];
    for t in 0..t_n {
        let row = &unary[t * c_n..(t + 1) * c_n];
        let shift = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return None;
        }
        shifts[t] = shift;
        for (p, u) in phi[t * c_n..(t + 1) * c_n].iter_mut().zip(row) {
            *p = (u - shift).exp();
        }
    }

    let mut alpha = vec![0.0; unary.len()];
    let mut scale = vec![0.0; t_n];
    let mut log_z = 0.0;
    for t in 0..t_n {
        let (done, rest) = alpha.split_at_mut(t * c_n);
        let cur = &mut rest[..c_n];
        if t == 0 {
            cur.copy_from_slice(&phi[..c_n]);
        } else {
            let prev = &done[(t - 1) * c_n..];
            for (c, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (v, e) in cur.iter_mut().zip(&edge[c * c_n..(c + 1) * c_n]) {
                    *v += a * e;
                }
            }
            for (v, p) in cur.iter_mut().zip(&phi[t * c_n..(t + 1) * c_n]) {
                *v *= p;
            }
        }
        let s: f64 = cur.iter().sum();
        if !usable(s) {
            return None;
        }
        cur.iter_mut().for_each(|v| *v /= s);
        scale[t] = s;
        log_z += s.ln() + shifts[t] + if t > 0 { edge_shift } else { 0.0 };
    }
    if !log_z.is_finite() {
        return None;
    }
    Some(ScaledChain {
        phi,
        edge,
        alpha,
        scale,
        log_z,
    })
}

impl ScaledChain {
    pub(crate) fn expectations(&self, c_n: usize) -> Option<Expectations> {
        let t_n = self.scale.len();
        let mut beta = vec![1.0; t_n * c_n];
        let mut pairwise_sum = vec![0.0; c_n * c_n];
        let mut w = vec![0.0; c_n];
        for t in (1..t_n).rev() {
            for l in 0..c_n {
                w[l] = self.phi[t * c_n + l] * beta[t * c_n + l] / self.scale[t];
            }
            let (head, _) = beta.split_at_mut(t * c_n);
            let prev_beta = &mut head[(t - 1) * c_n..];
            let prev_alpha = &self.alpha[(t - 1) * c_n..t * c_n];
            for c in 0..c_n {
                let e = &self.edge[c * c_n..(c + 1) * c_n];
                let mut acc = 0.0;
                let a = prev_alpha[c];
                let row = &mut pairwise_sum[c * c_n..(c + 1) * c_n];
                for l in 0..c_n {
                    let ew = e[l] * w[l];
                    acc += ew;
                    row[l] += a * ew;
                }
                if !acc.is_finite() {
                    return None;
                }
                prev_beta[c] = acc;
            }
        }
        let unary: Vec<f64> = self.alpha.iter().zip(&beta).map(|(a, b)| a * b).collect();
        if unary.iter().chain(&pairwise_sum).any(|v| !v.is_finite()) {
            return None;
        }
        Some(Expectations { unary, pairwise_sum })
    }
}

/// Log-space reference for the same statistics.
pub(crate) fn log_expectations(unary: &[f64], trans: &[f64], c_n: usize) -> (f64, Expectations) {
    let chain = forward_tables(unary.to_vec(), trans, c_n);
    let beta = backward_table(unary, trans, c_n);
    let t_n = unary.len() / c_n;
    let lz = chain.log_z;
    let marg: Vec<f64> = chain.alpha.iter().zip(&beta).map(|(a, b)| (a + b - lz).exp()).collect();
    let mut pairwise_sum = vec![0.0; c_n * c_n];
    for t in 1..t_n {
        for c in 0..c_n {
            let a = chain.alpha[(t - 1) * c_n + c];
            for l in 0..c_n {
                pairwise_sum[c * c_n + l] +=
                    (a + trans[c * c_n + l] + unary[t * c_n + l] + beta[t * c_n + l] - lz).exp();
            }
        }
    }
    (
        lz,
        Expectations {
            unary: marg,
            pairwise_sum,
        },
    )
}
