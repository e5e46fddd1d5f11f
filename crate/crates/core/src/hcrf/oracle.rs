//! Exhaustive path enumeration. Exponential in `T`; test use only.
//!
//! Path scores are summed term by term from the potential accessors, sharing
//! nothing with the forward-backward tables.

use super::inference::log_sum_exp;
use super::{HcrfModel, StateMarginals};
use crate::error::{Error, Result};

const MAX_PATHS: usize = 1_000_000;

fn all_paths(num_states: usize, len: usize) -> Result<Vec<Vec<usize>>> {
    let count = (0..len).try_fold(1usize, |acc, _| acc.checked_mul(num_states));
    match count {
        Some(n) if n <= MAX_PATHS => {}
        _ => {
            return Err(Error::invalid(format!(
                "{num_states}^{len} hidden paths exceeds the enumeration limit of {MAX_PATHS}"
            )))
        }
    }
    let mut paths = vec![Vec::new()];
    for _ in 0..len {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..num_states).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    Ok(paths)
}

fn path_scores(model: &HcrfModel, k: usize, frames: &[Vec<f64>]) -> Result<(Vec<Vec<usize>>, Vec<f64>)> {
    let paths = all_paths(model.num_states(), frames.len())?;
    let scores = paths
        .iter()
        .map(|p| model.sequence_score(k, frames, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((paths, scores))
}

pub fn brute_force_log_partition(model: &HcrfModel, k: usize, frames: &[Vec<f64>]) -> Result<f64> {
    let (_, scores) = path_scores(model, k, frames)?;
    Ok(log_sum_exp(&scores))
}

/// Class posterior from the joint `(k, H)` enumeration.
pub fn brute_force_class_posterior(model: &HcrfModel, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut joint = Vec::new();
    let mut owner = Vec::new();
    for k in 0..model.num_classes() {
        let (_, scores) = path_scores(model, k, frames)?;
        owner.extend(std::iter::repeat(k).take(scores.len()));
        joint.extend(scores);
    }
    let log_total = log_sum_exp(&joint);
    let mut post = vec![0.0; model.num_classes()];
    for (s, k) in joint.iter().zip(owner) {
        post[k] += (s - log_total).exp();
    }
    Ok(post)
}

pub fn brute_force_state_marginals(model: &HcrfModel, k: usize, frames: &[Vec<f64>]) -> Result<StateMarginals> {
    let (paths, scores) = path_scores(model, k, frames)?;
    let log_z = log_sum_exp(&scores);
    let c_n = model.num_states();
    let t_n = frames.len();
    let mut unary = vec![vec![0.0; c_n]; t_n];
    let mut pairwise = vec![vec![0.0; c_n * c_n]; t_n.saturating_sub(1)];
    for (path, s) in paths.iter().zip(&scores) {
        let w = (s - log_z).exp();
        for (t, &h) in path.iter().enumerate() {
            unary[t][h] += w;
            if t > 0 {
                pairwise[t - 1][path[t - 1] * c_n + h] += w;
            }
        }
    }
    Ok(StateMarginals {
        unary,
        pairwise,
        log_z,
    })
}
