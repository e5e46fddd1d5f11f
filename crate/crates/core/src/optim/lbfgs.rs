//! Limited-memory BFGS with the two-loop recursion and Armijo backtracking.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{dot, inf_norm};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub history_size: usize,
    pub max_iterations: usize,
    /// Stop once the gradient infinity norm drops to this value.
    pub gradient_tolerance: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history_size: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_line_search: 50,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_size == 0 {
            return Err(Error::invalid("L-BFGS history_size must be >= 1"));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::invalid("L-BFGS tolerances must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || self.max_line_search == 0 {
            return Err(Error::invalid("L-BFGS line search needs 0 < shrink < 1 and >= 1 trial"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// One row per accepted point, starting with `x0` at iteration 0.
    pub trace: Vec<TraceRow>,
}

impl LbfgsResult {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,value,grad_inf_norm,step")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iteration, r.value, r.grad_inf_norm, r.step)?;
    }
    Ok(())
}

/// Applies the inverse-Hessian approximation built from `pairs` (oldest first)
/// to `grad`. The initial matrix is `gamma * I` with `gamma = s'y / y'y` of the
/// newest pair. The search direction is the negation of the result.
pub fn two_loop_direction(grad: &[f64], pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let rho: Vec<f64> = pairs.iter().map(|(s, y)| 1.0 / dot(s, y)).collect();
    let mut alpha = vec![0.0; pairs.len()];
    for (i, (s, y)) in pairs.iter().enumerate().rev() {
        alpha[i] = rho[i] * dot(s, &q);
        for (qj, yj) in q.iter_mut().zip(y) {
            *qj -= alpha[i] * yj;
        }
    }
    if let Some((s, y)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, (s, y)) in pairs.iter().enumerate() {
        let beta = rho[i] * dot(y, &q);
        for (qj, sj) in q.iter_mut().zip(s) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q
}

/// Minimizes `objective`, which returns `(value, gradient)` at a point.
///
/// Accepted values never increase. Curvature pairs with `s'y <= 1e-10` are
/// dropped so the implicit inverse Hessian stays positive definite.
pub fn lbfgs_minimize<F>(mut objective: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point".into()));
    }
    if g.len() != x.len() {
        return Err(Error::Shape {
            expected: x.len(),
            found: g.len(),
        });
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(cfg.history_size);
    let mut trace = vec![TraceRow {
        iteration: 0,
        value: f,
        grad_inf_norm: inf_norm(&g),
        step: 0.0,
    }];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if inf_norm(&g) <= cfg.gradient_tolerance {
            termination = Termination::Converged;
            break;
        }

        let mut direction: Vec<f64> = two_loop_direction(&g, history.make_contiguous())
            .into_iter()
            .map(|v| -v)
            .collect();
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) || direction.iter().any(|v| !v.is_finite()) {
            history.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
        }
        let mut step = if history.is_empty() {
            1.0f64.min(1.0 / dot(&g, &g).sqrt())
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..cfg.max_line_search {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = objective(&trial);
            if ft.is_finite()
                && gt.iter().all(|v| v.is_finite())
                && ft <= f + cfg.armijo_c * step * slope
            {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-10 {
            if history.len() == cfg.history_size {
                history.pop_front();
            }
            history.push_back((s, y));
        }

        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        trace.push(TraceRow {
            iteration: iterations,
            value: f,
            grad_inf_norm: inf_norm(&g),
            step,
        });
    }
    if termination == Termination::MaxIterations && inf_norm(&g) <= cfg.gradient_tolerance {
        termination = Termination::Converged;
    }

    Ok(LbfgsResult {
        x,
        value: f,
        iterations,
        termination,
        trace,
    })
}
