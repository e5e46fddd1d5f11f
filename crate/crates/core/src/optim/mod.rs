//! Optimizers over flat parameter vectors.
//!
//! Every trainable model in the crate packs its parameters into a single
//! `Vec<f64>`, so one RMSProp stepper and one L-BFGS driver serve all of them,
//! and gradient checks go through the same [`finite_difference_gradient`].

mod finite_diff;
mod lbfgs;
mod rmsprop;

pub use finite_diff::{finite_difference_gradient, relative_error};
pub use lbfgs::{
    lbfgs_minimize, two_loop_direction, write_trace_csv, LbfgsConfig, LbfgsResult, Termination,
    TraceRow,
};
pub use rmsprop::{rmsprop_step, RmspropConfig};

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
