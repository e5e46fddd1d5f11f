use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, clamped, dot, from_blocks, to_blocks, train_rmsprop, uniform_fill, FrameDataset, FrameModel, ParamBlock};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::optim::RmspropConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstmDims {
    pub input_dim: usize,
    pub hidden: usize,
    pub head_units: usize,
    pub window_radius: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Gate blocks are stacked in the order input, forget, cell candidate, output.
pub struct LstmCellParams<'a> {
    /// `4H x d`, row-major.
    pub input_weights: &'a [f64],
    /// `4H x H`, row-major.
    pub recurrent_weights: &'a [f64],
    /// `4H`.
    pub bias: &'a [f64],
}

impl BiLstmDims {
    pub fn new(input_dim: usize, hidden: usize, head_units: usize, window_radius: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || head_units == 0 {
            return Err(Error::invalid("BiLSTM dimensions must be positive"));
        }
        Ok(BiLstmDims {
            input_dim,
            hidden,
            head_units,
            window_radius,
        })
    }

    pub fn window_len(&self) -> usize {
        2 * self.window_radius + 1
    }

    fn cell_len(&self) -> usize {
        let g = 4 * self.hidden;
        g * self.input_dim + g * self.hidden + g
    }

    pub fn cell_range(&self, dir: Direction) -> Range<usize> {
        let start = match dir {
            Direction::Forward => 0,
            Direction::Backward => self.cell_len(),
        };
        start..start + self.cell_len()
    }

    fn head_w(&self) -> usize {
        2 * self.cell_len()
    }

    fn head_b(&self) -> usize {
        self.head_w() + self.head_units * 2 * self.hidden
    }

    fn out_w(&self) -> usize {
        self.head_b() + self.head_units
    }

    pub fn out_bias_index(&self) -> usize {
        self.out_w() + self.head_units
    }

    pub fn param_len(&self) -> usize {
        self.out_bias_index() + 1
    }

    fn block_specs(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (d, h, m) = (self.input_dim, self.hidden, self.head_units);
        vec![
            ("forward.input_weights", vec![4 * h, d]),
            ("forward.recurrent_weights", vec![4 * h, h]),
            ("forward.bias", vec![4 * h]),
            ("backward.input_weights", vec![4 * h, d]),
            ("backward.recurrent_weights", vec![4 * h, h]),
            ("backward.bias", vec![4 * h]),
            ("head.weights", vec![m, 2 * h]),
            ("head.bias", vec![m]),
            ("out.weights", vec![m]),
            ("out.bias", vec![1]),
        ]
    }
}

/// Bidirectional LSTM window regressor with a ReLU head and scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmRegressor {
    dims: BiLstmDims,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BiLstmJson {
    kind: String,
    dims: BiLstmDims,
    blocks: Vec<ParamBlock>,
}

const KIND: &str = "bilstm";

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Activations of one cell over a window, kept for backpropagation.
struct CellTrace {
    /// `(steps + 1) x H`, starting with the zero state.
    h: Vec<f64>,
    c: Vec<f64>,
    /// `steps x 4H` activated gates.
    gates: Vec<f64>,
    /// `steps x H`, `tanh(c_t)`.
    tanh_c: Vec<f64>,
}

impl BiLstmRegressor {
    pub fn zeros(dims: BiLstmDims) -> Self {
        BiLstmRegressor {
            params: vec![0.0; dims.param_len()],
            dims,
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero except the forget
    /// gate bias, which starts at 1.
    pub fn new(dims: BiLstmDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(dims);
        let (d, h, mu) = (dims.input_dim, dims.hidden, dims.head_units);
        for dir in [Direction::Forward, Direction::Backward] {
            let r = dims.cell_range(dir);
            let cell = &mut m.params[r];
            let (w, rest) = cell.split_at_mut(4 * h * d);
            let (u, b) = rest.split_at_mut(4 * h * h);
            uniform_fill(w, 1.0 / (d as f64).sqrt(), &mut rng);
            uniform_fill(u, 1.0 / (h as f64).sqrt(), &mut rng);
            b[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        }
        let (hw, hb, ow) = (dims.head_w(), dims.head_b(), dims.out_w());
        uniform_fill(&mut m.params[hw..hb], 1.0 / ((2 * h) as f64).sqrt(), &mut rng);
        uniform_fill(&mut m.params[ow..ow + mu], 1.0 / (mu as f64).sqrt(), &mut rng);
        m
    }

    pub fn from_params(dims: BiLstmDims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.param_len() {
            return Err(Error::Shape {
                expected: dims.param_len(),
                found: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("BiLSTM parameters".into()));
        }
        Ok(BiLstmRegressor { dims, params })
    }

    pub fn dims(&self) -> BiLstmDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn cell(&self, dir: Direction) -> LstmCellParams<'_> {
        let (d, h) = (self.dims.input_dim, self.dims.hidden);
        let cell = &self.params[self.dims.cell_range(dir)];
        let (w, rest) = cell.split_at(4 * h * d);
        let (u, b) = rest.split_at(4 * h * h);
        LstmCellParams {
            input_weights: w,
            recurrent_weights: u,
            bias: b,
        }
    }

    fn check_window(&self, window: &[Vec<f64>]) -> Result<()> {
        if window.len() != self.dims.window_len() {
            return Err(Error::Shape {
                expected: self.dims.window_len(),
                found: window.len(),
            });
        }
        if let Some(f) = window.iter().find(|f| f.len() != self.dims.input_dim) {
            return Err(Error::Shape {
                expected: self.dims.input_dim,
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Score of one window: the forward cell reads rows first to last, the
    /// backward cell last to first, and their final hidden states feed the head.
    pub fn forward_window(&self, window: &[Vec<f64>]) -> Result<f64> {
        self.check_window(window)?;
        let rows: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
        Ok(self.score(&rows))
    }

    /// Clamped score for every frame, using centered windows with the first
    /// and last frames replicated past the sequence ends.
    pub fn predict_sequence(&self, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        if frames.is_empty() {
            return Err(Error::invalid("cannot predict an empty sequence"));
        }
        if let Some(f) = frames.iter().find(|f| f.len() != self.dims.input_dim) {
            return Err(Error::Shape {
                expected: self.dims.input_dim,
                found: f.len(),
            });
        }
        Ok((0..frames.len())
            .map(|t| self.score(&self.window_rows(frames, t)).clamp(0.0, 1.0))
            .collect())
    }

    /// Mean squared error over `(window, target)` pairs and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(Vec<Vec<f64>>, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (window, target) in batch {
            self.check_window(window)?;
            let rows: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
            loss += self.backprop(&rows, *target, scale, &mut grad);
        }
        Ok((loss * scale, grad))
    }

    fn window_rows<'a>(&self, frames: &'a [Vec<f64>], center: usize) -> Vec<&'a [f64]> {
        let r = self.dims.window_radius as isize;
        (-r..=r)
            .map(|o| frames[clamped(center, o, frames.len())].as_slice())
            .collect()
    }

    fn run_cell(&self, dir: Direction, rows: &[&[f64]]) -> CellTrace {
        let (d, h) = (self.dims.input_dim, self.dims.hidden);
        let cell = self.cell(dir);
        let steps = rows.len();
        let mut tr = CellTrace {
            h: vec![0.0; (steps + 1) * h],
            c: vec![0.0; (steps + 1) * h],
            gates: vec![0.0; steps * 4 * h],
            tanh_c: vec![0.0; steps * h],
        };
        for s in 0..steps {
            let x = match dir {
                Direction::Forward => rows[s],
                Direction::Backward => rows[steps - 1 - s],
            };
            let (h_prev, h_next) = tr.h.split_at_mut((s + 1) * h);
            let h_prev = &h_prev[s * h..];
            let gates = &mut tr.gates[s * 4 * h..(s + 1) * 4 * h];
            for (r, g) in gates.iter_mut().enumerate() {
                let z = cell.bias[r]
                    + dot(&cell.input_weights[r * d..(r + 1) * d], x)
                    + dot(&cell.recurrent_weights[r * h..(r + 1) * h], h_prev);
                *g = if (2 * h..3 * h).contains(&r) { z.tanh() } else { sigmoid(z) };
            }
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let c = f * tr.c[s * h + j] + i * g;
                let tc = c.tanh();
                tr.c[(s + 1) * h + j] = c;
                tr.tanh_c[s * h + j] = tc;
                h_next[j] = o * tc;
            }
        }
        tr
    }

    fn head_input(&self, fwd: &CellTrace, bwd: &CellTrace, steps: usize) -> Vec<f64> {
        let h = self.dims.hidden;
        let mut cat = Vec::with_capacity(2 * h);
        cat.extend_from_slice(&fwd.h[steps * h..]);
        cat.extend_from_slice(&bwd.h[steps * h..]);
        cat
    }

    fn head(&self, cat: &[f64]) -> (Vec<f64>, f64) {
        let (h2, m) = (2 * self.dims.hidden, self.dims.head_units);
        let (hw, hb, ow) = (self.dims.head_w(), self.dims.head_b(), self.dims.out_w());
        let pre: Vec<f64> = (0..m)
            .map(|k| self.params[hb + k] + dot(&self.params[hw + k * h2..hw + (k + 1) * h2], cat))
            .collect();
        let act: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        let y = self.params[self.dims.out_bias_index()] + dot(&self.params[ow..ow + m], &act);
        (pre, y)
    }

    fn score(&self, rows: &[&[f64]]) -> f64 {
        let fwd = self.run_cell(Direction::Forward, rows);
        let bwd = self.run_cell(Direction::Backward, rows);
        self.head(&self.head_input(&fwd, &bwd, rows.len())).1
    }

    /// Adds `scale * d(y - target)^2 / d(params)` to `grad`; returns the squared error.
    fn backprop(&self, rows: &[&[f64]], target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let (h, m) = (self.dims.hidden, self.dims.head_units);
        let steps = rows.len();
        let fwd = self.run_cell(Direction::Forward, rows);
        let bwd = self.run_cell(Direction::Backward, rows);
        let cat = self.head_input(&fwd, &bwd, steps);
        let (pre, y) = self.head(&cat);
        let err = y - target;
        let dy = 2.0 * err * scale;

        let (hw, hb, ow) = (self.dims.head_w(), self.dims.head_b(), self.dims.out_w());
        grad[self.dims.out_bias_index()] += dy;
        let mut dcat = vec![0.0; 2 * h];
        for k in 0..m {
            if pre[k] <= 0.0 {
                continue;
            }
            grad[ow + k] += dy * pre[k];
            let da = dy * self.params[ow + k];
            grad[hb + k] += da;
            let row = hw + k * 2 * h..hw + (k + 1) * 2 * h;
            axpy(da, &cat, &mut grad[row.clone()]);
            axpy(da, &self.params[row], &mut dcat);
        }
        self.backprop_cell(Direction::Forward, rows, &fwd, &dcat[..h], grad);
        self.backprop_cell(Direction::Backward, rows, &bwd, &dcat[h..], grad);
        err * err
    }

    fn backprop_cell(&self, dir: Direction, rows: &[&[f64]], tr: &CellTrace, dh_last: &[f64], grad: &mut [f64]) {
        let (d, h) = (self.dims.input_dim, self.dims.hidden);
        let steps = rows.len();
        let cell = self.cell(dir);
        let base = self.dims.cell_range(dir).start;
        let (gw, gu, gb) = (base, base + 4 * h * d, base + 4 * h * d + 4 * h * h);

        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for s in (0..steps).rev() {
            let x = match dir {
                Direction::Forward => rows[s],
                Direction::Backward => rows[steps - 1 - s],
            };
            let gates = &tr.gates[s * 4 * h..(s + 1) * 4 * h];
            let h_prev = &tr.h[s * h..(s + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = tr.tanh_c[s * h + j];
                let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[j] = dct * g * i * (1.0 - i);
                dz[h + j] = dct * tr.c[s * h + j] * f * (1.0 - f);
                dz[2 * h + j] = dct * i * (1.0 - g * g);
                dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
                dc[j] = dct * f;
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &z) in dz.iter().enumerate() {
                if z == 0.0 {
                    continue;
                }
                axpy(z, x, &mut grad[gw + r * d..gw + (r + 1) * d]);
                axpy(z, h_prev, &mut grad[gu + r * h..gu + (r + 1) * h]);
                grad[gb + r] += z;
                axpy(z, &cell.recurrent_weights[r * h..(r + 1) * h], &mut dh);
            }
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &BiLstmJson {
                kind: KIND.into(),
                dims: self.dims,
                blocks: to_blocks(&self.dims.block_specs(), &self.params),
            },
        )
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let doc: BiLstmJson = read_json(path)?;
        if doc.kind != KIND {
            return Err(Error::invalid(format!("{}: expected a {KIND} model, found {}", path.display(), doc.kind)));
        }
        let params = from_blocks(&doc.dims.block_specs(), &doc.blocks)?;
        Self::from_params(doc.dims, params)
    }
}

impl FrameModel for BiLstmRegressor {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn input_dim(&self) -> usize {
        self.dims.input_dim
    }

    fn accumulate(&self, frames: &[Vec<f64>], center: usize, target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        self.backprop(&self.window_rows(frames, center), target, scale, grad)
    }
}

/// Trains with mini-batch RMSProp on squared error; windows are centered on
/// each dataset item. Returns the model and the mean loss of every epoch.
pub fn train_regressor(
    mut model: BiLstmRegressor,
    data: &FrameDataset,
    cfg: &RmspropConfig,
    seed: u64,
) -> Result<(BiLstmRegressor, Vec<f64>)> {
    let history = train_rmsprop(&mut model, data, cfg, seed)?;
    Ok((model, history))
}
