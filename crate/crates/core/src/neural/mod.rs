//! A small recurrent regressor written from scratch.
//!
//! Layout: one LSTM layer with 10 units over 13 inputs, then dense layers of
//! 5 and 3 ReLU units and a single linear output. Gate weights are stacked
//! gate-major in the order input, forget, output, candidate, so row
//! `k * HIDDEN + j` of `w_input` feeds unit `j` of gate `k`.

pub mod adam;
pub mod io;
pub mod train;

use rand::Rng;
use thiserror::Error;

use crate::features::{NormStats, NUM_INPUTS};

pub use adam::{adam_step, AdamState};
pub use io::{load_model, model_from_str, model_to_string, save_model};
pub use train::{
    samples_from_records, train, train_with_progress, Sample, TrainConfig, TrainReport,
};

pub const INPUTS: usize = NUM_INPUTS;
pub const HIDDEN: usize = 10;
pub const GATES: usize = 4;
/// Output sizes of the dense stack.
pub const DENSE_SIZES: [usize; 3] = [5, 3, 1];

const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_O: usize = 2;
const GATE_G: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("window length {got} does not match sequence length {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
}

fn shape_err(what: &'static str, expected: usize, got: usize) -> ModelError {
    ModelError::Shape {
        what,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn glorot<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `GATES * HIDDEN` x `INPUTS`.
    pub w_input: Matrix,
    /// `GATES * HIDDEN` x `HIDDEN`.
    pub w_recurrent: Matrix,
    /// `GATES * HIDDEN`.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// outputs x inputs.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Trainable tensors; also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub lstm: LstmParams,
    pub dense: Vec<DenseParams>,
}

impl Weights {
    pub fn zeros() -> Self {
        let mut inputs = HIDDEN;
        let dense = DENSE_SIZES
            .iter()
            .map(|&out| {
                let d = DenseParams {
                    weights: Matrix::zeros(out, inputs),
                    bias: vec![0.0; out],
                };
                inputs = out;
                d
            })
            .collect();
        Weights {
            lstm: LstmParams {
                w_input: Matrix::zeros(GATES * HIDDEN, INPUTS),
                w_recurrent: Matrix::zeros(GATES * HIDDEN, HIDDEN),
                bias: vec![0.0; GATES * HIDDEN],
            },
            dense,
        }
    }

    /// Glorot-uniform weights per gate block and layer, zero biases, forget bias 1.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut w = Weights::zeros();
        for gate in 0..GATES {
            let block = Matrix::glorot(HIDDEN, INPUTS, INPUTS, HIDDEN, rng);
            w.lstm.w_input.data[gate * HIDDEN * INPUTS..(gate + 1) * HIDDEN * INPUTS]
                .copy_from_slice(&block.data);
            let block = Matrix::glorot(HIDDEN, HIDDEN, HIDDEN, HIDDEN, rng);
            w.lstm.w_recurrent.data[gate * HIDDEN * HIDDEN..(gate + 1) * HIDDEN * HIDDEN]
                .copy_from_slice(&block.data);
        }
        for j in 0..HIDDEN {
            w.lstm.bias[GATE_F * HIDDEN + j] = 1.0;
        }
        for layer in &mut w.dense {
            let (rows, cols) = (layer.weights.rows, layer.weights.cols);
            layer.weights = Matrix::glorot(rows, cols, cols, rows, rng);
        }
        w
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            &self.lstm.w_input.data,
            &self.lstm.w_recurrent.data,
            &self.lstm.bias,
        ];
        for d in &self.dense {
            out.push(&d.weights.data);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.lstm.w_input.data,
            &mut self.lstm.w_recurrent.data,
            &mut self.lstm.bias,
        ];
        for d in &mut self.dense {
            out.push(&mut d.weights.data);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let l = &self.lstm;
        if (l.w_input.rows, l.w_input.cols) != (GATES * HIDDEN, INPUTS) {
            return Err(ModelError::Shape {
                what: "LSTM input weights",
                expected: format!("{}x{}", GATES * HIDDEN, INPUTS),
                got: format!("{}x{}", l.w_input.rows, l.w_input.cols),
            });
        }
        if (l.w_recurrent.rows, l.w_recurrent.cols) != (GATES * HIDDEN, HIDDEN) {
            return Err(ModelError::Shape {
                what: "LSTM recurrent weights",
                expected: format!("{}x{}", GATES * HIDDEN, HIDDEN),
                got: format!("{}x{}", l.w_recurrent.rows, l.w_recurrent.cols),
            });
        }
        if l.bias.len() != GATES * HIDDEN {
            return Err(shape_err("LSTM bias", GATES * HIDDEN, l.bias.len()));
        }
        if self.dense.len() != DENSE_SIZES.len() {
            return Err(shape_err(
                "dense layer count",
                DENSE_SIZES.len(),
                self.dense.len(),
            ));
        }
        let mut inputs = HIDDEN;
        for (d, &out) in self.dense.iter().zip(&DENSE_SIZES) {
            if (d.weights.rows, d.weights.cols) != (out, inputs) {
                return Err(ModelError::Shape {
                    what: "dense weights",
                    expected: format!("{out}x{inputs}"),
                    got: format!("{}x{}", d.weights.rows, d.weights.cols),
                });
            }
            if d.bias.len() != out {
                return Err(shape_err("dense bias", out, d.bias.len()));
            }
            inputs = out;
        }
        Ok(())
    }
}

/// A trained model: weights, the normalization it was trained with and its
/// input window length.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Weights,
    pub norm: NormStats,
    pub seq_len: usize,
}

impl ModelParams {
    pub fn new(weights: Weights, norm: NormStats, seq_len: usize) -> Self {
        ModelParams {
            weights,
            norm,
            seq_len,
        }
    }

    pub fn zeros(norm: NormStats, seq_len: usize) -> Self {
        Self::new(Weights::zeros(), norm, seq_len)
    }
}

type Vec10 = [f64; HIDDEN];

/// Activations of one LSTM step kept for backpropagation.
#[derive(Debug, Clone)]
struct StepCache {
    x: [f64; INPUTS],
    h_prev: Vec10,
    c_prev: Vec10,
    gates: [Vec10; GATES],
    c: Vec10,
    tanh_c: Vec10,
}

fn step_cached(p: &LstmParams, x: &[f64; INPUTS], h: &Vec10, c: &Vec10) -> StepCache {
    let mut gates = [[0.0; HIDDEN]; GATES];
    for (k, gate) in gates.iter_mut().enumerate() {
        for (j, out) in gate.iter_mut().enumerate() {
            let row = k * HIDDEN + j;
            let z = dot(p.w_input.row(row), x) + dot(p.w_recurrent.row(row), h) + p.bias[row];
            *out = if k == GATE_G { z.tanh() } else { sigmoid(z) };
        }
    }
    let mut c_new = [0.0; HIDDEN];
    let mut tanh_c = [0.0; HIDDEN];
    for j in 0..HIDDEN {
        c_new[j] = gates[GATE_F][j] * c[j] + gates[GATE_I][j] * gates[GATE_G][j];
        tanh_c[j] = c_new[j].tanh();
    }
    StepCache {
        x: *x,
        h_prev: *h,
        c_prev: *c,
        gates,
        c: c_new,
        tanh_c,
    }
}

impl StepCache {
    fn h(&self) -> Vec10 {
        let mut h = [0.0; HIDDEN];
        for (j, v) in h.iter_mut().enumerate() {
            *v = self.gates[GATE_O][j] * self.tanh_c[j];
        }
        h
    }
}

/// One LSTM cell update: returns `(h', c')`.
pub fn lstm_step(
    params: &LstmParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let x: &[f64; INPUTS] = x
        .try_into()
        .map_err(|_| shape_err("input", INPUTS, x.len()))?;
    let h: &Vec10 = h
        .try_into()
        .map_err(|_| shape_err("hidden state", HIDDEN, h.len()))?;
    let c: &Vec10 = c
        .try_into()
        .map_err(|_| shape_err("cell state", HIDDEN, c.len()))?;
    let cache = step_cached(params, x, h, c);
    Ok((cache.h().to_vec(), cache.c.to_vec()))
}

/// Dense-stack activations for one sample.
#[derive(Debug, Clone)]
struct HeadCache {
    input: Vec10,
    acts: Vec<Vec<f64>>,
}

fn head_forward(dense: &[DenseParams], h: &Vec10) -> (f64, HeadCache) {
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(dense.len());
    let last = dense.len() - 1;
    for (l, layer) in dense.iter().enumerate() {
        let input: &[f64] = if l == 0 { h } else { &acts[l - 1] };
        let out: Vec<f64> = (0..layer.weights.rows)
            .map(|r| {
                let z = dot(layer.weights.row(r), input) + layer.bias[r];
                if l == last {
                    z
                } else {
                    z.max(0.0)
                }
            })
            .collect();
        acts.push(out);
    }
    let y = acts[last][0];
    (y, HeadCache { input: *h, acts })
}

struct ForwardCache {
    steps: Vec<StepCache>,
    head: HeadCache,
    y: f64,
}

fn forward_cached(w: &Weights, window: &[[f64; INPUTS]]) -> ForwardCache {
    let mut h = [0.0; HIDDEN];
    let mut c = [0.0; HIDDEN];
    let mut steps = Vec::with_capacity(window.len());
    for x in window {
        let cache = step_cached(&w.lstm, x, &h, &c);
        h = cache.h();
        c = cache.c;
        steps.push(cache);
    }
    let (y, head) = head_forward(&w.dense, &h);
    ForwardCache { steps, head, y }
}

/// Normalized prediction for a window of normalized input vectors.
pub fn forward(params: &ModelParams, window: &[[f64; INPUTS]]) -> Result<f64, ModelError> {
    if window.len() != params.seq_len {
        return Err(ModelError::WindowLength {
            expected: params.seq_len,
            got: window.len(),
        });
    }
    Ok(forward_weights(&params.weights, window))
}

pub(crate) fn forward_weights(w: &Weights, window: &[[f64; INPUTS]]) -> f64 {
    forward_cached(w, window).y
}

/// Accumulate `scale * d(output)/d(weights)` into `grads`.
fn backprop(w: &Weights, cache: &ForwardCache, dy: f64, grads: &mut Weights) {
    // dense head, last layer first
    let layers = w.dense.len();
    let mut delta = vec![dy];
    for l in (0..layers).rev() {
        let input: &[f64] = if l == 0 {
            &cache.head.input
        } else {
            &cache.head.acts[l - 1]
        };
        let layer = &w.dense[l];
        let g = &mut grads.dense[l];
        for (r, d) in delta.iter().enumerate() {
            g.bias[r] += d;
            let row = &mut g.weights.data[r * layer.weights.cols..(r + 1) * layer.weights.cols];
            for (gw, x) in row.iter_mut().zip(input) {
                *gw += d * x;
            }
        }
        let mut prev = vec![0.0; layer.weights.cols];
        for (r, d) in delta.iter().enumerate() {
            for (p, wv) in prev.iter_mut().zip(layer.weights.row(r)) {
                *p += d * wv;
            }
        }
        if l > 0 {
            for (p, a) in prev.iter_mut().zip(&cache.head.acts[l - 1]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev;
    }

    // back through time
    let mut dh: Vec10 = delta.try_into().expect("lstm width");
    let mut dc = [0.0; HIDDEN];
    let gl = &mut grads.lstm;
    for step in cache.steps.iter().rev() {
        let [gi, gf, go, gg] = &step.gates;
        let mut dz = [[0.0; HIDDEN]; GATES];
        for j in 0..HIDDEN {
            let dout = dh[j] * step.tanh_c[j];
            dc[j] += dh[j] * go[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
            let di = dc[j] * gg[j];
            let dg = dc[j] * gi[j];
            let df = dc[j] * step.c_prev[j];
            dz[GATE_I][j] = di * gi[j] * (1.0 - gi[j]);
            dz[GATE_F][j] = df * gf[j] * (1.0 - gf[j]);
            dz[GATE_O][j] = dout * go[j] * (1.0 - go[j]);
            dz[GATE_G][j] = dg * (1.0 - gg[j] * gg[j]);
            dc[j] *= gf[j];
        }
        let mut dh_prev = [0.0; HIDDEN];
        for (k, dzk) in dz.iter().enumerate() {
            for (j, &d) in dzk.iter().enumerate() {
                let row = k * HIDDEN + j;
                gl.bias[row] += d;
                let wi = &mut gl.w_input.data[row * INPUTS..(row + 1) * INPUTS];
                for (g, x) in wi.iter_mut().zip(&step.x) {
                    *g += d * x;
                }
                let wr = &mut gl.w_recurrent.data[row * HIDDEN..(row + 1) * HIDDEN];
                for (g, h) in wr.iter_mut().zip(&step.h_prev) {
                    *g += d * h;
                }
                for (dp, wv) in dh_prev.iter_mut().zip(w.lstm.w_recurrent.row(row)) {
                    *dp += d * wv;
                }
            }
        }
        dh = dh_prev;
    }
}

/// Gradients of the batch mean squared error, and that error.
pub fn backward(w: &Weights, batch: &[(&[[f64; INPUTS]], f64)]) -> (Weights, f64) {
    let mut grads = Weights::zeros();
    let mse = backward_into(w, batch, &mut grads);
    (grads, mse)
}

pub(crate) fn backward_into(
    w: &Weights,
    batch: &[(&[[f64; INPUTS]], f64)],
    grads: &mut Weights,
) -> f64 {
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
    if batch.is_empty() {
        return 0.0;
    }
    let n = batch.len() as f64;
    let mut sse = 0.0;
    for (window, target) in batch {
        let cache = forward_cached(w, window);
        let err = cache.y - target;
        sse += err * err;
        backprop(w, &cache, 2.0 * err / n, grads);
    }
    sse / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_weights(seed: u64, scale: f64) -> Weights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Weights::zeros();
        for t in w.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.gen_range(-scale..scale);
            }
        }
        w
    }

    fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Vec<[f64; INPUTS]> {
        (0..len)
            .map(|_| {
                let mut x = [0.0; INPUTS];
                for v in &mut x {
                    *v = rng.gen_range(0.0..1.0);
                }
                x
            })
            .collect()
    }

    /// Straightforward per-gate LSTM cell, independent of the stacked layout
    /// helpers above.
    fn reference_step(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pre = |gate: usize, j: usize| {
            let row = gate * HIDDEN + j;
            let mut z = p.bias[row];
            for k in 0..INPUTS {
                z += p.w_input.data[row * INPUTS + k] * x[k];
            }
            for k in 0..HIDDEN {
                z += p.w_recurrent.data[row * HIDDEN + k] * h[k];
            }
            z
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut h2 = vec![0.0; HIDDEN];
        let mut c2 = vec![0.0; HIDDEN];
        for j in 0..HIDDEN {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let o = sig(pre(2, j));
            let g = pre(3, j).tanh();
            c2[j] = f * c[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn zero_weights_give_zero_hidden_state() {
        let w = Weights::zeros();
        let (h, c) = lstm_step(&w.lstm, &[0.7; INPUTS], &[0.0; HIDDEN], &[0.0; HIDDEN]).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let w = Weights::zeros();
        assert!(lstm_step(&w.lstm, &[0.0; 12], &[0.0; HIDDEN], &[0.0; HIDDEN]).is_err());
        assert!(lstm_step(&w.lstm, &[0.0; INPUTS], &[0.0; 9], &[0.0; HIDDEN]).is_err());
    }

    #[test]
    fn step_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..10 {
            let w = random_weights(seed, 1.0);
            let x: Vec<f64> = (0..INPUTS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..HIDDEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..HIDDEN).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (h1, c1) = lstm_step(&w.lstm, &x, &h, &c).unwrap();
            let (h2, c2) = reference_step(&w.lstm, &x, &h, &c);
            for j in 0..HIDDEN {
                assert!((h1[j] - h2[j]).abs() < 1e-12);
                assert!((c1[j] - c2[j]).abs() < 1e-12);
                assert!(h1[j].abs() < 1.0);
            }
        }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = ModelParams::zeros(NormStats::default(), 1);
        assert_eq!(forward(&m, &[[0.3; INPUTS]]).unwrap(), 0.0);
        assert!(matches!(
            forward(&m, &[[0.3; INPUTS], [0.3; INPUTS]]),
            Err(ModelError::WindowLength { .. })
        ));
    }

    #[test]
    fn constant_head_returns_bias() {
        let mut m = ModelParams::new(random_weights(3, 0.5), NormStats::default(), 1);
        m.weights.dense[2].weights.data.fill(0.0);
        m.weights.dense[2].bias[0] = 0.42;
        assert_eq!(forward(&m, &[[0.9; INPUTS]]).unwrap(), 0.42);
    }

    #[test]
    fn head_is_linear_in_last_layer() {
        let mut m = ModelParams::new(random_weights(4, 0.5), NormStats::default(), 1);
        let x = [[0.25; INPUTS]];
        let y = forward(&m, &x).unwrap();
        for v in m.weights.dense[2].weights.data.iter_mut() {
            *v *= 2.0;
        }
        m.weights.dense[2].bias[0] *= 2.0;
        let y2 = forward(&m, &x).unwrap();
        assert!((y2 - 2.0 * y).abs() < 1e-12);
    }

    fn loss(w: &Weights, batch: &[(&[[f64; INPUTS]], f64)]) -> f64 {
        batch
            .iter()
            .map(|(x, t)| (forward_weights(w, x) - t).powi(2))
            .sum::<f64>()
            / batch.len() as f64
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for draw in 0..20 {
            let w = random_weights(100 + draw, 0.8);
            let windows: Vec<Vec<[f64; INPUTS]>> =
                (0..3).map(|_| random_window(&mut rng, 3)).collect();
            let batch: Vec<(&[[f64; INPUTS]], f64)> = windows
                .iter()
                .map(|x| (x.as_slice(), rng.gen_range(0.0..1.0)))
                .collect();
            let (grads, mse) = backward(&w, &batch);
            assert!((mse - loss(&w, &batch)).abs() < 1e-12);
            let analytic = grads.to_flat();
            let base = w.to_flat();
            let mut probe = w.clone();
            let step = 1e-5;
            for i in 0..base.len() {
                let mut p = base.clone();
                p[i] += step;
                probe.set_flat(&p);
                let up = loss(&probe, &batch);
                p[i] -= 2.0 * step;
                probe.set_flat(&p);
                let down = loss(&probe, &batch);
                let numeric = (up - down) / (2.0 * step);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-7);
                assert!(
                    (analytic[i] - numeric).abs() / denom < 1e-4,
                    "param {i}: analytic {} numeric {numeric}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let w = random_weights(7, 0.6);
        let x = vec![[0.5; INPUTS]];
        let y = forward_weights(&w, &x);
        let (grads, mse) = backward(&w, &[(&x, y)]);
        assert_eq!(mse, 0.0);
        assert!(grads.to_flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn duplicated_sample_has_same_gradient() {
        let w = random_weights(8, 0.6);
        let x = vec![[0.3; INPUTS]];
        let (single, _) = backward(&w, &[(&x, 0.9)]);
        let dup: Vec<(&[[f64; INPUTS]], f64)> = (0..5).map(|_| (x.as_slice(), 0.9)).collect();
        let (many, _) = backward(&w, &dup);
        for (a, b) in single.to_flat().iter().zip(many.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_finite_on_unit_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..50 {
            let w = random_weights(seed, 3.0);
            let x = random_window(&mut rng, 4);
            assert!(forward_weights(&w, &x).is_finite());
        }
    }

    #[test]
    fn init_shapes_and_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Weights::init(&mut rng);
        w.check_shapes().unwrap();
        assert_eq!(
            w.num_params(),
            40 * 13 + 40 * 10 + 40 + 5 * 10 + 5 + 3 * 5 + 3 + 3 + 1
        );
        assert!(w.lstm.bias[HIDDEN..2 * HIDDEN].iter().all(|b| *b == 1.0));
        let bound = (6.0f64 / 23.0).sqrt();
        assert!(w.lstm.w_input.data.iter().all(|v| v.abs() <= bound));
    }
}
