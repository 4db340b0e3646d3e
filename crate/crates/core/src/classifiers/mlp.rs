//! One-hidden-layer perceptron (tanh, softmax output) trained by full-batch
//! gradient descent on the mean cross-entropy.
//!
//! Flat parameter layout: `W1` (hidden x F, row-major), `b1`, `W2` (3 x hidden,
//! row-major), `b2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{softmax3, Standardizer, TrainConfig};
use crate::data::{Simplex3, N_CLASSES};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
}

impl MlpShape {
    pub fn n_params(self) -> usize {
        self.hidden * self.inputs + self.hidden + N_CLASSES * self.hidden + N_CLASSES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    shape: MlpShape,
    params: Vec<f64>,
    scaler: Standardizer,
}

struct Layers {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

fn unpack(params: &[f64], shape: MlpShape) -> Layers {
    let (f, h) = (shape.inputs, shape.hidden);
    let mut off = 0;
    let mut take = |len: usize| {
        let s = &params[off..off + len];
        off += len;
        s
    };
    Layers {
        w1: DMatrix::from_row_slice(h, f, take(h * f)),
        b1: DVector::from_column_slice(take(h)),
        w2: DMatrix::from_row_slice(N_CLASSES, h, take(N_CLASSES * h)),
        b2: DVector::from_column_slice(take(N_CLASSES)),
    }
}

fn hidden_activations(l: &Layers, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = x * l.w1.transpose();
    for mut row in a.row_iter_mut() {
        for (v, b) in row.iter_mut().zip(l.b1.iter()) {
            *v = (*v + b).tanh();
        }
    }
    a
}

fn output_probs(l: &Layers, hidden: &DMatrix<f64>) -> Vec<Simplex3> {
    let logits = hidden * l.w2.transpose();
    logits
        .row_iter()
        .map(|r| softmax3(std::array::from_fn(|c| r[c] + l.b2[c])))
        .collect()
}

/// Mean cross-entropy and its gradient by backpropagation.
pub fn loss_grad(params: &[f64], shape: MlpShape, x: &DMatrix<f64>, y: &[u8]) -> (f64, Vec<f64>) {
    let n = x.nrows();
    let l = unpack(params, shape);
    let hidden = hidden_activations(&l, x);
    let probs = output_probs(&l, &hidden);
    let mut loss = 0.0;
    let mut d_logits = DMatrix::<f64>::zeros(n, N_CLASSES);
    for (i, p) in probs.iter().enumerate() {
        let yi = y[i] as usize;
        loss -= p.get(yi).max(f64::MIN_POSITIVE).ln();
        for c in 0..N_CLASSES {
            d_logits[(i, c)] = (p.get(c) - f64::from(u8::from(c == yi))) / n as f64;
        }
    }
    loss /= n as f64;

    let g_w2 = d_logits.transpose() * &hidden;
    let g_b2 = d_logits.row_sum();
    let mut d_hidden = &d_logits * &l.w2;
    d_hidden.zip_apply(&hidden, |d, h| *d *= 1.0 - h * h);
    let g_w1 = d_hidden.transpose() * x;
    let g_b1 = d_hidden.row_sum();

    let mut grad = Vec::with_capacity(shape.n_params());
    grad.extend(g_w1.transpose().iter());
    grad.extend(g_b1.iter());
    grad.extend(g_w2.transpose().iter());
    grad.extend(g_b2.iter());
    (loss, grad)
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(shape: MlpShape, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Init);
    let (f, h) = (shape.inputs, shape.hidden);
    let mut params = Vec::with_capacity(shape.n_params());
    let lim1 = (6.0 / (f + h) as f64).sqrt();
    params.extend((0..h * f).map(|_| rng.random_range(-lim1..lim1)));
    params.extend(std::iter::repeat_n(0.0, h));
    let lim2 = (6.0 / (h + N_CLASSES) as f64).sqrt();
    params.extend((0..N_CLASSES * h).map(|_| rng.random_range(-lim2..lim2)));
    params.extend(std::iter::repeat_n(0.0, N_CLASSES));
    params
}

pub fn fit(x: &DMatrix<f64>, y: &[u8], config: &TrainConfig) -> MlpModel {
    let scaler = Standardizer::fit(x, &config.standardize_columns);
    let xs = scaler.apply_matrix(x);
    let shape = MlpShape {
        inputs: x.ncols(),
        hidden: config.mlp_hidden,
    };
    let mut params = init_params(shape, config.seed);
    for _ in 0..config.mlp_epochs {
        let (_, grad) = loss_grad(&params, shape, &xs, y);
        params
            .iter_mut()
            .zip(&grad)
            .for_each(|(p, g)| *p -= config.mlp_step * g);
    }
    MlpModel {
        shape,
        params,
        scaler,
    }
}

impl MlpModel {
    pub fn predict_proba(&self, x: &[f64]) -> Simplex3 {
        let mut q = x.to_vec();
        self.scaler.apply(&mut q);
        let l = unpack(&self.params, self.shape);
        let row = DMatrix::from_row_slice(1, q.len(), &q);
        output_probs(&l, &hidden_activations(&l, &row))[0]
    }
}
