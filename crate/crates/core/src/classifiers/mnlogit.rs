//! Multinomial logistic regression with an L2 penalty, fitted by damped
//! Newton iterations with Armijo backtracking (the loss never increases).
//!
//! Parameter layout: class-major, `[w_c (F values), b_c]` for c = 0, 1, 2.
//! The penalty covers intercepts as well, which keeps the Hessian positive
//! definite despite the softmax's shift invariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{softmax3, TrainConfig};
use crate::data::{Simplex3, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnLogitModel {
    /// One row of `F` coefficients per class.
    pub coef: Vec<Vec<f64>>,
    pub intercept: [f64; N_CLASSES],
}

impl MnLogitModel {
    pub fn zeros(f: usize) -> Self {
        MnLogitModel {
            coef: vec![vec![0.0; f]; N_CLASSES],
            intercept: [0.0; N_CLASSES],
        }
    }

    pub fn logits(&self, x: &[f64]) -> [f64; N_CLASSES] {
        std::array::from_fn(|c| {
            self.intercept[c] + self.coef[c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Simplex3 {
        softmax3(self.logits(x))
    }

    fn from_theta(theta: &[f64], f: usize) -> Self {
        let p = f + 1;
        MnLogitModel {
            coef: (0..N_CLASSES)
                .map(|c| theta[c * p..c * p + f].to_vec())
                .collect(),
            intercept: std::array::from_fn(|c| theta[c * p + f]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    /// Penalised mean cross-entropy at the start of every iteration.
    pub loss_trace: Vec<f64>,
}

fn class_probs(theta: &[f64], x: &DMatrix<f64>) -> Vec<[f64; N_CLASSES]> {
    let (n, f) = x.shape();
    let p = f + 1;
    (0..n)
        .map(|i| {
            let logits: [f64; N_CLASSES] = std::array::from_fn(|c| {
                let w = &theta[c * p..(c + 1) * p];
                w[f] + (0..f).map(|j| w[j] * x[(i, j)]).sum::<f64>()
            });
            softmax3(logits).probs()
        })
        .collect()
}

fn penalised_loss(
    theta: &[f64],
    x: &DMatrix<f64>,
    y: &[u8],
    lambda: f64,
) -> (f64, Vec<[f64; N_CLASSES]>) {
    let probs = class_probs(theta, x);
    let ce: f64 = probs
        .iter()
        .zip(y)
        .map(|(p, &yi)| -p[yi as usize].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / x.nrows() as f64;
    let penalty = 0.5 * lambda * theta.iter().map(|t| t * t).sum::<f64>();
    (ce + penalty, probs)
}

/// Penalised mean cross-entropy and its gradient.
pub fn loss_grad(theta: &[f64], x: &DMatrix<f64>, y: &[u8], lambda: f64) -> (f64, Vec<f64>) {
    let (loss, probs) = penalised_loss(theta, x, y, lambda);
    (loss, gradient(theta, x, y, lambda, &probs))
}

fn gradient(
    theta: &[f64],
    x: &DMatrix<f64>,
    y: &[u8],
    lambda: f64,
    probs: &[[f64; N_CLASSES]],
) -> Vec<f64> {
    let (n, f) = x.shape();
    let p = f + 1;
    let mut g = vec![0.0; N_CLASSES * p];
    for i in 0..n {
        for c in 0..N_CLASSES {
            let resid = probs[i][c] - f64::from(u8::from(y[i] as usize == c));
            for j in 0..f {
                g[c * p + j] += resid * x[(i, j)];
            }
            g[c * p + f] += resid;
        }
    }
    g.iter_mut()
        .zip(theta)
        .for_each(|(gi, t)| *gi = *gi / n as f64 + lambda * t);
    g
}

fn hessian(x: &DMatrix<f64>, probs: &[[f64; N_CLASSES]], lambda: f64) -> DMatrix<f64> {
    let (n, f) = x.shape();
    let p = f + 1;
    let dim = N_CLASSES * p;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut xt = vec![1.0; p];
    for i in 0..n {
        for j in 0..f {
            xt[j] = x[(i, j)];
        }
        let pr = &probs[i];
        for c in 0..N_CLASSES {
            for c2 in c..N_CLASSES {
                let s = if c == c2 {
                    pr[c] * (1.0 - pr[c])
                } else {
                    -pr[c] * pr[c2]
                };
                for a in 0..p {
                    let sa = s * xt[a];
                    for b in 0..p {
                        h[(c * p + a, c2 * p + b)] += sa * xt[b];
                    }
                }
            }
        }
    }
    for c in 0..N_CLASSES {
        for c2 in c + 1..N_CLASSES {
            for a in 0..p {
                for b in 0..p {
                    h[(c2 * p + b, c * p + a)] = h[(c * p + a, c2 * p + b)];
                }
            }
        }
    }
    h /= n as f64;
    for d in 0..dim {
        h[(d, d)] += lambda;
    }
    h
}

fn newton_direction(h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let rhs = -DVector::from_column_slice(g);
    let dim = g.len();
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut hj = h.clone();
        for d in 0..dim {
            hj[(d, d)] += jitter;
        }
        if let Some(chol) = hj.cholesky() {
            let dir = chol.solve(&rhs);
            if dir.iter().all(|v| v.is_finite()) {
                return dir.iter().copied().collect();
            }
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
    }
    rhs.iter().copied().collect()
}

pub fn fit(x: &DMatrix<f64>, y: &[u8], config: &TrainConfig) -> (MnLogitModel, FitReport) {
    let f = x.ncols();
    let lambda = config.mnlogit_lambda;
    let mut theta = vec![0.0; N_CLASSES * (f + 1)];
    let (mut loss, mut probs) = penalised_loss(&theta, x, y, lambda);
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        trace.push(loss);
        let g = gradient(&theta, x, y, lambda, &probs);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.tol {
            converged = true;
            break;
        }
        let dir = newton_direction(hessian(x, &probs, lambda), &g);
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (l, pr) = penalised_loss(&cand, x, y, lambda);
            if l <= loss + 1e-4 * step * slope {
                accepted = Some((cand, l, pr));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, l, pr)) => {
                let improvement = loss - l;
                theta = cand;
                loss = l;
                probs = pr;
                if improvement <= 1e-15 * loss.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            None => {
                // No decrease representable in floating point: at the optimum.
                converged = true;
                break;
            }
        }
    }
    let iterations = trace.len();
    (
        MnLogitModel::from_theta(&theta, f),
        FitReport {
            converged,
            iterations,
            loss_trace: trace,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform() {
        let m = MnLogitModel::zeros(3);
        let p = m.predict_proba(&[1.0, -2.0, 0.5]).probs();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn logit_shift_invariance() {
        let mut m = MnLogitModel {
            coef: vec![vec![0.3, -1.0], vec![2.0, 0.1], vec![-0.5, 0.7]],
            intercept: [0.1, -0.2, 0.4],
        };
        let x = [0.8, -1.5];
        let before = m.predict_proba(&x).probs();
        m.intercept.iter_mut().for_each(|b| *b += 123.0);
        let after = m.predict_proba(&x).probs();
        for c in 0..3 {
            assert!((before[c] - after[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_indicator_columns_are_learned() {
        // class = index of the single active indicator column
        let rows: Vec<f64> = (0..30)
            .flat_map(|i| {
                let mut r = [0.0; 3];
                r[i % 3] = 1.0;
                r
            })
            .collect();
        let x = DMatrix::from_row_slice(30, 3, &rows);
        let y: Vec<u8> = (0..30).map(|i| (i % 3) as u8).collect();
        let (m, _) = fit(&x, &y, &TrainConfig::default());
        for i in 0..30 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert_eq!(m.predict_proba(&row).argmax(), y[i] as usize);
        }
    }

    #[test]
    fn loss_is_monotone_non_increasing() {
        let x = DMatrix::from_fn(60, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y: Vec<u8> = (0..60).map(|i| ((i * 13) % 7 % 3) as u8).collect();
        let (_, report) = fit(&x, &y, &TrainConfig::default());
        assert!(report.converged);
        for w in report.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_weight_gradient_on_balanced_data() {
        let x = DMatrix::from_fn(9, 2, |i, j| (i + j) as f64);
        let y: Vec<u8> = (0..9).map(|i| (i % 3) as u8).collect();
        let theta = vec![0.0; 9];
        let (_, g) = loss_grad(&theta, &x, &y, 0.0);
        for c in 0..3 {
            assert!(g[c * 3 + 2].abs() < 1e-15);
        }
    }

    #[test]
    fn huge_penalty_shrinks_to_uniform() {
        let x = DMatrix::from_fn(12, 2, |i, j| ((i * (j + 1)) % 4) as f64);
        let y: Vec<u8> = (0..12).map(|i| (i % 3) as u8).collect();
        let (m, _) = fit(
            &x,
            &y,
            &TrainConfig {
                mnlogit_lambda: 1e12,
                ..Default::default()
            },
        );
        for v in m.predict_proba(&[1.0, 2.0]).probs() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
    }
}
