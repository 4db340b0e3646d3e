use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::{Simplex3, N_CLASSES};

/// Gaussian naive Bayes. Per-feature variances are floored so constant
/// features keep finite log-densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    /// `None` for classes absent from the training labels.
    log_prior: [Option<f64>; N_CLASSES],
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl GaussianNbModel {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], config: &TrainConfig) -> Self {
        let (n, f) = x.shape();
        let mut mean = vec![vec![0.0; f]; N_CLASSES];
        let mut var = vec![vec![0.0; f]; N_CLASSES];
        let mut counts = [0usize; N_CLASSES];
        for (i, &c) in y.iter().enumerate() {
            counts[c as usize] += 1;
            for j in 0..f {
                mean[c as usize][j] += x[(i, j)];
            }
        }
        for c in 0..N_CLASSES {
            if counts[c] > 0 {
                mean[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
            }
        }
        for (i, &c) in y.iter().enumerate() {
            for j in 0..f {
                let d = x[(i, j)] - mean[c as usize][j];
                var[c as usize][j] += d * d;
            }
        }
        for c in 0..N_CLASSES {
            for v in var[c].iter_mut() {
                *v = (*v / counts[c].max(1) as f64).max(config.nb_var_floor);
            }
        }
        let log_prior =
            std::array::from_fn(|c| (counts[c] > 0).then(|| (counts[c] as f64 / n as f64).ln()));
        GaussianNbModel {
            log_prior,
            mean,
            var,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Simplex3 {
        let log_post: [f64; N_CLASSES] = std::array::from_fn(|c| match self.log_prior[c] {
            None => f64::NEG_INFINITY,
            Some(lp) => {
                lp + x
                    .iter()
                    .zip(&self.mean[c])
                    .zip(&self.var[c])
                    .map(|((v, m), s2)| {
                        -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (v - m) * (v - m) / s2)
                    })
                    .sum::<f64>()
            }
        });
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Simplex3::from_weights(log_post.map(|l| {
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                (l - max).exp()
            }
        }))
    }
}
