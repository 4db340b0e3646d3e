use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Standardizer, TrainConfig};
use crate::data::{Simplex3, N_CLASSES};

/// Keeps neighbour-frequency probabilities away from exact zeros.
const PSEUDO_COUNT: f64 = 1e-9;

/// k-nearest neighbours with Euclidean distance. Equidistant neighbours are
/// ordered by class index, so predictions do not depend on training-row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    scaler: Standardizer,
    /// Standardised training rows.
    train: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl KnnModel {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], config: &TrainConfig) -> Self {
        let scaler = Standardizer::fit(x, &config.standardize_columns);
        let scaled = scaler.apply_matrix(x);
        KnnModel {
            k: config.knn_k.min(x.nrows()),
            scaler,
            train: scaled
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            labels: y.to_vec(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Simplex3 {
        let mut q = x.to_vec();
        self.scaler.apply(&mut q);
        let mut dist: Vec<(f64, u8)> = self
            .train
            .iter()
            .zip(&self.labels)
            .map(|(row, &c)| (row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), c))
            .collect();
        let by_key = |a: &(f64, u8), b: &(f64, u8)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_key);
        }
        let mut counts = [PSEUDO_COUNT; N_CLASSES];
        for &(_, c) in &dist[..self.k] {
            counts[c as usize] += 1.0;
        }
        Simplex3::from_weights(counts)
    }
}
