use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Zero-mean, unit-variance scaling of selected columns using training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Standardizer {
    columns: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>, columns: &[usize]) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(columns.len());
        let mut scale = Vec::with_capacity(columns.len());
        for &c in columns {
            let col = x.column(c);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            // constant columns are only centred
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer {
            columns: columns.to_vec(),
            mean,
            scale,
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((&c, m), s) in self.columns.iter().zip(&self.mean).zip(&self.scale) {
            x[c] = (x[c] - m) / s;
        }
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for ((&c, m), s) in self.columns.iter().zip(&self.mean).zip(&self.scale) {
            out.column_mut(c).iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        out
    }
}
