use serde::{Deserialize, Serialize};

use crate::data::{AssociationLabels, Simplex3, N_CLASSES};
use crate::error::{McmaError, Result};

/// How per-class scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassAveraging {
    #[default]
    Macro,
    /// Weighted by class support in the labels.
    Weighted,
}

/// Midpoint ranks (1-based) of `scores`.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

/// Area under the ROC curve via the rank-sum statistic. `None` when either
/// side is empty.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = positive
        .iter()
        .zip(&ranks)
        .filter(|(p, _)| **p)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUC per class, averaged over the classes present in `labels`.
pub fn auc_ovr(
    labels: &AssociationLabels,
    probs: &[Simplex3],
    averaging: ClassAveraging,
) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(McmaError::DimensionMismatch(format!(
            "{} labels but {} probability rows",
            labels.len(),
            probs.len()
        )));
    }
    if labels.distinct() < 2 {
        return Err(McmaError::DegenerateLabels(
            "AUC needs at least two distinct classes".into(),
        ));
    }
    let counts = labels.class_counts();
    let mut total = 0.0;
    let mut weight = 0.0;
    for c in 0..N_CLASSES {
        if counts[c] == 0 {
            continue;
        }
        let positive: Vec<bool> = labels
            .as_slice()
            .iter()
            .map(|&y| usize::from(y) == c)
            .collect();
        let scores: Vec<f64> = probs.iter().map(|p| p.get(c)).collect();
        let auc = binary_auc(&positive, &scores).expect("class present and not the only one");
        let w = match averaging {
            ClassAveraging::Macro => 1.0,
            ClassAveraging::Weighted => counts[c] as f64,
        };
        total += w * auc;
        weight += w;
    }
    Ok(total / weight)
}

pub fn auc_macro_ovr(labels: &AssociationLabels, probs: &[Simplex3]) -> Result<f64> {
    auc_ovr(labels, probs, ClassAveraging::Macro)
}

/// Per-class F1 with 0/0 taken as 0, combined over all three classes.
pub fn f1(labels: &[u8], predicted: &[u8], averaging: ClassAveraging) -> Result<f64> {
    if labels.len() != predicted.len() {
        return Err(McmaError::DimensionMismatch(format!(
            "{} labels but {} predictions",
            labels.len(),
            predicted.len()
        )));
    }
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fneg = [0usize; N_CLASSES];
    let mut support = [0usize; N_CLASSES];
    for (&y, &p) in labels.iter().zip(predicted) {
        let (y, p) = (usize::from(y), usize::from(p));
        if y >= N_CLASSES || p >= N_CLASSES {
            return Err(McmaError::DomainError(format!(
                "class index out of range: {}",
                y.max(p)
            )));
        }
        support[y] += 1;
        if y == p {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fneg[y] += 1;
        }
    }
    let per_class: Vec<f64> = (0..N_CLASSES)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    Ok(match averaging {
        ClassAveraging::Macro => per_class.iter().sum::<f64>() / N_CLASSES as f64,
        ClassAveraging::Weighted => {
            let n: usize = support.iter().sum();
            if n == 0 {
                0.0
            } else {
                per_class
                    .iter()
                    .zip(&support)
                    .map(|(f, &s)| f * s as f64)
                    .sum::<f64>()
                    / n as f64
            }
        }
    })
}

pub fn f1_macro(labels: &[u8], predicted: &[u8]) -> Result<f64> {
    f1(labels, predicted, ClassAveraging::Macro)
}

/// Componentwise `|truth - estimate|`.
pub fn abs_error(truth: &Simplex3, estimate: &Simplex3) -> [f64; N_CLASSES] {
    let (t, e) = (truth.probs(), estimate.probs());
    std::array::from_fn(|k| (t[k] - e[k]).abs())
}

/// Argmax of each row, ties to the lowest class.
pub fn predicted_classes(probs: &[Simplex3]) -> Vec<u8> {
    probs.iter().map(|p| p.argmax() as u8).collect()
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
