//! Synthetic and semi-synthetic data generation.
//!
//! The synthetic process draws a hidden confounder `u_i ~ Uniform(0, 1)`, makes
//! each bias bit Bernoulli(0.25 + 0.5 u_i), draws dataset-level Poisson weights
//! `w1 ~ Poisson(3)`, `w2 ~ Poisson(2)`, `w3 ~ Poisson(1)` (one per domain), and
//! samples the label from class weights
//!
//! ```text
//! ( u (w1.a + 4),  w2.a,  w3.a + w_u u )
//! ```
//!
//! normalised by their sum. Rows with no high-risk domain are rejected and
//! redrawn together with their `u`, so the retained rows follow the joint
//! distribution conditioned on `sum(a) >= 1`.
//!
//! Substreams of the seed: `Confounder` for u, `Bias` for a, `Weights` for the
//! Poisson weights, `Labels` for y.

use rand::distr::{Distribution, Open01};
use rand::Rng as _;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::data::{
    default_domain_names, default_study_ids, AssociationLabels, BiasMatrix, Dataset, Provenance,
    Simplex3, SyntheticParams, N_CLASSES,
};
use crate::error::{McmaError, Result};
use crate::rng::{stream, Stream};

const POISSON_MEANS: [f64; N_CLASSES] = [3.0, 2.0, 1.0];
const BASELINE_U_WEIGHT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub summary: Simplex3,
    /// Hidden confounder draws. Never passed to any fitting routine.
    pub u: Vec<f64>,
}

/// How bias rows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasPolicy {
    /// Reject and redraw rows without any high-risk domain.
    #[default]
    AtLeastOneHigh,
    /// Keep rows as drawn (diagnostics only).
    Unconstrained,
    /// Every row is the all-low vector, i.e. the intervention do(a = 0).
    ForceZero,
}

/// Interventional class distribution at `a = 0`.
///
/// All `w . a` terms vanish, leaving weights `(4u, 0, w_u u)`; `u` cancels.
pub fn ground_truth_summary(w_u: f64) -> Simplex3 {
    let w_u = w_u.max(0.0);
    let total = BASELINE_U_WEIGHT + w_u;
    Simplex3::from_weights([BASELINE_U_WEIGHT / total, 0.0, w_u / total])
}

pub fn generate_synthetic(params: &SyntheticParams) -> Result<(Dataset, GroundTruth)> {
    generate_synthetic_with(params, BiasPolicy::AtLeastOneHigh)
}

pub fn generate_synthetic_with(
    params: &SyntheticParams,
    policy: BiasPolicy,
) -> Result<(Dataset, GroundTruth)> {
    params.validate()?;
    let (n, d) = (params.n, params.d);

    let mut weight_rng = stream(params.seed, Stream::Weights);
    let weights: Vec<Vec<f64>> = POISSON_MEANS
        .iter()
        .map(|&mean| {
            let dist = Poisson::new(mean).expect("positive Poisson mean");
            (0..d).map(|_| dist.sample(&mut weight_rng)).collect()
        })
        .collect();

    let mut u_rng = stream(params.seed, Stream::Confounder);
    let mut bias_rng = stream(params.seed, Stream::Bias);
    let mut label_rng = stream(params.seed, Stream::Labels);

    let mut rows = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (u, row) = loop {
            let u: f64 = Open01.sample(&mut u_rng);
            let p_high = 0.25 + 0.5 * u;
            let row: Vec<u8> = match policy {
                BiasPolicy::ForceZero => vec![0; d],
                _ => (0..d)
                    .map(|_| u8::from(bias_rng.random::<f64>() < p_high))
                    .collect(),
            };
            if policy != BiasPolicy::AtLeastOneHigh || row.contains(&1) {
                break (u, row);
            }
        };

        let dot = |w: &[f64]| -> f64 { w.iter().zip(&row).map(|(wj, &a)| wj * f64::from(a)).sum() };
        let class_weights = [
            u * (dot(&weights[0]) + BASELINE_U_WEIGHT),
            dot(&weights[1]),
            dot(&weights[2]) + params.w_u * u,
        ];
        let total: f64 = class_weights.iter().sum();
        if !(total > 0.0) {
            return Err(McmaError::DegenerateWeights { row: i });
        }
        labels.push(sample_class(
            &class_weights.map(|w| w / total),
            label_rng.random(),
        ));
        rows.push(row);
        us.push(u);
    }

    let bias = BiasMatrix::new(rows, default_domain_names(d))?;
    let dataset = Dataset::new(
        bias,
        AssociationLabels::new(labels)?,
        default_study_ids(n),
        Provenance::Synthetic(*params),
    )?;
    Ok((
        dataset,
        GroundTruth {
            summary: ground_truth_summary(params.w_u),
            u: us,
        },
    ))
}

/// Inverse-CDF draw of one multinomial trial from a uniform in [0, 1).
fn sample_class(p: &[f64; N_CLASSES], r: f64) -> u8 {
    let mut acc = 0.0;
    for (c, &pc) in p.iter().enumerate().take(N_CLASSES - 1) {
        acc += pc;
        if r < acc {
            return c as u8;
        }
    }
    // Skip trailing zero-probability classes that rounding could otherwise select.
    (0..N_CLASSES).rev().find(|&c| p[c] > 0.0).unwrap_or(0) as u8
}

/// Independent-Bernoulli / categorical generator fitted to real study statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSynthParams {
    pub bernoulli_rates: Vec<f64>,
    pub outcome_probs: Simplex3,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub domain_names: Option<Vec<String>>,
}

impl SemiSynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.bernoulli_rates.is_empty() {
            return Err(McmaError::InvalidArgument(
                "n and the number of rates must be >= 1".into(),
            ));
        }
        if let Some(r) = self
            .bernoulli_rates
            .iter()
            .find(|r| !(0.0..=1.0).contains(*r))
        {
            return Err(McmaError::InvalidArgument(format!(
                "Bernoulli rate {r} outside [0, 1]"
            )));
        }
        if let Some(names) = &self.domain_names {
            if names.len() != self.bernoulli_rates.len() {
                return Err(McmaError::DimensionMismatch(
                    "domain names and Bernoulli rates differ in length".into(),
                ));
            }
        }
        Ok(())
    }

    /// Ground truth of the semi-synthetic process: labels are drawn
    /// independently of the bias matrix, so intervening on it leaves the
    /// outcome distribution unchanged.
    pub fn ground_truth(&self) -> Simplex3 {
        self.outcome_probs
    }
}

/// Column means of the bias matrix and empirical class frequencies.
/// `n` is set to the dataset size and `seed` to 0; callers override both.
pub fn estimate_semisynth_params(dataset: &Dataset) -> SemiSynthParams {
    let counts = dataset.labels.class_counts();
    let n = dataset.n();
    SemiSynthParams {
        bernoulli_rates: dataset.bias.column_means(),
        outcome_probs: Simplex3::from_weights(counts.map(|c| c as f64 / n as f64)),
        n,
        seed: 0,
        domain_names: Some(dataset.bias.domain_names().to_vec()),
    }
}

pub fn generate_semisynthetic(params: &SemiSynthParams) -> Result<Dataset> {
    params.validate()?;
    let d = params.bernoulli_rates.len();
    let mut bias_rng = stream(params.seed, Stream::Bias);
    let mut label_rng = stream(params.seed, Stream::Labels);
    let rows: Vec<Vec<u8>> = (0..params.n)
        .map(|_| {
            params
                .bernoulli_rates
                .iter()
                .map(|&rate| u8::from(bias_rng.random::<f64>() < rate))
                .collect()
        })
        .collect();
    let probs = params.outcome_probs.probs();
    let labels: Vec<u8> = (0..params.n)
        .map(|_| sample_class(&probs, label_rng.random()))
        .collect();
    let names = params
        .domain_names
        .clone()
        .unwrap_or_else(|| default_domain_names(d));
    Dataset::new(
        BiasMatrix::new(rows, names)?,
        AssociationLabels::new(labels)?,
        default_study_ids(params.n),
        Provenance::SemiSynthetic(params.clone()),
    )
}
