use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ppca::FactorModel;
use crate::data::BiasMatrix;
use crate::error::{McmaError, Result};
use crate::exec::Exec;
use crate::rng::{derive_seed, stream, Stream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const TIE_TOL: f64 = 1e-12;

/// Entries withheld from the factor model for the predictive check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutMask {
    n: usize,
    d: usize,
    held: Vec<bool>,
    fraction_milli: u32,
}

impl HoldoutMask {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_held(&self, i: usize, j: usize) -> bool {
        self.held[i * self.d + j]
    }

    pub fn fraction(&self) -> f64 {
        f64::from(self.fraction_milli) / 1000.0
    }

    pub fn held_in_row(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.is_held(i, j)).collect()
    }

    pub fn observed_in_row(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| !self.is_held(i, j)).collect()
    }
}

/// Holds out `round(fraction * d)` entries per row, clamped to `[1, d - 1]`.
pub fn make_holdout(n: usize, d: usize, fraction: f64, seed: u64) -> Result<HoldoutMask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(McmaError::InvalidArgument(format!(
            "holdout fraction {fraction} not in (0, 1)"
        )));
    }
    if d < 2 {
        return Err(McmaError::DomainError(format!(
            "a holdout needs at least 2 bias domains, got {d}"
        )));
    }
    let per_row = ((fraction * d as f64).round() as usize).clamp(1, d - 1);
    let mut rng = stream(seed, Stream::Holdout);
    let mut held = vec![false; n * d];
    for i in 0..n {
        for j in sample(&mut rng, d, per_row) {
            held[i * d + j] = true;
        }
    }
    Ok(HoldoutMask {
        n,
        d,
        held,
        fraction_milli: (fraction * 1000.0).round() as u32,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub score: f64,
    pub n_replications: usize,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(score: f64, n_replications: usize) -> Self {
        CheckResult {
            score,
            n_replications,
            passed: score > 0.5,
        }
    }
}

pub fn predictive_check(
    model: &FactorModel,
    bias: &BiasMatrix,
    mask: &HoldoutMask,
    n_replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<CheckResult> {
    predictive_check_dense(model, &bias.to_matrix(), mask, n_replications, seed, exec)
}

/// Per-row held-out predictive distribution, whitened by its Cholesky factor.
struct HeldOutPredictive {
    dim: usize,
    /// `-0.5 * (dim * ln(2 pi) + ln|C|)`
    log_norm: f64,
    /// Squared Mahalanobis distance of the real held-out values.
    observed_quad: f64,
}

/// Posterior predictive check on held-out entries.
///
/// For each row the latent posterior is formed from the observed entries and
/// the held-out block has predictive law `N(mu_h + W_h m, W_h S W_h^T + sigma^2 I)`.
/// The statistic is that block's log-likelihood. Each replication redraws every
/// row's held-out block; the score is the fraction of (replication, row) pairs
/// whose replicated log-likelihood falls below the real one, ties counted as 0.5.
pub fn predictive_check_dense(
    model: &FactorModel,
    x: &DMatrix<f64>,
    mask: &HoldoutMask,
    n_replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<CheckResult> {
    if n_replications == 0 {
        return Err(McmaError::InvalidArgument(
            "predictive check needs at least one replication".into(),
        ));
    }
    let (n, d) = x.shape();
    if (mask.n(), mask.d()) != (n, d) || model.dim() != d {
        return Err(McmaError::DimensionMismatch(
            "model, data and mask disagree".into(),
        ));
    }
    let w = model.loadings();
    let mu = model.mean();
    let sigma2 = model.noise_var();
    let k = model.latent_dim();

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let obs = mask.observed_in_row(i);
        let held = mask.held_in_row(i);
        let w_o = w.select_rows(&obs);
        let w_h = w.select_rows(&held);
        let mut m = w_o.tr_mul(&w_o);
        for c in 0..k {
            m[(c, c)] += sigma2;
        }
        let m_inv = m.cholesky().ok_or(McmaError::SingularMatrix)?.inverse();
        let r_o = DVector::from_fn(obs.len(), |t, _| x[(i, obs[t])] - mu[obs[t]]);
        let z_mean = &m_inv * w_o.tr_mul(&r_o);
        let pred_mean = &w_h * &z_mean;
        let mut cov = &w_h * (&m_inv * sigma2) * w_h.transpose();
        for t in 0..held.len() {
            cov[(t, t)] += sigma2;
        }
        let chol = cov.cholesky().ok_or(McmaError::SingularMatrix)?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        let resid = DVector::from_fn(held.len(), |t, _| {
            x[(i, held[t])] - mu[held[t]] - pred_mean[t]
        });
        let white = chol
            .l()
            .solve_lower_triangular(&resid)
            .ok_or(McmaError::SingularMatrix)?;
        rows.push(HeldOutPredictive {
            dim: held.len(),
            log_norm: -0.5 * (held.len() as f64 * LN_2PI + log_det),
            observed_quad: white.norm_squared(),
        });
    }

    // A replicate x_rep = mean + L xi has squared distance |xi|^2, so only the
    // standard-normal draws are needed.
    let wins = exec.map(n_replications, |r| {
        let mut rng = stream(derive_seed(seed, r as u64), Stream::Replicates);
        rows.iter()
            .map(|row| {
                let rep_quad: f64 = (0..row.dim)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        e * e
                    })
                    .sum();
                let t_obs = row.log_norm - 0.5 * row.observed_quad;
                let t_rep = row.log_norm - 0.5 * rep_quad;
                if (t_rep - t_obs).abs() <= TIE_TOL {
                    0.5
                } else if t_rep < t_obs {
                    1.0
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    });
    let score = wins.iter().sum::<f64>() / (n_replications * n) as f64;
    Ok(CheckResult::new(score.clamp(0.0, 1.0), n_replications))
}
