//! Probabilistic PCA over the risk-of-bias matrix, substitute-confounder
//! inference, and held-out predictive checks.
//!
//! The binary bias indicators are treated as real values under the Gaussian
//! PPCA likelihood `a_i ~ N(mu, W W^T + sigma^2 I)` with a standard-normal
//! latent `z_i` of dimension `k < D`.

mod check;
mod ppca;

pub use check::{make_holdout, predictive_check, predictive_check_dense, CheckResult, HoldoutMask};
pub use ppca::{
    fit_ppca, fit_ppca_dense, log_likelihood, posterior_mean, posterior_means, FactorModel,
    FitMethod, PpcaConfig, PpcaFit, SubstituteConfounders,
};
