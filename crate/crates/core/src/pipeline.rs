//! End-to-end estimation of the summary association.
//!
//! The deconfounded path screens out near-duplicate bias domains, checks a
//! PPCA fit on held-out entries, refits PPCA on the full screened matrix,
//! augments each RCT's biases with its substitute confounder, fits an outcome
//! classifier and finally queries it with every bias set to low. The basic
//! path skips everything but the classifier.
//!
//! `a = 0` never occurs in data generated with at least one high-risk domain,
//! so the final query is an extrapolation for every classifier.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierKind, OutcomeModel, TrainConfig};
use crate::data::{BiasMatrix, Dataset, Simplex3};
use crate::error::{McmaError, Result};
use crate::exec::Exec;
use crate::factor::{
    self, fit_ppca, make_holdout, posterior_means, predictive_check, CheckResult, FactorModel,
    PpcaConfig, SubstituteConfounders,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Basic,
    Mcma,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Basic => "basic",
            Mode::Mcma => "mcma",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = McmaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(Mode::Basic),
            "mcma" => Ok(Mode::Mcma),
            other => Err(McmaError::InvalidArgument(format!(
                "unknown mode {other:?}"
            ))),
        }
    }
}

/// How the substitute confounder is integrated out at `a = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Mean of `p(y | a = 0, z_i)` over all inferred `z_i`.
    #[default]
    OverConfounders,
    /// `p(y | a = 0, mean(z))`.
    PlugInMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub latent_dim: usize,
    pub screen_threshold: f64,
    pub holdout_fraction: f64,
    pub check_replications: usize,
    /// Continue past a failed predictive check.
    pub force: bool,
    pub averaging: Averaging,
    /// Master seed; every stage seed is derived from it, overriding the seeds
    /// inside `ppca` and `train`.
    pub seed: u64,
    pub ppca: PpcaConfig,
    pub train: TrainConfig,
    #[serde(skip)]
    pub exec: Exec,
    /// Replace substitute confounders by zeros (ablation hook).
    #[serde(skip)]
    pub zero_confounders: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            latent_dim: 1,
            screen_threshold: 0.95,
            holdout_fraction: 0.2,
            check_replications: 200,
            force: false,
            averaging: Averaging::OverConfounders,
            seed: 0,
            ppca: PpcaConfig::default(),
            train: TrainConfig::default(),
            exec: Exec::default(),
            zero_confounders: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(McmaError::InvalidArgument(
                "latent dimension must be >= 1".into(),
            ));
        }
        if !(self.screen_threshold > 0.0 && self.screen_threshold <= 1.0) {
            return Err(McmaError::InvalidArgument(format!(
                "screening threshold {} not in (0, 1]",
                self.screen_threshold
            )));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(McmaError::InvalidArgument(format!(
                "holdout fraction {} not in (0, 1)",
                self.holdout_fraction
            )));
        }
        if self.check_replications == 0 {
            return Err(McmaError::InvalidArgument(
                "check replications must be >= 1".into(),
            ));
        }
        self.train.validate()
    }

    fn stage_seed(&self, stage: u64) -> u64 {
        derive_seed(self.seed, stage)
    }

    fn ppca_config(&self, stage: u64) -> PpcaConfig {
        PpcaConfig {
            seed: self.stage_seed(stage),
            ..self.ppca
        }
    }

    pub(crate) fn train_config(&self, standardize: Vec<usize>) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed(5),
            standardize_columns: standardize,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    /// Earlier column the dropped one correlates with (equal to `dropped` for constant columns).
    pub kept: usize,
    pub dropped: usize,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub threshold: f64,
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedPair>,
}

fn column_stats(bias: &BiasMatrix) -> (Vec<f64>, Vec<f64>) {
    let means = bias.column_means();
    let n = bias.n() as f64;
    let mut sd = vec![0.0; bias.d()];
    for row in bias.rows() {
        for (j, &v) in row.iter().enumerate() {
            let c = f64::from(v) - means[j];
            sd[j] += c * c;
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    (means, sd)
}

fn pearson(bias: &BiasMatrix, i: usize, j: usize, means: &[f64], sd: &[f64]) -> f64 {
    let cov = bias
        .rows()
        .map(|r| (f64::from(r[i]) - means[i]) * (f64::from(r[j]) - means[j]))
        .sum::<f64>()
        / bias.n() as f64;
    let r = (cov / (sd[i] * sd[j])).clamp(-1.0, 1.0);
    if (r.abs() - 1.0).abs() < 1e-12 {
        r.signum()
    } else {
        r
    }
}

/// Greedy correlation screening. Columns are visited in index order; a column
/// is dropped if it is constant or if `|r| >= threshold` with an already kept
/// column. Constant columns are recorded with correlation 1.0.
pub fn screen_correlated(bias: &BiasMatrix, threshold: f64) -> Result<(BiasMatrix, ScreenReport)> {
    if bias.d() < 2 {
        return Err(McmaError::DomainError(format!(
            "screening needs >= 2 domains, got {}",
            bias.d()
        )));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(McmaError::InvalidArgument(format!(
            "threshold {threshold} not in (0, 1]"
        )));
    }
    let (means, sd) = column_stats(bias);
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..bias.d() {
        if sd[j] == 0.0 {
            dropped.push(DroppedPair {
                kept: j,
                dropped: j,
                correlation: 1.0,
            });
            continue;
        }
        let hit = kept.iter().find_map(|&i| {
            let r = pearson(bias, i, j, &means, &sd);
            (r.abs() >= threshold).then_some((i, r))
        });
        match hit {
            Some((i, r)) => dropped.push(DroppedPair {
                kept: i,
                dropped: j,
                correlation: r,
            }),
            None => kept.push(j),
        }
    }
    if kept.len() < 2 {
        return Err(McmaError::AllDropped { kept: kept.len() });
    }
    Ok((
        bias.select_columns(&kept),
        ScreenReport {
            threshold,
            kept,
            dropped,
        },
    ))
}

/// Output of the confounder-inference stage, reusable across outcome models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deconfounded {
    pub screen: ScreenReport,
    pub check: CheckResult,
    pub factor: FactorModel,
    pub factor_converged: bool,
    pub z: SubstituteConfounders,
}

impl Deconfounded {
    pub fn screened_dim(&self) -> usize {
        self.screen.kept.len()
    }

    /// `[a_kept | z]` rows for arbitrary RCTs, using the fitted factor model.
    pub fn features_for(&self, bias: &BiasMatrix) -> Result<DMatrix<f64>> {
        let screened = bias.select_columns(&self.screen.kept);
        let z = posterior_means(&self.factor, &screened)?;
        Ok(augment(&screened, &z))
    }
}

/// Screening, predictive check on held-out entries and substitute-confounder
/// inference. Fails with [`McmaError::CheckFailed`] unless the check passes or
/// `config.force` is set.
pub fn infer_substitute_confounders(
    bias: &BiasMatrix,
    config: &PipelineConfig,
) -> Result<Deconfounded> {
    config.validate()?;
    let (screened, screen) = screen_correlated(bias, config.screen_threshold)?;
    let k = config.latent_dim;
    if k >= screened.d() {
        return Err(McmaError::RankError { k, d: screened.d() });
    }
    let x = screened.to_matrix();
    let mask = make_holdout(
        screened.n(),
        screened.d(),
        config.holdout_fraction,
        config.stage_seed(1),
    )?;
    let held_fit = factor::fit_ppca_dense(&x, Some(&mask), k, &config.ppca_config(2))?;
    let check = predictive_check(
        &held_fit.model,
        &screened,
        &mask,
        config.check_replications,
        config.stage_seed(4),
        config.exec,
    )?;
    if !check.passed && !config.force {
        return Err(McmaError::CheckFailed(check));
    }
    let full = fit_ppca(&screened, k, &config.ppca_config(3))?;
    let z = if config.zero_confounders {
        SubstituteConfounders::zeros(screened.n(), k)
    } else {
        posterior_means(&full.model, &screened)?
    };
    Ok(Deconfounded {
        screen,
        check,
        factor: full.model,
        factor_converged: full.converged,
        z,
    })
}

pub fn augment(bias: &BiasMatrix, z: &SubstituteConfounders) -> DMatrix<f64> {
    let d = bias.d();
    let k = z.z.first().map_or(0, Vec::len);
    DMatrix::from_fn(bias.n(), d + k, |i, j| {
        if j < d {
            f64::from(bias.get(i, j))
        } else {
            z.z[i][j - d]
        }
    })
}

/// Interventional class distribution at `a = 0`, integrating the substitute
/// confounder over its empirical distribution.
pub fn intervene_summary(
    outcome: &OutcomeModel,
    z_all: &SubstituteConfounders,
    screened_d: usize,
    averaging: Averaging,
) -> Result<Simplex3> {
    if z_all.n() == 0 {
        return Err(McmaError::InvalidArgument(
            "no substitute confounders to average over".into(),
        ));
    }
    let k = z_all.z[0].len();
    if outcome.input_dim != screened_d + k {
        return Err(McmaError::DimensionMismatch(format!(
            "outcome model takes {} inputs, intervention builds {}",
            outcome.input_dim,
            screened_d + k
        )));
    }
    let query = |z: &[f64]| {
        let mut x = vec![0.0; screened_d];
        x.extend_from_slice(z);
        outcome.predict_proba(&x)
    };
    match averaging {
        Averaging::OverConfounders => {
            let probs = z_all
                .z
                .iter()
                .map(|z| query(z))
                .collect::<Result<Vec<_>>>()?;
            Ok(Simplex3::mean(&probs).expect("non-empty"))
        }
        Averaging::PlugInMean => {
            let mean: Vec<f64> = (0..k)
                .map(|c| z_all.z.iter().map(|z| z[c]).sum::<f64>() / z_all.n() as f64)
                .collect();
            query(&mean)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRefs {
    pub factor: Option<FactorModel>,
    pub outcome: OutcomeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub mode: Mode,
    pub classifier: ClassifierKind,
    pub summary: Simplex3,
    pub check: Option<CheckResult>,
    pub screen: Option<ScreenReport>,
    pub per_rct_probs: Vec<Simplex3>,
    pub models: ModelRefs,
    pub warnings: Vec<String>,
}

/// Fits the outcome model on `[a_kept | z]` for an already deconfounded dataset.
pub fn fit_deconfounded_outcome(
    dataset: &Dataset,
    deconf: &Deconfounded,
    kind: ClassifierKind,
    config: &PipelineConfig,
) -> Result<OutcomeModel> {
    let screened = dataset.bias.select_columns(&deconf.screen.kept);
    let features = augment(&screened, &deconf.z);
    let d = screened.d();
    let standardize = if kind.is_scale_sensitive() {
        (d..features.ncols()).collect()
    } else {
        Vec::new()
    };
    classifiers::fit(
        kind,
        &features,
        &dataset.labels,
        &config.train_config(standardize),
    )
}

fn warnings_of(outcome: &OutcomeModel) -> Vec<String> {
    outcome
        .warnings
        .iter()
        .map(|w| serde_json::to_string(w).unwrap_or_default())
        .collect()
}

/// Deconfounded estimate, reusing a previously inferred confounder stage.
pub fn run_mcma_with(
    dataset: &Dataset,
    deconf: &Deconfounded,
    kind: ClassifierKind,
    config: &PipelineConfig,
) -> Result<PipelineResult> {
    let outcome = fit_deconfounded_outcome(dataset, deconf, kind, config)?;
    let screened = dataset.bias.select_columns(&deconf.screen.kept);
    let features = augment(&screened, &deconf.z);
    let per_rct_probs = outcome.predict_proba_rows(&features)?;
    let summary = intervene_summary(&outcome, &deconf.z, deconf.screened_dim(), config.averaging)?;
    let mut warnings = warnings_of(&outcome);
    if !deconf.factor_converged {
        warnings.push("factor model did not reach the convergence tolerance".into());
    }
    if !deconf.check.passed {
        warnings.push(format!(
            "predictive check failed (score {:.4}); continued with force",
            deconf.check.score
        ));
    }
    Ok(PipelineResult {
        mode: Mode::Mcma,
        classifier: kind,
        summary,
        check: Some(deconf.check),
        screen: Some(deconf.screen.clone()),
        per_rct_probs,
        models: ModelRefs {
            factor: Some(deconf.factor.clone()),
            outcome,
        },
        warnings,
    })
}

pub fn run_mcma(
    dataset: &Dataset,
    kind: ClassifierKind,
    config: &PipelineConfig,
) -> Result<PipelineResult> {
    if dataset.n() < 10 {
        return Err(McmaError::InvalidArgument(format!(
            "the deconfounded pipeline needs at least 10 RCTs, got {}",
            dataset.n()
        )));
    }
    let deconf = infer_substitute_confounders(&dataset.bias, config)?;
    run_mcma_with(dataset, &deconf, kind, config)
}

/// Classifier on the raw bias indicators, queried at `a = 0`.
pub fn run_basic(
    dataset: &Dataset,
    kind: ClassifierKind,
    config: &PipelineConfig,
) -> Result<PipelineResult> {
    config.validate()?;
    let features = dataset.bias.to_matrix();
    let outcome = classifiers::fit(
        kind,
        &features,
        &dataset.labels,
        &config.train_config(Vec::new()),
    )?;
    let per_rct_probs = outcome.predict_proba_rows(&features)?;
    let summary = outcome.predict_proba(&vec![0.0; dataset.d()])?;
    Ok(PipelineResult {
        mode: Mode::Basic,
        classifier: kind,
        summary,
        check: None,
        screen: None,
        per_rct_probs,
        warnings: warnings_of(&outcome),
        models: ModelRefs {
            factor: None,
            outcome,
        },
    })
}

pub fn run(
    dataset: &Dataset,
    mode: Mode,
    kind: ClassifierKind,
    config: &PipelineConfig,
) -> Result<PipelineResult> {
    match mode {
        Mode::Basic => run_basic(dataset, kind, config),
        Mode::Mcma => run_mcma(dataset, kind, config),
    }
}
