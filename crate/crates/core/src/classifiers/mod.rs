//! Multi-class probabilistic classifiers behind one interface.
//!
//! The same models serve as baselines on raw bias indicators and as outcome
//! models on bias indicators augmented with substitute confounders.

mod gbt;
pub mod gradcheck;
mod knn;
pub mod mlp;
pub mod mnlogit;
mod naive_bayes;
mod scaler;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{AssociationLabels, Simplex3, N_CLASSES};
use crate::error::{McmaError, Result};

pub use gbt::GbtModel;
pub use knn::KnnModel;
pub use mlp::MlpModel;
pub use mnlogit::MnLogitModel;
pub use naive_bayes::GaussianNbModel;
pub use scaler::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[serde(rename = "mnlogit", alias = "mn_logit")]
    MnLogit,
    Knn,
    Mlp,
    GaussianNb,
    Gbt,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::MnLogit,
        ClassifierKind::Knn,
        ClassifierKind::Mlp,
        ClassifierKind::GaussianNb,
        ClassifierKind::Gbt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::MnLogit => "mnlogit",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::GaussianNb => "gaussian_nb",
            ClassifierKind::Gbt => "gbt",
        }
    }

    /// Whether real-valued (substitute confounder) inputs are standardised.
    pub fn is_scale_sensitive(self) -> bool {
        matches!(self, ClassifierKind::Knn | ClassifierKind::Mlp)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = McmaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mnlogit" | "logit" => Ok(ClassifierKind::MnLogit),
            "knn" => Ok(ClassifierKind::Knn),
            "mlp" => Ok(ClassifierKind::Mlp),
            "gaussian_nb" | "gnb" | "nb" => Ok(ClassifierKind::GaussianNb),
            "gbt" | "xgboost" => Ok(ClassifierKind::Gbt),
            other => Err(McmaError::InvalidArgument(format!(
                "unknown classifier {other:?}"
            ))),
        }
    }
}

/// Hyperparameters for every classifier kind; each kind reads its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    /// Newton iterations for MNLogit.
    pub max_iters: usize,
    pub tol: f64,
    pub mnlogit_lambda: f64,
    pub knn_k: usize,
    pub nb_var_floor: f64,
    pub mlp_hidden: usize,
    pub mlp_step: f64,
    pub mlp_epochs: usize,
    pub gbt_rounds: usize,
    pub gbt_depth: usize,
    pub gbt_learning_rate: f64,
    pub gbt_lambda: f64,
    pub gbt_min_child_weight: f64,
    /// Columns standardised by scale-sensitive kinds (kNN, MLP); set by the pipeline.
    pub standardize_columns: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            max_iters: 100,
            tol: 1e-10,
            mnlogit_lambda: 1e-4,
            knn_k: 5,
            nb_var_floor: 1e-9,
            mlp_hidden: 16,
            mlp_step: 0.05,
            mlp_epochs: 2000,
            gbt_rounds: 100,
            gbt_depth: 3,
            gbt_learning_rate: 0.1,
            gbt_lambda: 1.0,
            gbt_min_child_weight: 1.0,
            standardize_columns: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_iters", self.max_iters),
            ("knn_k", self.knn_k),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_epochs", self.mlp_epochs),
            ("gbt_rounds", self.gbt_rounds),
            ("gbt_depth", self.gbt_depth),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(McmaError::InvalidArgument(format!("{name} must be >= 1")));
        }
        let rates = [
            ("tol", self.tol),
            ("mlp_step", self.mlp_step),
            ("gbt_learning_rate", self.gbt_learning_rate),
            ("nb_var_floor", self.nb_var_floor),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(McmaError::InvalidArgument(format!(
                "{name} = {v} must be > 0"
            )));
        }
        if self.mnlogit_lambda < 0.0 || self.gbt_lambda < 0.0 || self.gbt_min_child_weight < 0.0 {
            return Err(McmaError::InvalidArgument("penalties must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum FitWarning {
    /// Only one class was present; the model always predicts it.
    SingleClassDegenerate {
        class: u8,
    },
    NonConvergence {
        iterations: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Constant { class: u8 },
    MnLogit(MnLogitModel),
    Knn(KnnModel),
    GaussianNb(GaussianNbModel),
    Mlp(MlpModel),
    Gbt(GbtModel),
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub kind: ClassifierKind,
    pub input_dim: usize,
    pub params: ModelParams,
    #[serde(default)]
    pub warnings: Vec<FitWarning>,
}

pub fn fit(
    kind: ClassifierKind,
    features: &DMatrix<f64>,
    labels: &AssociationLabels,
    config: &TrainConfig,
) -> Result<OutcomeModel> {
    config.validate()?;
    let (n, f) = features.shape();
    if n != labels.len() {
        return Err(McmaError::DimensionMismatch(format!(
            "{n} feature rows, {} labels",
            labels.len()
        )));
    }
    if n < 3 {
        return Err(McmaError::InvalidArgument(format!(
            "need at least 3 training rows, got {n}"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(McmaError::DomainError("non-finite feature value".into()));
    }
    if let Some(&c) = config.standardize_columns.iter().find(|&&c| c >= f) {
        return Err(McmaError::DimensionMismatch(format!(
            "standardize column {c} >= {f}"
        )));
    }
    if labels.distinct() == 1 {
        let class = labels.as_slice()[0];
        return Ok(OutcomeModel {
            kind,
            input_dim: f,
            params: ModelParams::Constant { class },
            warnings: vec![FitWarning::SingleClassDegenerate { class }],
        });
    }
    let y = labels.as_slice();
    let mut warnings = Vec::new();
    let params = match kind {
        ClassifierKind::MnLogit => {
            let (model, report) = mnlogit::fit(features, y, config);
            if !report.converged {
                warnings.push(FitWarning::NonConvergence {
                    iterations: report.iterations,
                });
            }
            ModelParams::MnLogit(model)
        }
        ClassifierKind::Knn => ModelParams::Knn(KnnModel::fit(features, y, config)),
        ClassifierKind::GaussianNb => {
            ModelParams::GaussianNb(GaussianNbModel::fit(features, y, config))
        }
        ClassifierKind::Mlp => ModelParams::Mlp(mlp::fit(features, y, config)),
        ClassifierKind::Gbt => ModelParams::Gbt(GbtModel::fit(features, y, config)),
    };
    Ok(OutcomeModel {
        kind,
        input_dim: f,
        params,
        warnings,
    })
}

impl OutcomeModel {
    pub fn predict_proba(&self, x: &[f64]) -> Result<Simplex3> {
        if x.len() != self.input_dim {
            return Err(McmaError::DimensionMismatch(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(McmaError::DomainError("non-finite feature value".into()));
        }
        Ok(match &self.params {
            ModelParams::Constant { class } => Simplex3::one_hot(*class as usize),
            ModelParams::MnLogit(m) => m.predict_proba(x),
            ModelParams::Knn(m) => m.predict_proba(x),
            ModelParams::GaussianNb(m) => m.predict_proba(x),
            ModelParams::Mlp(m) => m.predict_proba(x),
            ModelParams::Gbt(m) => m.predict_proba(x),
        })
    }

    pub fn predict_proba_rows(&self, features: &DMatrix<f64>) -> Result<Vec<Simplex3>> {
        let mut buf = vec![0.0; features.ncols()];
        features
            .row_iter()
            .map(|row| {
                buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
                self.predict_proba(&buf)
            })
            .collect()
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.params, ModelParams::Constant { .. })
    }
}

/// Numerically stable softmax over three logits.
pub(crate) fn softmax3(logits: [f64; N_CLASSES]) -> Simplex3 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Simplex3::from_weights(logits.map(|l| (l - max).exp()))
}
