//! Replicated experiments over a sweep of generator settings.

use serde::{Deserialize, Serialize};

use super::metrics::{abs_error, auc_ovr, f1, mean_std, predicted_classes, ClassAveraging};
use super::split::stratified_split;
use crate::classifiers::{self, ClassifierKind};
use crate::data::{Dataset, Simplex3, SyntheticParams, N_CLASSES};
use crate::error::{McmaError, Result};
use crate::exec::Exec;
use crate::pipeline::{
    self, augment, infer_substitute_confounders, Deconfounded, Mode, PipelineConfig,
};
use crate::synthgen::{
    generate_semisynthetic, generate_synthetic, ground_truth_summary, SemiSynthParams,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "w_u")]
    Wu,
    #[serde(rename = "n")]
    N,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Wu => "w_u",
            SweepAxis::N => "n",
        }
    }
}

/// Generator settings; the swept field and the seed are overwritten per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorTemplate {
    Synthetic(SyntheticParams),
    SemiSynthetic(SemiSynthParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub template: GeneratorTemplate,
    pub kinds: Vec<ClassifierKind>,
    pub modes: Vec<Mode>,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub averaging: ClassAveraging,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(McmaError::InvalidArgument("sweep has no values".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(McmaError::InvalidArgument(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.kinds.is_empty() || self.modes.is_empty() {
            return Err(McmaError::InvalidArgument(
                "sweep needs at least one classifier and mode".into(),
            ));
        }
        match (self.axis, &self.template) {
            (SweepAxis::Wu, GeneratorTemplate::SemiSynthetic(_)) => {
                return Err(McmaError::InvalidArgument(
                    "the semi-synthetic generator has no w_u".into(),
                ))
            }
            (SweepAxis::Wu, _) if self.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) => {
                return Err(McmaError::InvalidArgument(
                    "w_u values must be finite and >= 0".into(),
                ))
            }
            (SweepAxis::N, _) if self.values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0)) => {
                return Err(McmaError::InvalidArgument(
                    "n values must be positive integers".into(),
                ))
            }
            _ => {}
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(McmaError::InvalidArgument(
                "test fraction must be in (0, 1)".into(),
            ));
        }
        self.pipeline.validate()
    }

    fn generate(&self, value: f64, seed: u64) -> Result<Dataset> {
        match &self.template {
            GeneratorTemplate::Synthetic(t) => {
                let mut p = SyntheticParams { seed, ..*t };
                match self.axis {
                    SweepAxis::Wu => p.w_u = value,
                    SweepAxis::N => p.n = value as usize,
                }
                Ok(generate_synthetic(&p)?.0)
            }
            GeneratorTemplate::SemiSynthetic(t) => {
                let mut p = SemiSynthParams { seed, ..t.clone() };
                p.n = value as usize;
                generate_semisynthetic(&p)
            }
        }
    }
}

/// Outcome of one (sweep point, replication, classifier, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub point: usize,
    pub rep: usize,
    pub seed: u64,
    pub classifier: ClassifierKind,
    pub mode: Mode,
    pub outcome: std::result::Result<RepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub auc: f64,
    pub f1: f64,
    pub summary: Simplex3,
    pub abs_error: [f64; N_CLASSES],
    pub check_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

/// Aggregate over replications for one sweep point, classifier and mode.
/// Statistics are `None` when every replication failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub axis: SweepAxis,
    pub value: f64,
    pub classifier: ClassifierKind,
    pub mode: Mode,
    pub n_replications: usize,
    pub n_failed: usize,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub abs_error_mean: Option<[f64; N_CLASSES]>,
    pub abs_error_std: Option<[f64; N_CLASSES]>,
    pub summary_mean: Option<[f64; N_CLASSES]>,
    pub truth: [f64; N_CLASSES],
    pub check_score_mean: Option<f64>,
    pub failures: Vec<RepFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub spec: SweepSpec,
    pub replications: usize,
    pub base_seed: u64,
    pub reports: Vec<MetricReport>,
}

impl SweepReport {
    pub fn find(
        &self,
        value: f64,
        classifier: ClassifierKind,
        mode: Mode,
    ) -> Option<&MetricReport> {
        self.reports
            .iter()
            .find(|r| r.value == value && r.classifier == classifier && r.mode == mode)
    }
}

fn evaluate_cell(
    dataset: &Dataset,
    truth: &Simplex3,
    deconf: Option<&Deconfounded>,
    kind: ClassifierKind,
    mode: Mode,
    config: &PipelineConfig,
    spec: &SweepSpec,
) -> Result<RepMetrics> {
    let split = stratified_split(&dataset.labels, spec.test_fraction, config.seed)?;
    let (features, result, standardize) = match mode {
        Mode::Basic => (
            dataset.bias.to_matrix(),
            pipeline::run_basic(dataset, kind, config)?,
            Vec::new(),
        ),
        Mode::Mcma => {
            let deconf = deconf.expect("confounders inferred for the deconfounded mode");
            let screened = dataset.bias.select_columns(&deconf.screen.kept);
            let features = augment(&screened, &deconf.z);
            let standardize = if kind.is_scale_sensitive() {
                (screened.d()..features.ncols()).collect()
            } else {
                Vec::new()
            };
            (
                features,
                pipeline::run_mcma_with(dataset, deconf, kind, config)?,
                standardize,
            )
        }
    };
    let train_x = features.select_rows(&split.train);
    let test_x = features.select_rows(&split.test);
    let model = classifiers::fit(
        kind,
        &train_x,
        &dataset.labels.select(&split.train),
        &config.train_config(standardize),
    )?;
    let probs = model.predict_proba_rows(&test_x)?;
    let test_labels = dataset.labels.select(&split.test);
    Ok(RepMetrics {
        auc: auc_ovr(&test_labels, &probs, spec.averaging)?,
        f1: f1(
            test_labels.as_slice(),
            &predicted_classes(&probs),
            spec.averaging,
        )?,
        abs_error: abs_error(truth, &result.summary),
        summary: result.summary,
        check_score: result.check.map(|c| c.score),
    })
}

fn run_task(
    spec: &SweepSpec,
    point: usize,
    rep: usize,
    base_seed: u64,
    exec: Exec,
) -> Vec<RepRecord> {
    let seed = base_seed.wrapping_add(rep as u64);
    let config = PipelineConfig {
        seed,
        exec,
        ..spec.pipeline.clone()
    };
    let cells = || {
        spec.kinds
            .iter()
            .flat_map(|&k| spec.modes.iter().map(move |&m| (k, m)))
    };
    let record = |(classifier, mode): (ClassifierKind, Mode),
                  outcome: std::result::Result<RepMetrics, String>| {
        RepRecord {
            point,
            rep,
            seed,
            classifier,
            mode,
            outcome,
        }
    };
    let truth = Simplex3::from_weights(spec.generate_truth(spec.values[point]));
    let dataset = match spec.generate(spec.values[point], seed) {
        Ok(v) => v,
        Err(e) => return cells().map(|c| record(c, Err(e.to_string()))).collect(),
    };
    let deconf = if spec.modes.contains(&Mode::Mcma) {
        Some(infer_substitute_confounders(&dataset.bias, &config).map_err(|e| e.to_string()))
    } else {
        None
    };
    cells()
        .map(|(kind, mode)| {
            let outcome = match (mode, &deconf) {
                (Mode::Mcma, Some(Err(e))) => Err(e.clone()),
                _ => {
                    let d = deconf.as_ref().and_then(|r| r.as_ref().ok());
                    evaluate_cell(&dataset, &truth, d, kind, mode, &config, spec)
                        .map_err(|e| e.to_string())
                }
            };
            record((kind, mode), outcome)
        })
        .collect()
}

fn aggregate(
    spec: &SweepSpec,
    point: usize,
    kind: ClassifierKind,
    mode: Mode,
    records: &[&RepRecord],
) -> MetricReport {
    let ok: Vec<&RepMetrics> = records
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .collect();
    let failures: Vec<RepFailure> = records
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|e| RepFailure {
                rep: r.rep,
                seed: r.seed,
                error: e.clone(),
            })
        })
        .collect();
    let stat =
        |f: &dyn Fn(&RepMetrics) -> f64| mean_std(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let per_class = |f: &dyn Fn(&RepMetrics) -> [f64; N_CLASSES]| {
        let cols: Vec<Option<(f64, f64)>> = (0..N_CLASSES).map(|c| stat(&|m| f(m)[c])).collect();
        cols.iter().all(Option::is_some).then(|| {
            let mean = std::array::from_fn(|c| cols[c].unwrap().0);
            let std = std::array::from_fn(|c| cols[c].unwrap().1);
            (mean, std)
        })
    };
    let auc = stat(&|m| m.auc);
    let f1s = stat(&|m| m.f1);
    let err = per_class(&|m| m.abs_error);
    let summary = per_class(&|m| m.summary.probs());
    let checks: Vec<f64> = ok.iter().filter_map(|m| m.check_score).collect();
    let value = spec.values[point];
    let truth = spec.generate_truth(value);
    MetricReport {
        axis: spec.axis,
        value,
        classifier: kind,
        mode,
        n_replications: records.len(),
        n_failed: failures.len(),
        auc_mean: auc.map(|s| s.0),
        auc_std: auc.map(|s| s.1),
        f1_mean: f1s.map(|s| s.0),
        f1_std: f1s.map(|s| s.1),
        abs_error_mean: err.map(|s| s.0),
        abs_error_std: err.map(|s| s.1),
        summary_mean: summary.map(|s| s.0),
        truth,
        check_score_mean: mean_std(&checks).map(|s| s.0),
        failures,
    }
}

impl SweepSpec {
    fn generate_truth(&self, value: f64) -> [f64; N_CLASSES] {
        match (&self.template, self.axis) {
            (GeneratorTemplate::Synthetic(_), SweepAxis::Wu) => ground_truth_summary(value).probs(),
            (GeneratorTemplate::Synthetic(t), SweepAxis::N) => ground_truth_summary(t.w_u).probs(),
            (GeneratorTemplate::SemiSynthetic(t), _) => t.ground_truth().probs(),
        }
    }
}

/// Runs `reps` replications at every sweep point. Replication `r` uses seed
/// `base_seed + r` at every point, so points differ only in the swept setting.
/// A failing replication is recorded in its report instead of aborting.
pub fn run_replicated(
    spec: &SweepSpec,
    reps: usize,
    base_seed: u64,
    exec: Exec,
) -> Result<SweepReport> {
    if reps == 0 {
        return Err(McmaError::InvalidArgument(
            "at least one replication is required".into(),
        ));
    }
    spec.validate()?;
    let n_points = spec.values.len();
    let records: Vec<RepRecord> = exec
        .map(n_points * reps, |t| {
            run_task(spec, t / reps, t % reps, base_seed, exec)
        })
        .into_iter()
        .flatten()
        .collect();
    let mut reports = Vec::new();
    for point in 0..n_points {
        for &kind in &spec.kinds {
            for &mode in &spec.modes {
                let cell: Vec<&RepRecord> = records
                    .iter()
                    .filter(|r| r.point == point && r.classifier == kind && r.mode == mode)
                    .collect();
                reports.push(aggregate(spec, point, kind, mode, &cell));
            }
        }
    }
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        replications: reps,
        base_seed,
        reports,
    })
}
