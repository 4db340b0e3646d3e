//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 failed predictive check.

mod config;
mod io;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{RunConfig, SEED_ENV};
pub use io::{
    ingest, ingest_csv, ingest_jsonl, parse_association, parse_bias, to_csv, to_jsonl,
    write_dataset, Format,
};

use crate::classifiers::ClassifierKind;
use crate::data::{Dataset, Simplex3, SyntheticParams};
use crate::error::{McmaError, Result};
use crate::eval::{self, GeneratorTemplate, SweepAxis, SweepReport, SweepSpec};
use crate::exec::{init_workers, Exec};
use crate::factor::{CheckResult, FactorModel};
use crate::pipeline::{self, Averaging, Mode, PipelineConfig, PipelineResult, ScreenReport};
use crate::synthgen::{self, estimate_semisynth_params, SemiSynthParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Illustrative 18-study dataset in the six-domain layout.
pub const BUNDLED_FIXTURE: &str = include_str!("../../data/pde5_fixture.csv");

#[derive(Debug, Parser)]
#[command(
    name = "mcma",
    version,
    about = "Deconfounded summary association for meta-analysis of RCTs"
)]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to the config file, then MCMA_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generated dataset and its ground-truth sidecar.
    #[command(subcommand)]
    Generate(GenerateCmd),
    /// Estimate the summary association of a dataset file.
    Analyze(AnalyzeArgs),
    /// Fit the factor model and run the predictive check only.
    Check(CheckArgs),
    /// Replicated experiments over a range of generator settings.
    Sweep(SweepArgs),
    /// Canned experiment configurations.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Subcommand)]
pub enum GenerateCmd {
    Synthetic {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long = "wu", default_value_t = 2.0)]
        w_u: f64,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        format: Option<Format>,
    },
    Semisynthetic {
        /// Dataset whose bias rates and label frequencies are copied.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        format: Option<Format>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AveragingArg {
    OverConfounders,
    PlugInMean,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::OverConfounders => Averaging::OverConfounders,
            AveragingArg::PlugInMean => Averaging::PlugInMean,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    /// Latent dimension of the factor model.
    #[arg(long)]
    pub k: Option<usize>,
    /// Drop a domain whose |correlation| with an earlier one reaches this.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Fraction of each row's entries held out for the check.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub check_reps: Option<usize>,
    #[arg(long, value_enum)]
    pub averaging: Option<AveragingArg>,
    /// Continue when the predictive check fails.
    #[arg(long)]
    pub force: bool,
}

impl PipelineFlags {
    fn apply(&self, mut cfg: PipelineConfig) -> PipelineConfig {
        if let Some(k) = self.k {
            cfg.latent_dim = k;
        }
        if let Some(t) = self.threshold {
            cfg.screen_threshold = t;
        }
        if let Some(h) = self.holdout {
            cfg.holdout_fraction = h;
        }
        if let Some(r) = self.check_reps {
            cfg.check_replications = r;
        }
        if let Some(a) = self.averaging {
            cfg.averaging = a.into();
        }
        cfg.force |= self.force;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    pub path: PathBuf,
    /// Defaults to the file extension (.jsonl / .ndjson, otherwise CSV).
    #[arg(long)]
    pub format: Option<Format>,
    /// Expected bias columns, comma separated; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub domains: Option<Vec<String>>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let format = self.format.unwrap_or_else(|| Format::from_path(&self.path));
        ingest(&self.path, format, self.domains.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub classifier: Option<ClassifierKind>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Wu,
    N,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GeneratorArg {
    Synthetic,
    Semisynthetic,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputFlags {
    /// Replications per sweep point.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also write the full JSON report.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Directory for long-format plotting CSVs.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, value_enum, default_value = "synthetic")]
    pub generator: GeneratorArg,
    /// Source dataset for the semi-synthetic generator (default: bundled fixture).
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long = "wu", default_value_t = 2.0)]
    pub w_u: f64,
    #[arg(long, value_delimiter = ',', default_value = "mnlogit")]
    pub classifiers: Vec<ClassifierKind>,
    #[arg(long, value_delimiter = ',', default_value = "basic,mcma")]
    pub modes: Vec<Mode>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// All classifiers, both modes, N=1000, D=10, w_u=2.
    Table1,
    /// All classifiers, both modes, semi-synthetic N=100 from the fixture.
    Table2,
    /// MNLogit, both modes, w_u from 0 to 2 in steps of 0.2.
    Fig3,
    /// All classifiers, both modes, N in {100, 500, 1000}.
    Fig456,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Source dataset for table2 (default: bundled fixture).
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    path: String,
    n: usize,
    d: usize,
    domain_names: Vec<String>,
}

impl DatasetSummary {
    fn of(path: &Path, ds: &Dataset) -> Self {
        DatasetSummary {
            path: path.display().to_string(),
            n: ds.n(),
            d: ds.d(),
            domain_names: ds.bias.domain_names().to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
struct AnalyzeReport<'a> {
    schema_version: u32,
    seed: u64,
    config: &'a RunConfig,
    dataset: DatasetSummary,
    study_ids: &'a [String],
    result: &'a PipelineResult,
}

#[derive(Debug, Serialize)]
struct CheckReport<'a> {
    schema_version: u32,
    seed: u64,
    config: &'a PipelineConfig,
    dataset: DatasetSummary,
    screen: &'a ScreenReport,
    check: CheckResult,
    factor: &'a FactorModel,
}

#[derive(Debug, Serialize)]
struct TruthSidecar<'a> {
    ground_truth: Simplex3,
    generator: GeneratorTemplate,
    #[serde(skip_serializing_if = "Option::is_none")]
    confounders: Option<&'a [f64]>,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &McmaError) -> i32 {
    match e {
        McmaError::CheckFailed(_) => EXIT_CHECK_FAILED,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = file.resolve_seed(cli.seed)?;
    match cli.command {
        Command::Generate(cmd) => generate(cmd, seed, out),
        Command::Analyze(args) => analyze(args, file, seed, out),
        Command::Check(args) => check(args, &file, seed, out),
        Command::Sweep(args) => sweep(args, &file, seed, out, err),
        Command::Reproduce(args) => reproduce(args, &file, seed, out, err),
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("truth.json")
}

fn generate(cmd: GenerateCmd, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let (dataset, sidecar_text, path, format) = match cmd {
        GenerateCmd::Synthetic {
            n,
            d,
            w_u,
            out: path,
            format,
        } => {
            let params = SyntheticParams { n, d, w_u, seed };
            let (ds, truth) = synthgen::generate_synthetic(&params)?;
            let sidecar = TruthSidecar {
                ground_truth: truth.summary,
                generator: GeneratorTemplate::Synthetic(params),
                confounders: Some(&truth.u),
            };
            (ds, to_json(&sidecar)?, path, format)
        }
        GenerateCmd::Semisynthetic {
            from,
            n,
            out: path,
            format,
        } => {
            let params = SemiSynthParams {
                n,
                seed,
                ..source_params(from.as_deref())?
            };
            let ds = synthgen::generate_semisynthetic(&params)?;
            let sidecar = TruthSidecar {
                ground_truth: params.ground_truth(),
                generator: GeneratorTemplate::SemiSynthetic(params),
                confounders: None,
            };
            (ds, to_json(&sidecar)?, path, format)
        }
    };
    let format = format.unwrap_or_else(|| Format::from_path(&path));
    write_dataset(&dataset, &path, format)?;
    let side = sidecar_path(&path);
    std::fs::write(&side, sidecar_text)?;
    writeln!(
        out,
        "wrote {} ({} rows) and {}",
        path.display(),
        dataset.n(),
        side.display()
    )?;
    Ok(EXIT_OK)
}

fn source_params(from: Option<&Path>) -> Result<SemiSynthParams> {
    let source = match from {
        Some(p) => ingest(p, Format::from_path(p), None)?,
        None => ingest_csv(BUNDLED_FIXTURE, None, Path::new("<bundled fixture>"))?,
    };
    Ok(estimate_semisynth_params(&source))
}

fn analyze(args: AnalyzeArgs, mut file: RunConfig, seed: u64, out: &mut dyn Write) -> Result<i32> {
    if let Some(m) = args.mode {
        file.mode = m;
    }
    if let Some(c) = args.classifier {
        file.classifier = c;
    }
    file.seed = Some(seed);
    file.pipeline = PipelineConfig {
        seed,
        ..args.pipeline.apply(file.pipeline)
    };
    file.pipeline.validate()?;
    let dataset = args.data.load()?;
    let result = pipeline::run(&dataset, file.mode, file.classifier, &file.pipeline)?;
    let report = AnalyzeReport {
        schema_version: eval::SCHEMA_VERSION,
        seed,
        config: &file,
        dataset: DatasetSummary::of(&args.data.path, &dataset),
        study_ids: &dataset.study_ids,
        result: &result,
    };
    emit(&to_json(&report)?, args.out.as_deref(), out)?;
    Ok(EXIT_OK)
}

fn check(args: CheckArgs, file: &RunConfig, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = PipelineConfig {
        seed,
        ..args.pipeline.apply(file.pipeline.clone())
    };
    cfg.validate()?;
    let dataset = args.data.load()?;
    // the verdict is reported, not enforced, here
    let requested_force = cfg.force;
    cfg.force = true;
    let deconf = pipeline::infer_substitute_confounders(&dataset.bias, &cfg)?;
    cfg.force = requested_force;
    let report = CheckReport {
        schema_version: eval::SCHEMA_VERSION,
        seed,
        config: &cfg,
        dataset: DatasetSummary::of(&args.data.path, &dataset),
        screen: &deconf.screen,
        check: deconf.check,
        factor: &deconf.factor,
    };
    emit(&to_json(&report)?, args.out.as_deref(), out)?;
    Ok(if deconf.check.passed || requested_force {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn setup_workers(jobs: Option<usize>, err: &mut dyn Write) -> Result<Exec> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(McmaError::InvalidArgument("--jobs must be >= 1".into()));
        }
        if j == 1 {
            return Ok(Exec::Sequential);
        }
        if !Exec::is_parallel_available() {
            writeln!(
                err,
                "warning: built without parallel support; --jobs ignored"
            )?;
        } else if !init_workers(j) {
            writeln!(
                err,
                "warning: worker pool already initialised; --jobs ignored"
            )?;
        }
    }
    Ok(Exec::Parallel)
}

fn run_and_write(
    spec: &SweepSpec,
    output: &OutputFlags,
    file: &RunConfig,
    seed: u64,
    primary: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let exec = setup_workers(output.jobs.or(file.jobs), err)?;
    let reps = output.reps.or(file.reps).unwrap_or(10);
    let report = eval::run_replicated(spec, reps, seed, exec)?;
    report_failures(&report, err)?;
    let plots = eval::plot_data(&report)?;
    let csv = match primary {
        Some(name) => plots
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .expect("known plot file"),
        None => eval::flat_csv(&report)?,
    };
    emit(&csv, output.out.as_deref(), out)?;
    if let Some(p) = &output.json {
        std::fs::write(p, to_json(&report)?)?;
    }
    if let Some(dir) = &output.plot_data {
        std::fs::create_dir_all(dir)?;
        for (name, text) in plots {
            std::fs::write(dir.join(name), text)?;
        }
    }
    Ok(EXIT_OK)
}

fn report_failures(report: &SweepReport, err: &mut dyn Write) -> Result<()> {
    for m in report.reports.iter().filter(|m| m.n_failed > 0) {
        writeln!(
            err,
            "warning: {}={} {} {}: {}/{} replications failed ({})",
            m.axis.name(),
            m.value,
            m.classifier,
            m.mode.name(),
            m.n_failed,
            m.n_replications,
            m.failures[0].error
        )?;
    }
    Ok(())
}

fn sweep(
    args: SweepArgs,
    file: &RunConfig,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let template = match args.generator {
        GeneratorArg::Synthetic => GeneratorTemplate::Synthetic(SyntheticParams {
            n: args.n,
            d: args.d,
            w_u: args.w_u,
            seed,
        }),
        GeneratorArg::Semisynthetic => GeneratorTemplate::SemiSynthetic(SemiSynthParams {
            n: args.n,
            ..source_params(args.from.as_deref())?
        }),
    };
    let spec = SweepSpec {
        axis: match args.axis {
            AxisArg::Wu => SweepAxis::Wu,
            AxisArg::N => SweepAxis::N,
        },
        values: args.values,
        template,
        kinds: args.classifiers,
        modes: args.modes,
        pipeline: args.pipeline.apply(file.pipeline.clone()),
        averaging: Default::default(),
        test_fraction: 0.2,
    };
    run_and_write(&spec, &args.output, file, seed, None, out, err)
}

/// Canned sweep for a named experiment. The predictive check is recorded but
/// not enforced, since binary bias indicators rarely pass it.
pub fn experiment_spec(
    experiment: Experiment,
    semisynth_source: Option<&Path>,
) -> Result<SweepSpec> {
    let pipeline = PipelineConfig {
        force: true,
        ..Default::default()
    };
    let synthetic = |n, w_u| {
        GeneratorTemplate::Synthetic(SyntheticParams {
            n,
            d: 10,
            w_u,
            seed: 0,
        })
    };
    let both = vec![Mode::Basic, Mode::Mcma];
    let all = ClassifierKind::ALL.to_vec();
    let spec = match experiment {
        Experiment::Table1 => SweepSpec {
            axis: SweepAxis::Wu,
            values: vec![2.0],
            template: synthetic(1000, 2.0),
            kinds: all,
            modes: both,
            pipeline,
            averaging: Default::default(),
            test_fraction: 0.2,
        },
        Experiment::Table2 => SweepSpec {
            axis: SweepAxis::N,
            values: vec![100.0],
            template: GeneratorTemplate::SemiSynthetic(SemiSynthParams {
                n: 100,
                ..source_params(semisynth_source)?
            }),
            kinds: all,
            modes: both,
            pipeline,
            averaging: Default::default(),
            test_fraction: 0.2,
        },
        Experiment::Fig3 => SweepSpec {
            axis: SweepAxis::Wu,
            values: (0..=10).map(|i| f64::from(i) * 0.2).collect(),
            template: synthetic(1000, 0.0),
            kinds: vec![ClassifierKind::MnLogit],
            modes: both,
            pipeline,
            averaging: Default::default(),
            test_fraction: 0.2,
        },
        Experiment::Fig456 => SweepSpec {
            axis: SweepAxis::N,
            values: vec![100.0, 500.0, 1000.0],
            template: synthetic(1000, 2.0),
            kinds: all,
            modes: both,
            pipeline,
            averaging: Default::default(),
            test_fraction: 0.2,
        },
    };
    Ok(spec)
}

fn reproduce(
    args: ReproduceArgs,
    file: &RunConfig,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let spec = experiment_spec(args.experiment, args.from.as_deref())?;
    let primary = match args.experiment {
        Experiment::Table1 | Experiment::Table2 => None,
        Experiment::Fig3 => Some("metrics_by_w_u.csv"),
        Experiment::Fig456 => Some("abs_error_by_n.csv"),
    };
    run_and_write(&spec, &args.output, file, seed, primary, out, err)
}
