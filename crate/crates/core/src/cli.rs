//! Command-line front end: configuration, the `preprocess`, `run` and
//! `report` commands, and the experiment report format.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, MissingTokens, SchemaSpec};
use crate::metrics::{pool_folds, FoldOutcome, MetricsReport, Timings};
use crate::model::{derive_stream, ColumnKind, Dataset, RngStream, DEFAULT_SEED};
use crate::preprocess::{self, PreprocessOptions, Preprocessed};
use crate::select::{
    self, Algorithm, CvOptions, GridEntry, GridSpec, Hyper, RegConvention, TrainedModel, LR_GRID_NOTE,
};
use crate::smote::{self, BalanceReport, SmoteConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const FIGURE_IDS: [&str; 9] = [
    "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "table3",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Select(#[from] select::SelectError),
    #[error(transparent)]
    Smote(#[from] smote::SmoteError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} experiment cells failed")]
    CellsFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceMode {
    None,
    /// Oversample the whole dataset once, before tuning and evaluation.
    #[default]
    Whole,
    /// Oversample only the training part of every fold.
    PerFold,
}

/// Which regimes to evaluate when balancing is on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeSelection {
    #[default]
    Both,
    Unbalanced,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unbalanced,
    Balanced,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Unbalanced => "unbalanced",
            Regime::Balanced => "balanced",
        })
    }
}

/// Fully resolved experiment configuration, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub seed: u64,
    pub unknown_is_missing: bool,
    pub normalize: bool,
    pub smote_k: usize,
    pub smote_round_categorical: bool,
    pub balance: BalanceMode,
    pub regimes: RegimeSelection,
    pub algorithms: Vec<Algorithm>,
    pub tuning_k: usize,
    pub eval_k: usize,
    pub sample_frac: f64,
    pub reg_convention: RegConvention,
    pub save_models: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data/stroke.csv"),
            seed: DEFAULT_SEED,
            unknown_is_missing: false,
            normalize: false,
            smote_k: 5,
            smote_round_categorical: false,
            balance: BalanceMode::Whole,
            regimes: RegimeSelection::Both,
            algorithms: Algorithm::ALL.to_vec(),
            tuning_k: 3,
            eval_k: 10,
            sample_frac: 1.0,
            reg_convention: RegConvention::Lambda,
            save_models: true,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn smote(&self) -> SmoteConfig {
        SmoteConfig {
            k_neighbors: self.smote_k,
            round_categorical: self.smote_round_categorical,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.eval_k < 2 {
            return usage(format!("eval-k must be at least 2, got {}", self.eval_k));
        }
        if !(2..=10).contains(&self.tuning_k) {
            return usage(format!("tuning-k must be between 2 and 10, got {}", self.tuning_k));
        }
        if self.algorithms.is_empty() {
            return usage("no algorithms selected".into());
        }
        if !(self.sample_frac > 0.0 && self.sample_frac <= 1.0) {
            return usage(format!("sample-frac must be in (0, 1], got {}", self.sample_frac));
        }
        if self.smote_k == 0 {
            return usage("smote-k must be positive".into());
        }
        Ok(())
    }

    /// Regimes evaluated under this configuration, in report order.
    pub fn regime_list(&self) -> Vec<Regime> {
        if self.balance == BalanceMode::None {
            return vec![Regime::Unbalanced];
        }
        match self.regimes {
            RegimeSelection::Both => vec![Regime::Unbalanced, Regime::Balanced],
            RegimeSelection::Unbalanced => vec![Regime::Unbalanced],
            RegimeSelection::Balanced => vec![Regime::Balanced],
        }
    }
}

/// Flags shared by `preprocess` and `run`; any flag given overrides the
/// config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat TOML config file; flags take priority over its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub balance: Option<BalanceMode>,
    #[arg(long, value_enum)]
    pub regimes: Option<RegimeSelection>,
    /// Comma-separated subset of dt, rf, svm, nb, lr.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub algorithms: Option<Vec<String>>,
    #[arg(long)]
    pub tuning_k: Option<usize>,
    #[arg(long)]
    pub eval_k: Option<usize>,
    /// Stratified fraction of the preprocessed rows to keep.
    #[arg(long)]
    pub sample_frac: Option<f64>,
    #[arg(long)]
    pub smote_k: Option<usize>,
    /// Min-max scale continuous features after encoding.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Treat the `Unknown` token as missing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unknown_is_missing: Option<bool>,
    #[arg(long, value_enum)]
    pub reg_convention: Option<RegConventionArg>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub save_models: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegConventionArg {
    Lambda,
    Inverse,
}

impl From<RegConventionArg> for RegConvention {
    fn from(a: RegConventionArg) -> Self {
        match a {
            RegConventionArg::Lambda => RegConvention::Lambda,
            RegConventionArg::Inverse => RegConvention::Inverse,
        }
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.data {
            cfg.data = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.balance {
            cfg.balance = v;
        }
        if let Some(v) = self.regimes {
            cfg.regimes = v;
        }
        if let Some(list) = &self.algorithms {
            cfg.algorithms = list
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| Algorithm::from_str(s).map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.tuning_k {
            cfg.tuning_k = v;
        }
        if let Some(v) = self.eval_k {
            cfg.eval_k = v;
        }
        if let Some(v) = self.sample_frac {
            cfg.sample_frac = v;
        }
        if let Some(v) = self.smote_k {
            cfg.smote_k = v;
        }
        if let Some(v) = self.normalize {
            cfg.normalize = v;
        }
        if let Some(v) = self.unknown_is_missing {
            cfg.unknown_is_missing = v;
        }
        if let Some(v) = self.reg_convention {
            cfg.reg_convention = v.into();
        }
        if let Some(v) = self.save_models {
            cfg.save_models = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "strokepred", version, about = "Stroke prediction experiment pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean and encode the dataset; write it with its encoding map,
    /// correlations and missing-value profile.
    Preprocess(ConfigArgs),
    /// Tune, evaluate and report every selected algorithm in every regime.
    Run(ConfigArgs),
    /// Extract one figure's data table from a stored report.
    Report {
        /// Path to report.json written by `run`.
        #[arg(long)]
        report: PathBuf,
        /// fig3 .. fig10 or table3.
        #[arg(long)]
        figure: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Parse arguments, dispatch, and map the outcome to an exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Preprocess(a) => a.resolve().and_then(|c| cmd_preprocess(&c).map(|_| ())),
        Command::Run(a) => a.resolve().and_then(|c| {
            let report = cmd_run(&c)?;
            let failed = report.results.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                Err(CliError::CellsFailed {
                    failed,
                    total: report.results.len(),
                })
            } else {
                Ok(())
            }
        }),
        Command::Report { report, figure, out } => cmd_report(report, figure, out).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(config: &ExperimentConfig) -> Result<Preprocessed, CliError> {
    if !config.data.is_file() {
        return Err(CliError::Usage(format!(
            "input file not found: {}",
            config.data.display()
        )));
    }
    let table = ingest::read_csv(&config.data, MissingTokens::new(config.unknown_is_missing))?;
    let schema = ingest::validate_schema(&table, &SchemaSpec::default())?;
    let opts = PreprocessOptions {
        normalize: config.normalize,
        ..PreprocessOptions::default()
    };
    Ok(preprocess::preprocess(&table, &schema, &opts)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Files written by [`cmd_preprocess`].
#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub summary: Preprocessed,
    pub files: Vec<PathBuf>,
}

pub fn cmd_preprocess(config: &ExperimentConfig) -> Result<PreprocessOutput, CliError> {
    let summary = load(config)?;
    create_dir(&config.out)?;
    let data_path = config.out.join("preprocessed.csv");
    let file = fs::File::create(&data_path).map_err(io_err(&data_path))?;
    preprocess::write_dataset_csv(summary.dataset(), std::io::BufWriter::new(file))?;

    let encoding = config.out.join("encoding.json");
    write_json(&encoding, &summary.encoding)?;
    let correlation = config.out.join("correlation.json");
    write_json(&correlation, &summary.correlation)?;
    let missing = config.out.join("missing_profile.json");
    write_json(&missing, &summary.missing_profile)?;
    let report = config.out.join("preprocess_report.json");
    write_json(&report, &summary)?;
    info!(
        "preprocessed {} -> {} rows ({} stroke / {} no stroke)",
        summary.input_rows, summary.output_rows, summary.stroke, summary.no_stroke
    );
    Ok(PreprocessOutput {
        summary,
        files: vec![data_path, encoding, correlation, missing, report],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tool: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub started_unix: u64,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub fraction: f64,
    pub rows: usize,
    pub stroke: usize,
    pub no_stroke: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub best: Hyper,
    pub best_index: usize,
    pub best_f_macro: f64,
    pub tuning_k: usize,
    pub tuning_secs: f64,
    pub combinations: Vec<GridEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub rows: usize,
    pub metrics: MetricsReport,
}

/// Outcome for one algorithm in one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub regime: Regime,
    pub rows: usize,
    pub tuning: Option<Tuning>,
    pub pooled: Option<MetricsReport>,
    pub folds: Vec<FoldReport>,
    pub model_file: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub environment: Environment,
    pub config: ExperimentConfig,
    pub preprocessing: Preprocessed,
    pub sample: Option<SampleSummary>,
    pub balance: Option<BalanceReport>,
    pub grid_sizes: BTreeMap<Algorithm, usize>,
    pub notes: Vec<String>,
    pub results: Vec<AlgorithmResult>,
}

impl PartialEq for Preprocessed {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

fn zero_timings(t: &mut Timings) {
    *t = Timings::default();
}

impl ExperimentReport {
    /// Copy with wall-clock fields cleared, for run-to-run comparison.
    pub fn normalized(&self) -> Self {
        let mut r = self.clone();
        r.environment.started_unix = 0;
        r.environment.elapsed_secs = 0.0;
        r.environment.threads = 0;
        for res in &mut r.results {
            if let Some(t) = &mut res.tuning {
                t.tuning_secs = 0.0;
            }
            if let Some(p) = &mut res.pooled {
                zero_timings(&mut p.timings);
            }
            for f in &mut res.folds {
                zero_timings(&mut f.metrics.timings);
            }
        }
        r
    }

    pub fn result(&self, algorithm: Algorithm, regime: Regime) -> Option<&AlgorithmResult> {
        self.results
            .iter()
            .find(|r| r.algorithm == algorithm && r.regime == regime)
    }
}

fn class_summary(data: &Dataset, fraction: f64) -> SampleSummary {
    let (no_stroke, stroke) = data.class_counts();
    SampleSummary {
        fraction,
        rows: data.row_count(),
        stroke,
        no_stroke,
    }
}

/// Tune one algorithm on `data`, then evaluate the winner with `eval_k`
/// folds and pool the folds.
fn run_cell(
    algorithm: Algorithm,
    regime: Regime,
    data: &Dataset,
    config: &ExperimentConfig,
    cv: &CvOptions,
    eval_plan: &select::FoldPlan,
    stream: &RngStream,
) -> Result<(AlgorithmResult, Option<TrainedModel>), CliError> {
    let grid = GridSpec {
        reg_convention: config.reg_convention,
    }
    .combinations(algorithm);
    info!("{regime}/{algorithm}: tuning {} combinations", grid.len());
    let tuned = select::grid_search(&grid, data, config.tuning_k, &stream.child("tune"), cv)?;
    info!(
        "{regime}/{algorithm}: best {:?} (macro F {:.4})",
        tuned.best, tuned.best_score
    );
    let cv_result = select::cross_validate(&tuned.best, data, eval_plan, &stream.child("eval"), cv)?;
    let pooled = pool_folds(&cv_result.folds)?;
    let scalars = crate::metrics::compute_metrics(&pooled.confusion)?;
    let mut timings = pooled.timings;
    timings.tuning_secs = tuned.tuning_secs;
    let pooled_report = MetricsReport {
        confusion: pooled.confusion,
        scalars,
        roc: pooled.roc,
        auc: Some(pooled.auc),
        timings,
    };
    let folds = cv_result
        .folds
        .iter()
        .map(|f: &FoldOutcome| -> Result<FoldReport, CliError> {
            let mut m = MetricsReport::from_parts(f.confusion, &f.scores, &f.labels, f.timings)?;
            // Per-fold curves are large and redundant with the pooled one.
            m.roc.clear();
            Ok(FoldReport {
                fold: f.fold,
                rows: f.rows.len(),
                metrics: m,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let model = if config.save_models {
        let mut train = data.clone();
        let mut s = stream.child("final");
        if let Some(cfg) = &cv.smote_in_fold {
            train = smote::oversample(&train, cfg, &mut s.child("smote"))?;
        }
        Some(tuned.best.fit_model(&train, &mut s)?)
    } else {
        None
    };
    Ok((
        AlgorithmResult {
            algorithm,
            regime,
            rows: data.row_count(),
            tuning: Some(Tuning {
                best: tuned.best,
                best_index: tuned.best_index,
                best_f_macro: tuned.best_score,
                tuning_k: tuned.tuning_k,
                tuning_secs: tuned.tuning_secs,
                combinations: tuned.entries,
            }),
            pooled: Some(pooled_report),
            folds,
            model_file: None,
            error: None,
        },
        model,
    ))
}

/// Run the full experiment and write `report.json`, figure tables and
/// models under `config.out`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    config.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let preprocessed = load(config)?;
    let master = derive_stream(config.seed, "experiment")?;

    let mut data = preprocessed.dataset().clone();
    let sample = if config.sample_frac < 1.0 {
        data = select::stratified_subsample(&data, config.sample_frac, &mut master.child("sample"))?;
        Some(class_summary(&data, config.sample_frac))
    } else {
        None
    };

    let regimes = config.regime_list();
    let mut balanced = None;
    let mut balance = None;
    let mut notes = vec![
        LR_GRID_NOTE.to_string(),
        "pooled metrics: fold confusion matrices summed and out-of-fold scores concatenated into one ROC".to_string(),
    ];
    if regimes.contains(&Regime::Balanced) {
        match config.balance {
            BalanceMode::Whole => {
                let b = smote::oversample(&data, &config.smote(), &mut master.child("smote"))?;
                balance = Some(BalanceReport::new(&data, &b));
                balanced = Some(b);
            }
            BalanceMode::PerFold => {
                notes.push("balanced regime oversamples each training fold; held-out folds are untouched".into());
            }
            BalanceMode::None => {}
        }
    }

    create_dir(&config.out)?;
    let models_dir = config.out.join("models");
    if config.save_models {
        create_dir(&models_dir)?;
    }

    let spec = GridSpec {
        reg_convention: config.reg_convention,
    };
    let grid_sizes = Algorithm::ALL
        .iter()
        .map(|&a| (a, spec.combinations(a).len()))
        .collect();

    let mut results = Vec::new();
    for regime in regimes {
        let (cell_data, cv) = match (regime, config.balance) {
            (Regime::Balanced, BalanceMode::Whole) => (balanced.as_ref().unwrap_or(&data), CvOptions::default()),
            (Regime::Balanced, BalanceMode::PerFold) => (
                &data,
                CvOptions {
                    smote_in_fold: Some(config.smote()),
                },
            ),
            _ => (&data, CvOptions::default()),
        };
        let regime_stream = master.child(&regime.to_string());
        let plan = select::stratified_kfold(cell_data.labels(), config.eval_k, &mut regime_stream.child("folds"))?;
        for &algorithm in &config.algorithms {
            let stream = regime_stream.child(algorithm.code());
            match run_cell(algorithm, regime, cell_data, config, &cv, &plan, &stream) {
                Ok((mut res, model)) => {
                    if let Some(m) = model {
                        let name = format!("{regime}_{algorithm}.json");
                        write_json(&models_dir.join(&name), &m)?;
                        res.model_file = Some(format!("models/{name}"));
                    }
                    results.push(res);
                }
                Err(e) => {
                    warn!("{regime}/{algorithm} failed: {e}");
                    results.push(AlgorithmResult {
                        algorithm,
                        regime,
                        rows: cell_data.row_count(),
                        tuning: None,
                        pooled: None,
                        folds: Vec::new(),
                        model_file: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }

    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        environment: Environment {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
            started_unix,
            elapsed_secs: started.elapsed().as_secs_f64(),
        },
        config: config.clone(),
        preprocessing: preprocessed,
        sample,
        balance,
        grid_sizes,
        notes,
        results,
    };
    write_json(&config.out.join("report.json"), &report)?;
    let fig_dir = config.out.join("figures");
    create_dir(&fig_dir)?;
    for id in FIGURE_IDS {
        write_tables(&fig_dir, figure_tables(&report, id)?)?;
    }
    Ok(report)
}

fn write_tables(dir: &Path, tables: Vec<(String, String)>) -> Result<Vec<PathBuf>, CliError> {
    tables
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))?;
            Ok(path)
        })
        .collect()
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pooled_rows(report: &ExperimentReport) -> impl Iterator<Item = (&AlgorithmResult, &MetricsReport)> {
    report
        .results
        .iter()
        .filter_map(|r| r.pooled.as_ref().map(|p| (r, p)))
}

/// `(file name, contents)` pairs holding the data behind one figure.
pub fn figure_tables(report: &ExperimentReport, figure: &str) -> Result<Vec<(String, String)>, CliError> {
    let pre = &report.preprocessing;
    let f = |v: f64| v.to_string();
    let tables = match figure {
        "fig3" => vec![(
            "fig3_correlation.csv".into(),
            csv_table(
                &["feature", "pearson_r"],
                pre.correlation.iter().map(|(n, r)| vec![n.clone(), f(*r)]),
            )?,
        )],
        "fig4" => vec![(
            "fig4_missing.csv".into(),
            csv_table(
                &["column", "missing", "percent"],
                pre.missing_profile.per_column.iter().map(|(c, n)| {
                    vec![
                        c.clone(),
                        n.to_string(),
                        f(pre.missing_profile.percent(c).unwrap_or(0.0)),
                    ]
                }),
            )?,
        )],
        "fig5" => {
            let mut rows = Vec::new();
            let base = report
                .sample
                .as_ref()
                .map(|s| (s.no_stroke, s.stroke))
                .unwrap_or((pre.no_stroke, pre.stroke));
            rows.push(("before", base.0, base.1));
            if let Some(b) = &report.balance {
                rows.push(("after", b.after_no_stroke, b.after_stroke));
            }
            vec![(
                "fig5_balance.csv".into(),
                csv_table(
                    &["stage", "no_stroke", "stroke", "no_stroke_pct", "stroke_pct"],
                    rows.into_iter().map(|(s, n, p)| {
                        let t = (n + p).max(1) as f64;
                        vec![
                            s.into(),
                            n.to_string(),
                            p.to_string(),
                            f(100.0 * n as f64 / t),
                            f(100.0 * p as f64 / t),
                        ]
                    }),
                )?,
            )]
        }
        "fig6" => vec![(
            "fig6_accuracy.csv".into(),
            csv_table(
                &["algorithm", "regime", "accuracy"],
                pooled_rows(report)
                    .map(|(r, p)| vec![r.algorithm.to_string(), r.regime.to_string(), f(p.scalars.accuracy)]),
            )?,
        )],
        "fig7" => vec![(
            "fig7_confusion.csv".into(),
            csv_table(
                &["algorithm", "regime", "tp", "fn", "fp", "tn", "stroke_recall"],
                pooled_rows(report).map(|(r, p)| {
                    let c = &p.confusion;
                    vec![
                        r.algorithm.to_string(),
                        r.regime.to_string(),
                        c.tp.to_string(),
                        c.fn_.to_string(),
                        c.fp.to_string(),
                        c.tn.to_string(),
                        f(p.scalars.r_stroke),
                    ]
                }),
            )?,
        )],
        "fig8" => vec![(
            "fig8_precision_recall_f.csv".into(),
            csv_table(
                &[
                    "algorithm", "regime", "p_stroke", "p_no_stroke", "p_macro", "r_stroke", "r_no_stroke",
                    "r_macro", "f_stroke", "f_no_stroke", "f_macro",
                ],
                pooled_rows(report).map(|(r, p)| {
                    let s = &p.scalars;
                    let mut row = vec![r.algorithm.to_string(), r.regime.to_string()];
                    row.extend(
                        [
                            s.p_stroke, s.p_no_stroke, s.p_macro, s.r_stroke, s.r_no_stroke, s.r_macro, s.f_stroke,
                            s.f_no_stroke, s.f_macro,
                        ]
                        .map(f),
                    );
                    row
                }),
            )?,
        )],
        "fig9" => {
            let mut out = vec![(
                "fig9_auc.csv".into(),
                csv_table(
                    &["algorithm", "regime", "auc"],
                    pooled_rows(report).map(|(r, p)| {
                        vec![
                            r.algorithm.to_string(),
                            r.regime.to_string(),
                            p.auc.map(f).unwrap_or_default(),
                        ]
                    }),
                )?,
            )];
            for (r, p) in pooled_rows(report) {
                out.push((
                    format!("fig9_roc_{}_{}.csv", r.regime, r.algorithm),
                    csv_table(
                        &["fpr", "tpr", "threshold"],
                        p.roc.iter().map(|pt| vec![f(pt.fpr), f(pt.tpr), f(pt.threshold)]),
                    )?,
                ));
            }
            out
        }
        "fig10" => vec![(
            "fig10_timings.csv".into(),
            csv_table(
                &["algorithm", "regime", "tuning_secs", "fit_secs", "validate_secs"],
                pooled_rows(report).map(|(r, p)| {
                    vec![
                        r.algorithm.to_string(),
                        r.regime.to_string(),
                        f(p.timings.tuning_secs),
                        f(p.timings.fit_secs),
                        f(p.timings.validate_secs),
                    ]
                }),
            )?,
        )],
        "table3" => {
            let best: Vec<serde_json::Value> = report
                .results
                .iter()
                .filter_map(|r| {
                    r.tuning.as_ref().map(|t| {
                        serde_json::json!({
                            "algorithm": r.algorithm,
                            "regime": r.regime,
                            "best": t.best,
                            "mean_f_macro": t.best_f_macro,
                            "combinations": t.combinations.len(),
                        })
                    })
                })
                .collect();
            vec![("table3_optimal_hyperparameters.json".into(), serde_json::to_string_pretty(&best)? + "\n")]
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown figure `{other}`; valid ids: {}",
                FIGURE_IDS.join(", ")
            )))
        }
    };
    Ok(tables)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("report not found: {}", path.display())));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Write the tables behind `figure` into `out` and return their paths.
pub fn cmd_report(report: &Path, figure: &str, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !FIGURE_IDS.contains(&figure) {
        return Err(CliError::Usage(format!(
            "unknown figure `{figure}`; valid ids: {}",
            FIGURE_IDS.join(", ")
        )));
    }
    let report = read_report(report)?;
    create_dir(out)?;
    write_tables(out, figure_tables(&report, figure)?)
}

/// Column kinds of a preprocessed dataset, for reading it back.
pub fn column_kinds(data: &Dataset) -> Vec<(String, ColumnKind)> {
    data.columns().iter().map(|c| (c.name.clone(), c.kind)).collect()
}
