//! Command-line front end.
//!
//! Every subcommand writes one JSON report (or, for `asym`, a CSV grid) to
//! `--output` or stdout. Covariate indices are 0-based in JSON and 1-based in
//! the one-line summaries printed to stderr. Reports echo the parsed
//! configuration and the argument list without `--threads` and `--output`;
//! rerunning those arguments reproduces the report byte for byte.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on computational errors,
//! which are also reported on stdout as `{"error": {"kind", "message"}}`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{j_critical_value, LimitLaw};
use crate::bootstrap::{BootstrapDistribution, LlaProcess, MultiplierBootstrap, Scale, MIN_REPS};
use crate::data::{read_matrix, read_vector, Dataset, ResponseSpec};
use crate::datagen::{sample_null, CovarianceModel, NoiseModel, PRESET_NAMES};
use crate::error::Error;
use crate::experiments::{
    post_lasso_discovery, run_joint_null_check, run_null_distribution, run_sdp_study, run_size_study,
    sdp_dataset, sdp_run_stream, ExperimentConfig, EXPERIMENT_PRESETS,
};
use crate::inference::{
    check_discovery_with, exogeneity_residuals, exogeneity_test_from, DiscoveryOptions, ExoFit, ExoNull, ExoResiduals,
};
use crate::regression::{DEFAULT_FOLDS, DEFAULT_SCAD_A};
use crate::rng::{Label, RngStream};
use crate::spurious::{compute_max_spurious, compute_spurious_sequence};
use crate::subset_search::{SearchMethod, DEFAULT_SCREEN_SIZE};

pub const THREADS_ENV: &str = "SPURCORR_THREADS";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "spurcorr", version, about = "Maximum spurious correlation toolkit")]
pub struct Cli {
    /// Worker threads; falls back to SPURCORR_THREADS, then to all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Maximum spurious correlation between the response and `s` covariates.
    Maxcorr(MaxcorrArgs),
    /// Multiplier-bootstrap null distribution and its upper quantile.
    NullQuantile(NullQuantileArgs),
    /// Whether a fit beats the spurious-correlation quantile.
    CheckDiscovery(CheckDiscoveryArgs),
    /// Exogeneity test on the residuals of a sparse fit.
    ExoTest(ExoTestArgs),
    /// Limit-law CDF grid.
    Asym(AsymArgs),
    /// Simulated data sets and simulation studies.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Numeric CSV, one observation per row.
    #[arg(long)]
    pub data: PathBuf,
    /// The first row of every CSV holds column names.
    #[arg(long)]
    pub header: bool,
    /// Single-column response file.
    #[arg(long, conflicts_with = "response_col")]
    pub response: Option<PathBuf>,
    /// Response column of the data file, by name or 0-based index.
    #[arg(long)]
    pub response_col: Option<String>,
}

impl DataArgs {
    fn spec(&self) -> ResponseSpec {
        match (&self.response, &self.response_col) {
            (Some(p), _) => ResponseSpec::File(p.clone()),
            (None, Some(c)) => ResponseSpec::Column(c.clone()),
            (None, None) => ResponseSpec::None,
        }
    }

    fn load(&self, need_y: bool) -> Result<Dataset<f64>, CliError> {
        if need_y && self.response.is_none() && self.response_col.is_none() {
            return Err(CliError::Usage(
                "a response is required: pass --response FILE or --response-col NAME|INDEX".into(),
            ));
        }
        Ok(read_matrix(&self.data, self.header, &self.spec())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    TwoStep,
    Forward,
    Exhaustive,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    /// Subset search.
    #[arg(long, value_enum, default_value_t = MethodArg::TwoStep)]
    pub method: MethodArg,
    /// Forward-selection screen before branch-and-bound.
    #[arg(long, default_value_t = DEFAULT_SCREEN_SIZE, value_parser = positive_usize)]
    pub screen_size: usize,
    /// Cap on branch-and-bound nodes; results past the cap are flagged inexact.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub node_budget: Option<u64>,
}

impl SearchArgs {
    fn method(&self) -> SearchMethod {
        match self.method {
            MethodArg::TwoStep => SearchMethod::TwoStep {
                screen_size: self.screen_size,
                node_budget: self.node_budget,
            },
            MethodArg::Forward => SearchMethod::Forward,
            MethodArg::Exhaustive => SearchMethod::Exhaustive,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MaxcorrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Subset size.
    #[arg(long, value_parser = positive_usize)]
    pub s: usize,
    /// Also report every size from 1 to `s`.
    #[arg(long)]
    pub sequence: bool,
    /// Echoed only; the search is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleArg {
    Raw,
    PerSqrtN,
}

#[derive(Debug, Args, Serialize)]
pub struct NullQuantileArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_parser = positive_usize)]
    pub s: usize,
    #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000, value_parser = reps_arg)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Substream below the seed, as `/`-separated labels.
    #[arg(long)]
    pub stream: Option<String>,
    /// Plain instead of corrected multiplier bootstrap.
    #[arg(long)]
    pub plain: bool,
    /// Max-abs process over covariates residualized on these 0-based
    /// columns instead of the subset process.
    #[arg(long, value_delimiter = ',')]
    pub selected: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ScaleArg::PerSqrtN)]
    pub scale: ScaleArg,
    /// Writes the sorted replicates as a single-column CSV.
    #[arg(long)]
    pub dist_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckDiscoveryArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Single-column fitted values; without it the response is fitted by
    /// cross-validated LASSO followed by a post-LASSO refit.
    #[arg(long)]
    pub fitted: Option<PathBuf>,
    /// Number of selected covariates; defaults to the post-LASSO support size.
    #[arg(long, value_parser = positive_usize)]
    pub s: Option<usize>,
    #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000, value_parser = reps_arg)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Substream below the seed, as `/`-separated labels.
    #[arg(long)]
    pub stream: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FOLDS, value_parser = folds_arg)]
    pub folds: usize,
    #[arg(long)]
    pub plain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitArg {
    LassoCv,
    Scad,
    Oracle,
    Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullArg {
    Bootstrap,
    Analytic,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct ExoTestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = FitArg::Scad)]
    pub fit: FitArg,
    /// 0-based support for `--fit oracle`.
    #[arg(long, value_delimiter = ',')]
    pub support: Vec<usize>,
    /// Single-column residuals for `--fit residuals`.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// 0-based columns the residuals were selected on, for `--fit residuals`.
    #[arg(long, value_delimiter = ',')]
    pub selected: Vec<usize>,
    /// SCAD penalty level; the cross-validated LASSO penalty by default.
    #[arg(long, value_parser = positive_f64)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SCAD_A, value_parser = scad_shape)]
    pub scad_a: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS, value_parser = folds_arg)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = NullArg::Both)]
    pub null: NullArg,
    #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000, value_parser = reps_arg)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub stream: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct AsymArgs {
    /// Number of summed top order statistics.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub s: usize,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true, value_parser = finite_f64)]
    pub t_min: f64,
    #[arg(long, default_value_t = 15.0, allow_negative_numbers = true, value_parser = finite_f64)]
    pub t_max: f64,
    #[arg(long, default_value_t = 201, value_parser = clap::value_parser!(u64).range(2..))]
    pub points: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyArg {
    /// One simulated data set written as CSV.
    Data,
    /// Null distribution of the maximum spurious correlation.
    Null,
    /// Empirical size of the bootstrap quantile.
    Size,
    /// Spurious-discovery probability of the post-LASSO fit.
    Sdp,
    /// Monotonicity of the joint null across subset sizes.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignArg {
    /// Covariates from `--scenario` and independent noise as the response.
    Null,
    /// Low-rank design with the sparse discovery-study coefficients.
    Sdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Gaussian,
    Uniform,
    Laplace,
}

impl From<NoiseArg> for NoiseModel {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gaussian => NoiseModel::Gaussian,
            NoiseArg::Uniform => NoiseModel::UniformStandardized,
            NoiseArg::Laplace => NoiseModel::LaplaceStandardized,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub study: StudyArg,
    /// Named configuration; explicit flags override its fields.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENT_PRESETS))]
    pub preset: Option<String>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    pub scenario: Option<String>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long, value_parser = n_arg)]
    pub n: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub p: Option<usize>,
    /// Subset sizes, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub s: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = n_arg)]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub r_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = unit_interval)]
    pub alpha: Vec<f64>,
    #[arg(long, value_parser = positive_usize)]
    pub reps_outer: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub reps_inner: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub reference_reps: Option<usize>,
    #[arg(long, value_parser = folds_arg)]
    pub folds: Option<usize>,
    /// Bootstrap overlay on the first data set of a null study.
    #[arg(long)]
    pub overlay: bool,
    #[arg(long, value_parser = positive_usize)]
    pub block_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true, value_parser = finite_f64)]
    pub rho: Option<f64>,
    #[arg(long, value_parser = positive_f64)]
    pub cond_number: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    pub rank: Option<usize>,
    /// Seed of the low-rank basis; defaults to `--seed`.
    #[arg(long)]
    pub basis_seed: Option<u64>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV payload: the table for size and sdp studies, histograms for null.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Data set path for `--study data`.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DesignArg::Null)]
    pub design: DesignArg,
    /// Rank of the low-rank design for `--study data --design sdp`.
    #[arg(long, value_parser = positive_usize)]
    pub r: Option<usize>,
    /// Run index for `--study data --design sdp`.
    #[arg(long, default_value_t = 0)]
    pub run: usize,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        Ok(_) => Err("must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn reps_arg(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= MIN_REPS => Ok(v),
        Ok(_) => Err(format!("must be at least {MIN_REPS}")),
        Err(e) => Err(e.to_string()),
    }
}

fn n_arg(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(_) => Err("must be at least 2".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn folds_arg(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(_) => Err("needs at least 2 folds".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn finite_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err("must be finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match finite_f64(s)? {
        v if v > 0.0 => Ok(v),
        _ => Err("must be positive".into()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match finite_f64(s)? {
        v if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err("must lie strictly between 0 and 1".into()),
    }
}

fn scad_shape(s: &str) -> Result<f64, String> {
    match finite_f64(s)? {
        v if v > 2.0 => Ok(v),
        _ => Err("must exceed 2".into()),
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Compute(Error::Io(e))
    }
}

/// `seed` followed by `/`-separated labels; numeric labels are indices.
pub fn parse_stream(seed: u64, path: Option<&str>) -> RngStream {
    let mut rng = RngStream::new(seed);
    if let Some(path) = path {
        for part in path.split('/').filter(|p| !p.is_empty()) {
            rng = match part.parse::<u64>() {
                Ok(i) => rng.child(Label::Index(i)),
                Err(_) => rng.child(part),
            };
        }
    }
    rng
}

/// `rng.path` in the `--stream` syntax.
pub fn format_stream(rng: &RngStream) -> String {
    rng.path
        .iter()
        .map(|l| match l {
            Label::Index(i) => i.to_string(),
            Label::Name(s) => s.clone(),
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn names_of(d: &Dataset<f64>, idx: &[usize]) -> Option<Vec<String>> {
    d.names().map(|ns| idx.iter().map(|&j| ns[j].clone()).collect())
}

fn one_based(idx: &[usize]) -> String {
    idx.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(", ")
}

/// Report envelope shared by every subcommand.
fn envelope(cmd: &Command, argv: &[String], seed: Option<u64>, reps: Option<usize>, result: Value) -> Value {
    json!({
        "seed": seed,
        "reps": reps,
        "versions": {
            "spurcorr": env!("CARGO_PKG_VERSION"),
            "format": FORMAT_VERSION,
        },
        "config": cmd,
        "argv": argv,
        "result": result,
    })
}

/// Arguments with `--threads` and `--output` removed.
fn reproducible_argv(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args.iter().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" || a == "--output" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") || a.starts_with("--output=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

enum Payload {
    Json(Value),
    Text(String),
}

fn run_maxcorr(a: &MaxcorrArgs) -> Result<(Value, String), CliError> {
    let d = a.data.load(true)?;
    if a.s > d.p() {
        return Err(CliError::Usage(format!("--s {} exceeds the number of covariates p = {}", a.s, d.p())));
    }
    let method = a.search.method();
    let est = compute_max_spurious(&d, a.s, &method)?;
    let sequence = if a.sequence {
        compute_spurious_sequence(&d, a.s, &method)?
            .into_iter()
            .map(|e| {
                json!({
                    "s": e.s,
                    "r_hat": e.r_hat,
                    "subset": e.subset,
                    "subset_names": names_of(&d, &e.subset),
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    let summary = format!(
        "r_hat = {:.6} at covariates {} (1-based)",
        est.r_hat,
        one_based(&est.subset)
    );
    let v = json!({
        "n": d.n(),
        "p": d.p(),
        "s": a.s,
        "r_hat": est.r_hat,
        "value": est.value,
        "sigma_eps_sq": est.sigma_eps_sq,
        "subset": est.subset,
        "subset_names": names_of(&d, &est.subset),
        "alpha": est.alpha,
        "method": est.method,
        "exact": est.exact,
        "stalled": est.stalled,
        "sequence": sequence,
    });
    Ok((v, summary))
}

fn write_distribution(dist: &BootstrapDistribution<f64>, path: &Path) -> Result<(), CliError> {
    let f = BufWriter::new(File::create(path)?);
    dist.write_csv(f)?;
    Ok(())
}

fn run_null_quantile(a: &NullQuantileArgs) -> Result<(Value, String), CliError> {
    let d = a.data.load(false)?;
    if a.s > d.p() {
        return Err(CliError::Usage(format!("--s {} exceeds the number of covariates p = {}", a.s, d.p())));
    }
    if a.selected.iter().any(|&j| j >= d.p()) {
        return Err(CliError::Usage("--selected index out of range".into()));
    }
    let rng = parse_stream(a.seed, a.stream.as_deref());
    let dist = if a.selected.is_empty() {
        let mb = MultiplierBootstrap::new(&d, a.s, a.search.method())?;
        mb.distribution(a.reps, &rng, !a.plain)?
    } else {
        LlaProcess::new(&d, &a.selected)?.distribution(a.reps, &rng)?
    };
    let scale = match a.scale {
        ScaleArg::Raw => Scale::Raw,
        ScaleArg::PerSqrtN => Scale::PerSqrtN,
    };
    let dist = dist.with_scale(scale);
    let q = dist.quantile(a.alpha)?;
    if let Some(path) = &a.dist_csv {
        write_distribution(&dist, path)?;
    }
    let vals = dist.values();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let v = json!({
        "n": d.n(),
        "p": d.p(),
        "s": a.s,
        "alpha": a.alpha,
        "quantile": q,
        "statistic": dist.statistic,
        "scale": dist.scale,
        "stream": dist.seed,
        "min": vals.first(),
        "mean": mean,
        "max": vals.last(),
        "dropped": dist.dropped,
        "method": dist.method,
    });
    Ok((v, format!("upper {} quantile = {:.6}", a.alpha, q)))
}

fn run_check_discovery(a: &CheckDiscoveryArgs) -> Result<(Value, String), CliError> {
    let d = a.data.load(true)?;
    let rng = parse_stream(a.seed, a.stream.as_deref());
    let opts = DiscoveryOptions {
        corrected: !a.plain,
        method: a.search.method(),
    };
    if let Some(s) = a.s {
        if s > d.p() {
            return Err(CliError::Usage(format!("--s {s} exceeds the number of covariates p = {}", d.p())));
        }
    }
    let v = match &a.fitted {
        Some(path) => {
            let Some(s) = a.s else {
                return Err(CliError::Usage("--fitted requires --s".into()));
            };
            let fitted = read_vector::<f64>(path, a.data.header)?;
            if fitted.len() != d.n() {
                return Err(CliError::Compute(Error::InvalidData(format!(
                    "fitted values have length {}, expected {}",
                    fitted.len(),
                    d.n()
                ))));
            }
            let report = check_discovery_with(&d, &fitted, s, a.alpha, a.reps, &rng, &opts)?;
            json!({ "fit": "given", "report": report })
        }
        None => {
            let out = post_lasso_discovery(&d, a.alpha, a.reps, a.folds, &opts, a.s, &rng)?;
            let selected = out.fit.support.clone();
            json!({
                "fit": "post_lasso",
                "lambda": out.lambda,
                "selected": selected,
                "selected_names": names_of(&d, &selected),
                "s_hat": selected.len(),
                "spurious": out.report.as_ref().map_or(true, |r| r.decision == crate::inference::Decision::Spurious),
                "report": out.report,
            })
        }
    };
    let summary = match v.get("report").and_then(|r| r.get("decision")) {
        Some(dec) => format!("decision: {}", dec.as_str().unwrap_or("?")),
        None => "decision: spurious (empty selection)".into(),
    };
    Ok((v, summary))
}

fn run_exo_test(a: &ExoTestArgs) -> Result<(Value, String), CliError> {
    let d = a.data.load(true)?;
    let rng = parse_stream(a.seed, a.stream.as_deref());
    if a.lambda.is_some() && a.fit != FitArg::Scad {
        return Err(CliError::Usage("--lambda applies to --fit scad only".into()));
    }
    if a.fit != FitArg::Oracle && !a.support.is_empty() {
        return Err(CliError::Usage("--support applies to --fit oracle only".into()));
    }
    if a.fit != FitArg::Residuals && (a.residuals.is_some() || !a.selected.is_empty()) {
        return Err(CliError::Usage("--residuals and --selected apply to --fit residuals only".into()));
    }
    let fit = match a.fit {
        FitArg::LassoCv => ExoFit::LassoCv { folds: a.folds },
        FitArg::Scad => ExoFit::ScadLla {
            folds: a.folds,
            lambda: a.lambda,
            a: a.scad_a,
        },
        FitArg::Oracle => {
            if a.support.iter().any(|&j| j >= d.p()) {
                return Err(CliError::Usage("--support index out of range".into()));
            }
            ExoFit::Oracle {
                support: a.support.clone(),
            }
        }
        FitArg::Residuals => {
            let Some(path) = &a.residuals else {
                return Err(CliError::Usage("--fit residuals requires --residuals".into()));
            };
            if a.selected.iter().any(|&j| j >= d.p()) {
                return Err(CliError::Usage("--selected index out of range".into()));
            }
            ExoFit::GivenResiduals {
                residuals: read_vector(path, a.data.header)?,
                selected: a.selected.clone(),
            }
        }
    };
    let res: ExoResiduals<f64> = exogeneity_residuals(&d, &fit, &rng)?;
    let method = match a.fit {
        FitArg::LassoCv => "lasso_cv",
        FitArg::Scad => "scad_lla",
        FitArg::Oracle => "oracle",
        FitArg::Residuals => "given_residuals",
    };
    let mut reports = serde_json::Map::new();
    let mut summary = Vec::new();
    if matches!(a.null, NullArg::Bootstrap | NullArg::Both) {
        let r = exogeneity_test_from(&d, &res, method, a.alpha, &ExoNull::BootstrapLla { reps: a.reps }, &rng)?;
        summary.push(format!("bootstrap: {:?}", r.decision));
        reports.insert("bootstrap".into(), serde_json::to_value(&r).map_err(json_err)?);
    }
    if matches!(a.null, NullArg::Analytic | NullArg::Both) {
        let r = exogeneity_test_from(&d, &res, method, a.alpha, &ExoNull::AnalyticJ, &rng)?;
        summary.push(format!("analytic: {:?}", r.decision));
        reports.insert("analytic".into(), serde_json::to_value(&r).map_err(json_err)?);
    }
    let v = json!({
        "n": d.n(),
        "p": d.p(),
        "selected": res.selected,
        "selected_names": names_of(&d, &res.selected),
        "lambdas": res.lambdas,
        "reports": reports,
    });
    Ok((v, summary.join("; ")))
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Compute(Error::InvalidData(e.to_string()))
}

fn run_asym(a: &AsymArgs) -> Result<Payload, CliError> {
    if !(a.t_max > a.t_min) {
        return Err(CliError::Usage("--t-max must exceed --t-min".into()));
    }
    let law = LimitLaw::new(a.s)?;
    let grid = law.grid(a.t_min, a.t_max, a.points as usize)?;
    Ok(match a.format {
        FormatArg::Csv => {
            let mut s = String::from("t,cdf\n");
            for (t, c) in &grid {
                s.push_str(&format!("{t},{c}\n"));
            }
            Payload::Text(s)
        }
        FormatArg::Json => {
            let crit: Vec<Value> = [0.01, 0.05, 0.1]
                .iter()
                .map(|&al| Ok(json!({"alpha": al, "j_critical_value": j_critical_value(al)?})))
                .collect::<Result<_, Error>>()?;
            Payload::Json(json!({
                "s": a.s,
                "grid": grid.iter().map(|(t, c)| json!({"t": t, "cdf": c})).collect::<Vec<_>>(),
                "j_critical_values": crit,
            }))
        }
    })
}

fn experiment_config(a: &SimulateArgs) -> Result<ExperimentConfig<f64>, CliError> {
    let mut c = match &a.preset {
        Some(name) => ExperimentConfig::preset(name, a.seed)?,
        None => {
            let scenario = a.scenario.as_deref().unwrap_or("isotropic");
            ExperimentConfig::new(scenario, 100, 200, vec![1], a.seed)
        }
    };
    if let Some(s) = &a.scenario {
        c.scenario = s.clone();
    }
    if let Some(n) = a.noise {
        c.noise = n.into();
    }
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(p) = a.p {
        c.p = p;
    }
    if !a.s.is_empty() {
        c.s = a.s.clone();
    }
    if !a.n_grid.is_empty() {
        c.n_grid = a.n_grid.clone();
    } else if a.n.is_some() {
        c.n_grid.clear();
    }
    if !a.r_grid.is_empty() {
        c.r_grid = a.r_grid.clone();
    }
    if !a.alpha.is_empty() {
        c.alphas = a.alpha.clone();
    }
    if let Some(v) = a.reps_outer {
        c.reps_outer = v;
    }
    if let Some(v) = a.reps_inner {
        c.reps_inner = v;
    }
    if a.reference_reps.is_some() {
        c.reference_reps = a.reference_reps;
    }
    if let Some(v) = a.folds {
        c.folds = v;
    }
    c.overlay |= a.overlay;
    if a.block_size.is_some() {
        c.preset.block_size = a.block_size;
    }
    if a.rho.is_some() {
        c.preset.rho = a.rho;
    }
    if a.cond_number.is_some() {
        c.preset.cond_number = a.cond_number;
    }
    if a.rank.is_some() {
        c.preset.rank = a.rank;
    }
    c.preset.basis_seed = a.basis_seed.unwrap_or(a.seed);
    c.seed = a.seed;
    c.method = a.search.method();
    Ok(c)
}

fn write_dataset(d: &Dataset<f64>, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..d.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    writeln!(w, "{}", header.join(","))?;
    let y = d.require_y()?;
    for i in 0..d.n() {
        let mut row: Vec<String> = (0..d.p()).map(|j| d.x().col(j)[i].to_string()).collect();
        row.push(y[i].to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<(Value, String), CliError> {
    let cfg = experiment_config(a)?;
    let usage = |e: Error| match e {
        Error::InvalidArgument(m) | Error::InvalidModel(m) => CliError::Usage(m),
        other => CliError::Compute(other),
    };
    match a.study {
        StudyArg::Data => {
            let Some(path) = &a.data_out else {
                return Err(CliError::Usage("--study data requires --data-out".into()));
            };
            let (d, stream, analysis) = match a.design {
                DesignArg::Null => {
                    let model = CovarianceModel::preset(&cfg.scenario, cfg.p, &cfg.preset).map_err(usage)?;
                    let rng = RngStream::new(cfg.seed).child("data");
                    (sample_null(&model, cfg.noise, cfg.n, &rng)?, rng, None)
                }
                DesignArg::Sdp => {
                    let Some(r) = a.r else {
                        return Err(CliError::Usage("--design sdp requires --r".into()));
                    };
                    if r > cfg.p {
                        return Err(CliError::Usage(format!("--r {r} exceeds --p {}", cfg.p)));
                    }
                    let run = sdp_run_stream(cfg.seed, cfg.n, r, a.run);
                    let rng = run.child("data");
                    let d = sdp_dataset(cfg.p, r, cfg.preset.basis_seed, cfg.n, 1.0, &rng)?;
                    (d, rng, Some(format_stream(&run.child("analysis"))))
                }
            };
            write_dataset(&d, path)?;
            let v = json!({
                "path": path,
                "n": d.n(),
                "p": d.p(),
                "stream": format_stream(&stream),
                "analysis_stream": analysis,
                "response_col": "y",
            });
            Ok((v, format!("wrote {} x {} data set", d.n(), d.p() + 1)))
        }
        StudyArg::Null => {
            cfg.validate().map_err(usage)?;
            let res = run_null_distribution(&cfg)?;
            if let Some(path) = &a.csv {
                let mut w = BufWriter::new(File::create(path)?);
                writeln!(w, "n,s,lower,upper,count")?;
                for c in &res.cells {
                    for (k, count) in c.histogram.counts.iter().enumerate() {
                        writeln!(w, "{},{},{},{},{}", c.n, c.s, c.histogram.edges[k], c.histogram.edges[k + 1], count)?;
                    }
                }
                w.flush()?;
            }
            let summary = res
                .cells
                .iter()
                .map(|c| format!("n={} s={}: mean {:.4}", c.n, c.s, c.mean))
                .collect::<Vec<_>>()
                .join("; ");
            Ok((json!({"experiment": cfg, "null": res}), summary))
        }
        StudyArg::Size | StudyArg::Sdp => {
            let table = if a.study == StudyArg::Size {
                cfg.validate().map_err(usage)?;
                run_size_study(&cfg).map_err(usage)?
            } else {
                run_sdp_study(&cfg).map_err(usage)?
            };
            if let Some(path) = &a.csv {
                let w = BufWriter::new(File::create(path)?);
                table.write_csv(w)?;
            }
            let summary = table
                .cells
                .iter()
                .map(|c| {
                    let labels = c.labels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
                    format!("{labels}: {:.4}", c.mean)
                })
                .collect::<Vec<_>>()
                .join("; ");
            Ok((json!({"experiment": cfg, "table": table}), summary))
        }
        StudyArg::Joint => {
            let rep = run_joint_null_check(&cfg).map_err(usage)?;
            let summary = format!("per-margin KS: {:?}", rep.ks);
            Ok((json!({"experiment": cfg, "joint": rep}), summary))
        }
    }
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Some(t)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV}={v:?} must be a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<(Payload, String), CliError> {
    let rargv = reproducible_argv(argv);
    let wrap = |seed: Option<u64>, reps: Option<usize>, (v, s): (Value, String)| {
        (Payload::Json(envelope(&cli.command, &rargv, seed, reps, v)), s)
    };
    Ok(match &cli.command {
        Command::Maxcorr(a) => wrap(Some(a.seed), None, run_maxcorr(a)?),
        Command::NullQuantile(a) => wrap(Some(a.seed), Some(a.reps), run_null_quantile(a)?),
        Command::CheckDiscovery(a) => wrap(Some(a.seed), Some(a.reps), run_check_discovery(a)?),
        Command::ExoTest(a) => {
            let reps = matches!(a.null, NullArg::Bootstrap | NullArg::Both).then_some(a.reps);
            wrap(Some(a.seed), reps, run_exo_test(a)?)
        }
        Command::Asym(a) => match run_asym(a)? {
            Payload::Json(v) => (Payload::Json(envelope(&cli.command, &rargv, None, None, v)), String::new()),
            text => (text, String::new()),
        },
        Command::Simulate(a) => {
            let reps = a.reps_outer;
            wrap(Some(a.seed), reps, run_simulate(a)?)
        }
    })
}

fn emit(payload: &Payload, output: Option<&Path>, stdout: &mut dyn Write) -> io::Result<()> {
    let text = match payload {
        Payload::Json(v) => {
            let mut s = serde_json::to_string_pretty(v).map_err(io::Error::other)?;
            s.push('\n');
            s
        }
        Payload::Text(s) => s.clone(),
    };
    match output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(text.as_bytes())?;
            f.flush()
        }
        None => stdout.write_all(text.as_bytes()),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let threads = match cli.threads {
        Some(t) => Some(t as usize),
        None => match threads_from_env() {
            Ok(t) => t,
            Err(CliError::Usage(m)) => {
                let _ = writeln!(stderr, "error: {m}");
                return 2;
            }
            Err(CliError::Compute(_)) => unreachable!(),
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli, &argv)) {
        Ok((payload, summary)) => {
            if let Err(e) = emit(&payload, cli.output.as_deref(), stdout) {
                let _ = writeln!(stderr, "error: {e}");
                return 1;
            }
            if !summary.is_empty() {
                let _ = writeln!(stderr, "{summary}");
            }
            0
        }
        Err(CliError::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            2
        }
        Err(CliError::Compute(e)) => {
            let v = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            let _ = writeln!(stdout, "{v}");
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().map(|s| s.to_string()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn zero_s_is_usage_error() {
        let (code, _, err) = run_capture(&["spurcorr", "maxcorr", "--data", "x.csv", "--response", "y.csv", "--s", "0"]);
        assert_eq!(code, 2);
        assert!(err.contains("--s"), "{err}");
    }

    #[test]
    fn alpha_out_of_range_is_usage_error() {
        let (code, _, err) = run_capture(&["spurcorr", "null-quantile", "--data", "x.csv", "--s", "1", "--alpha", "1.5"]);
        assert_eq!(code, 2);
        assert!(err.contains("--alpha"), "{err}");
    }

    #[test]
    fn stream_round_trip() {
        let rng = sdp_run_stream(7, 100, 120, 3).child("analysis");
        let text = format_stream(&rng);
        assert_eq!(text, "sdp/100/120/3/analysis");
        assert_eq!(parse_stream(7, Some(&text)), rng);
    }

    #[test]
    fn argv_filter_drops_threads_and_output() {
        let a: Vec<String> = ["spurcorr", "asym", "--threads", "2", "--output=o.csv", "--s", "2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(reproducible_argv(&a), vec!["asym", "--s", "2"]);
    }

    #[test]
    fn missing_file_is_computational_error() {
        let (code, out, _) = run_capture(&[
            "spurcorr",
            "maxcorr",
            "--data",
            "/nonexistent/x.csv",
            "--response-col",
            "0",
            "--s",
            "1",
        ]);
        assert_eq!(code, 1);
        let v: Value = serde_json::from_str(out.trim()).unwrap();
        assert!(v["error"]["kind"].is_string());
    }

    #[test]
    fn asym_csv_grid() {
        let (code, out, _) = run_capture(&["spurcorr", "asym", "--s", "1", "--t-min", "-2", "--t-max", "2", "--points", "5"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "t,cdf");
        assert_eq!(lines.len(), 6);
    }
}
