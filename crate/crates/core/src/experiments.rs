//! Simulation studies: null distributions of the maximum spurious correlation,
//! bootstrap empirical sizes, spurious-discovery probabilities and the joint
//! order-statistic check. Every outer run draws from its own substream, so
//! results do not depend on evaluation order or thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{a_p, ks_two_sample, topk_order_statistics};
use crate::bootstrap::{BootstrapDistribution, MultiplierBootstrap, Scale, Statistic};
use crate::data::Dataset;
use crate::datagen::{sample_linear_model, sample_null, CovarianceModel, LinearModelSpec, NoiseModel, PresetParams};
use crate::error::{Error, Result};
use crate::float::Real;
use crate::inference::{check_discovery_with, Decision, DiscoveryOptions, TestReport};
use crate::regression::{cv_lasso, fit_post_lasso, FitResult, DEFAULT_FOLDS};
use crate::rng::RngStream;
use crate::spurious::compute_spurious_sequence;
use crate::subset_search::{SearchMethod, DEFAULT_SCREEN_SIZE};

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig<F> {
    /// Covariance preset name (`isotropic`, `block`, `anisotropic`, `lowrank`).
    pub scenario: String,
    pub preset: PresetParams<F>,
    pub noise: NoiseModel,
    pub n: usize,
    pub p: usize,
    pub s: Vec<usize>,
    /// Number of simulated data sets.
    pub reps_outer: usize,
    /// Bootstrap replicates per data set.
    pub reps_inner: usize,
    /// Data sets in the reference run of the size study (default `8·reps_outer`).
    pub reference_reps: Option<usize>,
    pub alphas: Vec<F>,
    pub seed: u64,
    pub method: SearchMethod,
    /// Sample sizes for grid studies; empty means `[n]`.
    pub n_grid: Vec<usize>,
    /// Ranks for the low-rank spurious-discovery study.
    pub r_grid: Vec<usize>,
    pub folds: usize,
    /// Attach a bootstrap distribution for the first data set to null runs.
    pub overlay: bool,
}

impl<F: Real> ExperimentConfig<F> {
    pub fn new(scenario: &str, n: usize, p: usize, s: Vec<usize>, seed: u64) -> Self {
        ExperimentConfig {
            scenario: scenario.into(),
            preset: PresetParams {
                basis_seed: seed,
                ..PresetParams::default()
            },
            noise: NoiseModel::Gaussian,
            n,
            p,
            s,
            reps_outer: 200,
            reps_inner: 400,
            reference_reps: None,
            alphas: vec![F::c(0.05), F::c(0.1)],
            seed,
            method: SearchMethod::default(),
            n_grid: Vec::new(),
            r_grid: Vec::new(),
            folds: DEFAULT_FOLDS,
            overlay: false,
        }
    }

    /// Named configurations. `*-desk` presets run in minutes on one core; the
    /// others follow the published designs and take hours.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let c = match name {
            "figure2" => {
                let mut c = Self::new("isotropic", 50, 1000, vec![1, 2, 5, 10], seed);
                c.n_grid = vec![50, 100, 200];
                c.reps_outer = 1000;
                c
            }
            "figure3" => {
                let mut c = Self::new("isotropic", 400, 2000, vec![1, 2, 5, 10], seed);
                c.reps_outer = 1600;
                c.reps_inner = 1600;
                c.overlay = true;
                c
            }
            "table1" | "table2" => {
                let scenario = if name == "table1" { "isotropic" } else { "anisotropic" };
                let mut c = Self::new(scenario, 400, 2000, vec![1, 2, 5, 10], seed);
                c.noise = if name == "table1" {
                    NoiseModel::UniformStandardized
                } else {
                    NoiseModel::LaplaceStandardized
                };
                c.n_grid = vec![400, 800, 1200];
                c.reps_outer = 200;
                c.reps_inner = 1600;
                c.reference_reps = Some(1600);
                c
            }
            "table1-desk" => {
                let mut c = Self::new("isotropic", 200, 200, vec![1, 2], seed);
                c.noise = NoiseModel::UniformStandardized;
                c.reps_outer = 100;
                c.reps_inner = 400;
                c.reference_reps = Some(800);
                c
            }
            "table3" => {
                let mut c = Self::new("lowrank", 100, 400, vec![], seed);
                c.n_grid = vec![100, 120, 160];
                c.r_grid = vec![120, 160, 200, 240, 280, 320, 360];
                c.reps_outer = 200;
                c.reps_inner = 1000;
                c.alphas = vec![F::c(0.05)];
                c.method = SearchMethod::TwoStep {
                    screen_size: DEFAULT_SCREEN_SIZE,
                    node_budget: Some(100_000),
                };
                c
            }
            "table3-desk" => {
                let mut c = Self::new("lowrank", 50, 100, vec![], seed);
                c.n_grid = vec![50, 80];
                c.r_grid = vec![30, 60, 90];
                c.reps_outer = 50;
                c.reps_inner = 200;
                c.alphas = vec![F::c(0.05)];
                c.method = SearchMethod::TwoStep {
                    screen_size: DEFAULT_SCREEN_SIZE,
                    node_budget: Some(2_000),
                };
                c
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown experiment preset {other:?}; expected one of {EXPERIMENT_PRESETS:?}"
                )))
            }
        };
        Ok(c)
    }

    pub fn ns(&self) -> Vec<usize> {
        if self.n_grid.is_empty() {
            vec![self.n]
        } else {
            self.n_grid.clone()
        }
    }

    pub fn reference_reps(&self) -> usize {
        self.reference_reps.unwrap_or(8 * self.reps_outer)
    }

    pub fn model(&self, p: usize) -> Result<CovarianceModel<F>> {
        CovarianceModel::preset(&self.scenario, p, &self.preset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps_outer < 1 || self.reps_inner < 1 || self.p < 1 || self.ns().iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument("counts must be >= 1 and n >= 2".into()));
        }
        if self.alphas.iter().any(|a| !(*a > F::zero() && *a < F::one())) {
            return Err(Error::InvalidArgument("every alpha must lie in (0, 1)".into()));
        }
        if self.s.iter().any(|&s| s < 1 || s > self.p) {
            return Err(Error::InvalidArgument("every s must satisfy 1 <= s <= p".into()));
        }
        self.model(self.p)?;
        Ok(())
    }
}

pub const EXPERIMENT_PRESETS: [&str; 7] = [
    "figure2",
    "figure3",
    "table1",
    "table2",
    "table1-desk",
    "table3",
    "table3-desk",
];

/// Bin edges and counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram<F> {
    pub edges: Vec<F>,
    pub counts: Vec<usize>,
}

impl<F: Real> Histogram<F> {
    pub fn new(values: &[F], bins: usize) -> Self {
        let lo = values.iter().copied().fold(F::infinity(), F::min);
        let hi = values.iter().copied().fold(F::neg_infinity(), F::max);
        let (lo, hi) = if values.is_empty() {
            (F::zero(), F::one())
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - F::c(0.5), hi + F::c(0.5))
        };
        let width = (hi - lo) / F::from_usize_lossy(bins);
        let edges = (0..=bins).map(|i| lo + width * F::from_usize_lossy(i)).collect();
        let mut counts = vec![0usize; bins];
        for v in values {
            let k = ((*v - lo) / width).to_f64_lossy().floor() as isize;
            counts[k.clamp(0, bins as isize - 1) as usize] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lower,upper,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", self.edges[i], self.edges[i + 1], c)?;
        }
        Ok(())
    }
}

/// Null draws of `R̂ₙ(s,p)` for one `(n, s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullCell<F> {
    pub n: usize,
    pub s: usize,
    /// `R̂ₙ(s,p)` per data set, in run order.
    pub values: Vec<F>,
    pub mean: F,
    pub sd: F,
    pub histogram: Histogram<F>,
    /// Corrected bootstrap on the first data set, correlation scale.
    pub overlay: Option<Vec<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDistributionResult<F> {
    pub scenario: String,
    pub p: usize,
    pub cells: Vec<NullCell<F>>,
}

fn mean_sd<F: Real>(v: &[F]) -> (F, F) {
    let k = F::from_usize_lossy(v.len());
    let m = v.iter().copied().sum::<F>() / k;
    if v.len() < 2 {
        return (m, F::zero());
    }
    let var = v.iter().map(|x| (*x - m) * (*x - m)).sum::<F>() / (k - F::one());
    (m, var.sqrt())
}

/// `R̂ₙ(k,p)` for every `k` in `s_list` on one null data set.
fn null_values<F: Real>(
    model: &CovarianceModel<F>,
    noise: NoiseModel,
    n: usize,
    s_list: &[usize],
    method: &SearchMethod,
    rng: &RngStream,
) -> Result<(Dataset<F>, Vec<F>)> {
    let d = sample_null(model, noise, n, rng)?;
    let s_max = *s_list.iter().max().expect("nonempty s list");
    let seq = compute_spurious_sequence(&d, s_max, method)?;
    Ok((d, s_list.iter().map(|&s| seq[s - 1].r_hat).collect()))
}

/// Draws `reps_outer` independent `(X, ε)` per sample size and records
/// `R̂ₙ(s,p)` for every `s`. Data set `i` at size `n` uses `seed/"null"/n/i`.
pub fn run_null_distribution<F: Real>(cfg: &ExperimentConfig<F>) -> Result<NullDistributionResult<F>> {
    cfg.validate()?;
    if cfg.s.is_empty() {
        return Err(Error::InvalidArgument("the null study needs at least one s".into()));
    }
    let model = cfg.model(cfg.p)?;
    let root = RngStream::new(cfg.seed).child("null");
    let mut cells = Vec::new();
    for n in cfg.ns() {
        let base = root.child(n);
        let runs: Vec<(Dataset<F>, Vec<F>)> = (0..cfg.reps_outer)
            .into_par_iter()
            .map(|i| {
                let (d, v) = null_values(&model, cfg.noise, n, &cfg.s, &cfg.method, &base.child(i))?;
                // keep only the first data set, for the overlay
                Ok((if i == 0 { d } else { d.select_columns(&[0])? }, v))
            })
            .collect::<Result<_>>()?;
        for (k, &s) in cfg.s.iter().enumerate() {
            let values: Vec<F> = runs.iter().map(|r| r.1[k]).collect();
            let (mean, sd) = mean_sd(&values);
            let overlay = if cfg.overlay {
                let mb = MultiplierBootstrap::new(&runs[0].0, s, cfg.method)?;
                let dist = mb.distribution(cfg.reps_inner.max(crate::bootstrap::MIN_REPS), &base.child("overlay"), true)?;
                Some(dist.with_scale(Scale::PerSqrtN).values().to_vec())
            } else {
                None
            };
            cells.push(NullCell {
                n,
                s,
                histogram: Histogram::new(&values, HISTOGRAM_BINS),
                values,
                mean,
                sd,
                overlay,
            });
        }
    }
    Ok(NullDistributionResult {
        scenario: cfg.scenario.clone(),
        p: cfg.p,
        cells,
    })
}

/// `n·R̂² − a_p` for a vector of `R̂` draws.
pub fn centered_squares<F: Real>(values: &[F], n: usize, p: usize) -> Result<Vec<F>> {
    let ap = a_p::<F>(p)?;
    let nf = F::from_usize_lossy(n);
    Ok(values.iter().map(|r| nf * *r * *r - ap).collect())
}

/// One cell of a simulation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell<F> {
    pub labels: Vec<(String, String)>,
    pub mean: F,
    /// Standard deviation of the per-run values.
    pub sd: F,
    /// Standard error of `mean`, `sd/√runs`.
    pub se: F,
    pub raw: Vec<F>,
    pub extra: Vec<(String, F)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableResult<F> {
    pub name: String,
    pub cells: Vec<TableCell<F>>,
}

impl<F: Real> TableResult<F> {
    pub fn cell(&self, labels: &[(&str, &str)]) -> Option<&TableCell<F>> {
        self.cells.iter().find(|c| {
            labels
                .iter()
                .all(|(k, v)| c.labels.iter().any(|(ck, cv)| ck == k && cv == v))
        })
    }

    /// One row per cell: labels, mean, sd, se, runs, then extras.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let Some(first) = self.cells.first() else {
            return Ok(());
        };
        let mut header: Vec<String> = first.labels.iter().map(|(k, _)| k.clone()).collect();
        header.extend(["mean", "sd", "se", "runs"].map(String::from));
        header.extend(first.extra.iter().map(|(k, _)| k.clone()));
        writeln!(w, "{}", header.join(","))?;
        for c in &self.cells {
            let mut row: Vec<String> = c.labels.iter().map(|(_, v)| v.clone()).collect();
            row.extend([c.mean.to_string(), c.sd.to_string(), c.se.to_string(), c.raw.len().to_string()]);
            row.extend(c.extra.iter().map(|(_, v)| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn table_cell<F: Real>(labels: Vec<(String, String)>, raw: Vec<F>, extra: Vec<(String, F)>) -> TableCell<F> {
    let (mean, sd) = mean_sd(&raw);
    let se = sd / F::from_usize_lossy(raw.len()).sqrt();
    TableCell {
        labels,
        mean,
        sd,
        se,
        raw,
        extra,
    }
}

/// Empirical sizes of the corrected multiplier bootstrap.
///
/// For every `(n, s)`, the upper-`α` quantile `q_α` of `R̂ₙ(s,p)` comes from a
/// reference run of `reference_reps` null data sets (`seed/"reference"/n/i`).
/// Each of the `reps_outer` data sets (`seed/"outer"/n/i`) then yields
/// `c_MB = #{corrected replicates ≥ q_α}/reps_inner`. Cells report the mean
/// and SD of `c_MB`, and `se_with_reference`, which adds the binomial
/// uncertainty of the reference quantile.
pub fn run_size_study<F: Real>(cfg: &ExperimentConfig<F>) -> Result<TableResult<F>> {
    cfg.validate()?;
    if cfg.reps_outer < 50 {
        return Err(Error::InvalidArgument("the size study needs reps_outer >= 50".into()));
    }
    if cfg.s.is_empty() {
        return Err(Error::InvalidArgument("the size study needs at least one s".into()));
    }
    let model = cfg.model(cfg.p)?;
    let root = RngStream::new(cfg.seed);
    let ref_reps = cfg.reference_reps();
    let mut cells = Vec::new();
    for n in cfg.ns() {
        let ref_base = root.child("reference").child(n);
        let reference: Vec<Vec<F>> = (0..ref_reps)
            .into_par_iter()
            .map(|i| null_values(&model, cfg.noise, n, &cfg.s, &cfg.method, &ref_base.child(i)).map(|r| r.1))
            .collect::<Result<_>>()?;
        let quantiles: Vec<Vec<F>> = (0..cfg.s.len())
            .map(|k| {
                let v: Vec<F> = reference.iter().map(|r| r[k]).collect();
                let dist = BootstrapDistribution::from_sample(v, Statistic::Cmb, Scale::PerSqrtN, n);
                cfg.alphas.iter().map(|a| dist.quantile(*a)).collect::<Result<Vec<F>>>()
            })
            .collect::<Result<_>>()?;

        let outer_base = root.child("outer").child(n);
        // sizes[i][k][a]
        let sizes: Vec<Vec<Vec<F>>> = (0..cfg.reps_outer)
            .into_par_iter()
            .map(|i| {
                let rng = outer_base.child(i);
                let d = crate::datagen::sample_covariates(&model, n, &rng.child("covariates"))?;
                cfg.s
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| {
                        let mb = MultiplierBootstrap::new(&d, s, cfg.method)?;
                        let dist = mb
                            .distribution(cfg.reps_inner, &rng.child("bootstrap").child(s), true)?
                            .with_scale(Scale::PerSqrtN);
                        Ok(quantiles[k].iter().map(|q| dist.exceedance(*q)).collect())
                    })
                    .collect::<Result<Vec<Vec<F>>>>()
            })
            .collect::<Result<_>>()?;

        for (k, &s) in cfg.s.iter().enumerate() {
            for (a, alpha) in cfg.alphas.iter().enumerate() {
                let raw: Vec<F> = sizes.iter().map(|r| r[k][a]).collect();
                let ref_var = *alpha * (F::one() - *alpha) / F::from_usize_lossy(ref_reps);
                let mut cell = table_cell(
                    vec![
                        ("n".into(), n.to_string()),
                        ("s".into(), s.to_string()),
                        ("alpha".into(), alpha.to_string()),
                    ],
                    raw,
                    vec![("reference_quantile".into(), quantiles[k][a])],
                );
                let se_ref = (cell.se * cell.se + ref_var).sqrt();
                cell.extra.push(("se_with_reference".into(), se_ref));
                cells.push(cell);
            }
        }
    }
    Ok(TableResult {
        name: "size".into(),
        cells,
    })
}

/// Outcome of one spurious-discovery run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpRun<F> {
    pub lambda: F,
    /// Number of covariates in the post-LASSO fit.
    pub s_hat: usize,
    pub correlation: F,
    pub quantile: Option<F>,
    pub spurious: bool,
}

/// Cross-validated LASSO, post-LASSO refit and, unless nothing was selected,
/// the discovery check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostLassoDiscovery<F> {
    pub lambda: F,
    pub fit: FitResult<F>,
    pub report: Option<TestReport<F>>,
}

/// Cross-validation draws from `rng/"cv"` and the bootstrap from
/// `rng/"bootstrap"`. The check runs at `s_override` or, by default, at the
/// number of covariates in the post-LASSO fit.
pub fn post_lasso_discovery<F: Real>(
    d: &Dataset<F>,
    alpha: F,
    reps: usize,
    folds: usize,
    opts: &DiscoveryOptions,
    s_override: Option<usize>,
    rng: &RngStream,
) -> Result<PostLassoDiscovery<F>> {
    let cv = cv_lasso(d, folds, &rng.child("cv"))?;
    let fit = fit_post_lasso(d, &cv.fit)?;
    let report = if fit.support.is_empty() {
        None
    } else {
        let s = s_override.unwrap_or(fit.support.len());
        Some(check_discovery_with(d, &fit.fitted, s, alpha, reps, &rng.child("bootstrap"), opts)?)
    };
    Ok(PostLassoDiscovery {
        lambda: cv.lambda_star,
        fit,
        report,
    })
}

/// One run of the discovery study; an empty selection counts as spurious.
pub fn sdp_single_run<F: Real>(
    d: &Dataset<F>,
    alpha: F,
    reps: usize,
    folds: usize,
    method: &SearchMethod,
    rng: &RngStream,
) -> Result<SdpRun<F>> {
    let opts = DiscoveryOptions {
        corrected: true,
        method: *method,
    };
    let out = post_lasso_discovery(d, alpha, reps, folds, &opts, None, rng)?;
    Ok(match out.report {
        None => SdpRun {
            lambda: out.lambda,
            s_hat: 0,
            correlation: F::zero(),
            quantile: None,
            spurious: true,
        },
        Some(report) => SdpRun {
            lambda: out.lambda,
            s_hat: out.fit.support.len(),
            correlation: report.statistic,
            quantile: Some(report.reference.value()),
            spurious: report.decision == Decision::Spurious,
        },
    })
}

/// Data set of the spurious-discovery design: low-rank covariates, the
/// sparse coefficient vector `(1, 0, −0.8, 0, 0.6, 0, −0.4, 0, …)` and
/// Gaussian noise times `noise_scale`.
pub fn sdp_dataset<F: Real>(
    p: usize,
    r: usize,
    basis_seed: u64,
    n: usize,
    noise_scale: F,
    rng: &RngStream,
) -> Result<Dataset<F>> {
    let mut spec = LinearModelSpec::new(
        LinearModelSpec::<F>::sdp_beta(p),
        CovarianceModel::LowRank { p, r, basis_seed },
        NoiseModel::Gaussian,
    )?;
    spec.noise_scale = noise_scale;
    sample_linear_model(&spec, n, rng)
}

/// Stream of run `i` in cell `(n, r)`; data come from its `"data"` child and
/// the analysis from its `"analysis"` child.
pub fn sdp_run_stream(seed: u64, n: usize, r: usize, i: usize) -> RngStream {
    RngStream::new(seed).child("sdp").child(n).child(r).child(i)
}

/// Empirical spurious-discovery probabilities over the `(n, r)` grid; run
/// streams come from [`sdp_run_stream`]. The basis of the low-rank design
/// is drawn from `preset.basis_seed`.
pub fn run_sdp_study<F: Real>(cfg: &ExperimentConfig<F>) -> Result<TableResult<F>> {
    run_sdp_study_with(cfg, F::one())
}

/// As [`run_sdp_study`], with the noise multiplied by `noise_scale`.
pub fn run_sdp_study_with<F: Real>(cfg: &ExperimentConfig<F>, noise_scale: F) -> Result<TableResult<F>> {
    if cfg.r_grid.is_empty() || cfg.r_grid.iter().any(|&r| r < 1 || r > cfg.p) {
        return Err(Error::InvalidArgument("r grid must be nonempty with 1 <= r <= p".into()));
    }
    if cfg.alphas.len() != 1 {
        return Err(Error::InvalidArgument("the discovery study takes exactly one alpha".into()));
    }
    let alpha = cfg.alphas[0];
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    let mut cells = Vec::new();
    for n in cfg.ns() {
        for &r in &cfg.r_grid {
            let runs: Vec<SdpRun<F>> = (0..cfg.reps_outer)
                .into_par_iter()
                .map(|i| {
                    let rng = sdp_run_stream(cfg.seed, n, r, i);
                    let d = sdp_dataset(cfg.p, r, cfg.preset.basis_seed, n, noise_scale, &rng.child("data"))?;
                    sdp_single_run(&d, alpha, cfg.reps_inner, cfg.folds, &cfg.method, &rng.child("analysis"))
                })
                .collect::<Result<_>>()?;
            let raw: Vec<F> = runs.iter().map(|r| if r.spurious { F::one() } else { F::zero() }).collect();
            let s_hat: Vec<F> = runs.iter().map(|r| F::from_usize_lossy(r.s_hat)).collect();
            let corr: Vec<F> = runs.iter().map(|r| r.correlation).collect();
            let extra = vec![
                ("mean_s_hat".into(), mean_sd(&s_hat).0),
                ("mean_correlation".into(), mean_sd(&corr).0),
            ];
            cells.push(table_cell(
                vec![
                    ("n".into(), n.to_string()),
                    ("r".into(), r.to_string()),
                    ("alpha".into(), alpha.to_string()),
                ],
                raw,
                extra,
            ));
        }
    }
    Ok(TableResult {
        name: "sdp".into(),
        cells,
    })
}

/// Per-margin comparison of `(nR̂²(1), nR̂²(2) − nR̂²(1), …)` with
/// `(Z²₍p₎, Z²₍p−1₎, …)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointNullReport<F> {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub reps: usize,
    /// Two-sample KS distance per margin.
    pub ks: Vec<F>,
    pub increments_nonnegative: bool,
    /// Increments per run.
    pub increments: Vec<Vec<F>>,
}

/// Joint check under the isotropic design; data from `seed/"joint"/i`,
/// order statistics from `seed/"order-stats"`.
pub fn run_joint_null_check<F: Real>(cfg: &ExperimentConfig<F>) -> Result<JointNullReport<F>> {
    cfg.validate()?;
    if cfg.scenario != "isotropic" {
        return Err(Error::InvalidArgument("the joint check runs under the isotropic design only".into()));
    }
    let s = *cfg.s.iter().max().ok_or_else(|| Error::InvalidArgument("need s >= 1".into()))?;
    let n = cfg.n;
    let model = cfg.model(cfg.p)?;
    let root = RngStream::new(cfg.seed);
    let base = root.child("joint");
    let nf = F::from_usize_lossy(n);
    let increments: Vec<Vec<F>> = (0..cfg.reps_outer)
        .into_par_iter()
        .map(|i| {
            let d = sample_null(&model, cfg.noise, n, &base.child(i))?;
            let seq = compute_spurious_sequence(&d, s, &cfg.method)?;
            let mut prev = F::zero();
            Ok(seq
                .iter()
                .map(|e| {
                    let cur = nf * e.r_hat * e.r_hat;
                    let inc = cur - prev;
                    prev = cur;
                    inc
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let order = topk_order_statistics::<F>(cfg.p, s, cfg.reps_outer, &root.child("order-stats"))?;
    let ks = (0..s)
        .map(|k| {
            let a: Vec<F> = increments.iter().map(|v| v[k]).collect();
            let b: Vec<F> = order.iter().map(|v| v[k]).collect();
            ks_two_sample(&a, &b)
        })
        .collect();
    let tol = F::c(-1e-9);
    let increments_nonnegative = increments.iter().all(|v| v.iter().all(|x| *x >= tol));
    Ok(JointNullReport {
        n,
        p: cfg.p,
        s,
        reps: cfg.reps_outer,
        ks,
        increments_nonnegative,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let h = Histogram::new(&v, 7);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges.len(), 8);
        let flat = Histogram::new(&[2.0f64; 5], 3);
        assert_eq!(flat.counts.iter().sum::<usize>(), 5);
    }

    #[test]
    fn null_mean_increases_with_s() {
        let mut cfg = ExperimentConfig::<f64>::new("isotropic", 50, 300, vec![1, 5], 1);
        cfg.reps_outer = 20;
        let res = run_null_distribution(&cfg).unwrap();
        assert_eq!(res.cells.len(), 2);
        assert!(res.cells[1].mean > res.cells[0].mean);
        for (a, b) in res.cells[0].values.iter().zip(&res.cells[1].values) {
            assert!(b >= a);
        }
    }

    #[test]
    fn null_runs_reproducible() {
        let mut cfg = ExperimentConfig::<f64>::new("block", 30, 40, vec![1, 2], 2);
        cfg.preset.block_size = Some(10);
        cfg.reps_outer = 10;
        cfg.overlay = true;
        cfg.reps_inner = 100;
        let a = run_null_distribution(&cfg).unwrap();
        let b = run_null_distribution(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells[0].overlay.as_ref().unwrap().len(), 100);
    }

    #[test]
    fn size_study_small() {
        let mut cfg = ExperimentConfig::<f64>::new("isotropic", 40, 30, vec![1], 3);
        cfg.reps_outer = 50;
        cfg.reps_inner = 100;
        cfg.reference_reps = Some(200);
        cfg.alphas = vec![0.1, 1.0 - 1.0 / 200.0];
        let t = run_size_study(&cfg).unwrap();
        assert_eq!(t.cells.len(), 2);
        let c = &t.cells[0];
        assert!(c.mean > 0.0 && c.mean < 0.3);
        // quantile at the bottom of the reference support: nearly every
        // bootstrap replicate exceeds it
        assert!(t.cells[1].mean > 0.95);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,s,alpha,mean,sd,se,runs"));
    }

    #[test]
    fn noiseless_sdp_is_zero() {
        let mut cfg = ExperimentConfig::<f64>::new("lowrank", 40, 30, vec![], 4);
        cfg.r_grid = vec![20];
        cfg.reps_outer = 5;
        cfg.reps_inner = 100;
        cfg.folds = 5;
        cfg.alphas = vec![0.05];
        let t = run_sdp_study_with(&cfg, 0.0).unwrap();
        assert_eq!(t.cells[0].mean, 0.0);
    }

    #[test]
    fn joint_increments_nonnegative() {
        let mut cfg = ExperimentConfig::<f64>::new("isotropic", 60, 200, vec![2], 5);
        cfg.reps_outer = 30;
        let r = run_joint_null_check(&cfg).unwrap();
        assert!(r.increments_nonnegative);
        assert_eq!(r.ks.len(), 2);
    }

    #[test]
    fn presets_validate() {
        for name in EXPERIMENT_PRESETS {
            ExperimentConfig::<f64>::preset(name, 1).unwrap().validate().unwrap();
        }
    }
}
