//! The two testing protocols: judging whether a discovery beats spurious
//! correlation, and testing exogeneity of a fitted sparse linear model.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{j_critical_value, j_pvalue, j_statistic};
use crate::bootstrap::{bootstrap_distribution, LlaProcess, MultiplierBootstrap, Scale};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::float::{pearson, Real};
use crate::regression::{cv_lasso, fit_oracle, fit_scad_lla, FitResult, PenaltySpec, DEFAULT_SCAD_A};
use crate::rng::RngStream;
use crate::spurious::marginal_correlations;
use crate::subset_search::SearchMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Spurious,
    NotSpurious,
    RejectExogeneity,
    FailToReject,
}

/// What the statistic was compared against.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reference<F> {
    Bootstrap { value: F, reps: usize, seed: RngStream },
    Analytic { value: F },
}

impl<F: Real> Reference<F> {
    pub fn value(&self) -> F {
        match self {
            Reference::Bootstrap { value, .. } | Reference::Analytic { value } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportContext {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub seed: Option<RngStream>,
    pub reps: Option<usize>,
    pub method: String,
    pub search: Option<SearchMethod>,
    /// Covariates the fit selected (0-based).
    pub selected: Vec<usize>,
    /// Which covariates enter the statistic: `all` or `non_selected`.
    pub statistic_over: String,
    /// Penalties used by the fit, when any.
    pub lambdas: Vec<(String, f64)>,
    /// Covariates dropped from the null process.
    pub dropped: Vec<usize>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport<F> {
    pub statistic: F,
    pub alpha: F,
    pub reference: Reference<F>,
    pub p_value: Option<F>,
    pub decision: Decision,
    pub context: ReportContext,
}

fn check_alpha<F: Real>(alpha: F) -> Result<()> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// Settings for [`check_discovery_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryOptions {
    pub corrected: bool,
    pub method: SearchMethod,
}

impl Default for DiscoveryOptions {
    fn default() -> Self {
        DiscoveryOptions {
            corrected: true,
            method: SearchMethod::default(),
        }
    }
}

/// Compares `|corr(y, fitted)|` with the upper-`alpha` quantile of the
/// corrected bootstrap at `s = s_selected`; the discovery is spurious when
/// the correlation does not exceed the quantile.
pub fn check_discovery<F: Real>(
    d: &Dataset<F>,
    fitted: &[F],
    s_selected: usize,
    alpha: F,
    reps: usize,
    rng: &RngStream,
) -> Result<TestReport<F>> {
    check_discovery_with(d, fitted, s_selected, alpha, reps, rng, &DiscoveryOptions::default())
}

pub fn check_discovery_with<F: Real>(
    d: &Dataset<F>,
    fitted: &[F],
    s_selected: usize,
    alpha: F,
    reps: usize,
    rng: &RngStream,
    opts: &DiscoveryOptions,
) -> Result<TestReport<F>> {
    check_alpha(alpha)?;
    if s_selected < 1 {
        return Err(Error::InvalidArgument("s_selected must be >= 1".into()));
    }
    let y = d.require_y()?;
    if fitted.len() != d.n() {
        return Err(Error::InvalidArgument(format!(
            "fitted values have length {}, expected n = {}",
            fitted.len(),
            d.n()
        )));
    }
    if fitted.iter().all(|v| *v == fitted[0]) {
        return Err(Error::DegenerateFit);
    }
    let corr = pearson(y, fitted)
        .ok_or(Error::DegenerateResponse { variance: 0.0 })?
        .abs();
    let dist = bootstrap_distribution(d, s_selected, reps, rng, opts.corrected, &opts.method)?
        .with_scale(Scale::PerSqrtN);
    let q = dist.quantile(alpha)?;
    let decision = if corr <= q {
        Decision::Spurious
    } else {
        Decision::NotSpurious
    };
    Ok(TestReport {
        statistic: corr,
        alpha,
        reference: Reference::Bootstrap {
            value: q,
            reps,
            seed: rng.clone(),
        },
        p_value: Some(dist.pvalue(corr)),
        decision,
        context: ReportContext {
            n: d.n(),
            p: d.p(),
            s: s_selected,
            seed: Some(rng.clone()),
            reps: Some(reps),
            method: if opts.corrected { "cmb" } else { "mb" }.into(),
            search: Some(opts.method),
            selected: Vec::new(),
            statistic_over: "all".into(),
            lambdas: Vec::new(),
            dropped: Vec::new(),
            notes: Vec::new(),
        },
    })
}

/// How residuals are obtained for the exogeneity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExoFit<F> {
    /// Cross-validated LASSO.
    LassoCv { folds: usize },
    /// One-step LLA SCAD from the cross-validated LASSO; `lambda` defaults to
    /// the cross-validated penalty.
    ScadLla { folds: usize, lambda: Option<F>, a: F },
    /// Least squares on a known support.
    Oracle { support: Vec<usize> },
    /// Residuals supplied by the caller, with the set they were selected on.
    GivenResiduals { residuals: Vec<F>, selected: Vec<usize> },
}

impl<F: Real> ExoFit<F> {
    pub fn scad_default(folds: usize) -> Self {
        ExoFit::ScadLla {
            folds,
            lambda: None,
            a: F::c(DEFAULT_SCAD_A),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ExoFit::LassoCv { .. } => "lasso_cv",
            ExoFit::ScadLla { .. } => "scad_lla",
            ExoFit::Oracle { .. } => "oracle",
            ExoFit::GivenResiduals { .. } => "given_residuals",
        }
    }
}

/// Null law used to calibrate the exogeneity statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExoNull {
    /// Multiplier bootstrap over covariates residualized on the selection.
    BootstrapLla { reps: usize },
    /// `J = T̂² − a_p` against the limit law `G`.
    AnalyticJ,
}

/// Residuals, selected set and penalty metadata of a fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExoResiduals<F> {
    pub residuals: Vec<F>,
    pub selected: Vec<usize>,
    pub lambdas: Vec<(String, f64)>,
    pub fit: Option<FitResult<F>>,
}

/// Runs the requested fit; cross-validation draws from `rng/"cv"`.
pub fn exogeneity_residuals<F: Real>(d: &Dataset<F>, fit: &ExoFit<F>, rng: &RngStream) -> Result<ExoResiduals<F>> {
    match fit {
        ExoFit::LassoCv { folds } => {
            let cv = cv_lasso(d, *folds, &rng.child("cv"))?;
            Ok(ExoResiduals {
                residuals: cv.fit.residuals.clone(),
                selected: cv.fit.support.clone(),
                lambdas: vec![("lasso".into(), cv.lambda_star.to_f64_lossy())],
                fit: Some(cv.fit),
            })
        }
        ExoFit::ScadLla { folds, lambda, a } => {
            let cv = cv_lasso(d, *folds, &rng.child("cv"))?;
            let lam = lambda.unwrap_or(cv.lambda_star);
            let pen = PenaltySpec::new(lam, *a)?;
            let f = fit_scad_lla(d, &pen, &cv.fit)?;
            Ok(ExoResiduals {
                residuals: f.residuals.clone(),
                selected: f.support.clone(),
                lambdas: vec![
                    ("lasso".into(), cv.lambda_star.to_f64_lossy()),
                    ("scad".into(), lam.to_f64_lossy()),
                ],
                fit: Some(f),
            })
        }
        ExoFit::Oracle { support } => {
            let f = fit_oracle(d, support)?;
            Ok(ExoResiduals {
                residuals: f.residuals.clone(),
                selected: f.support.clone(),
                lambdas: Vec::new(),
                fit: Some(f),
            })
        }
        ExoFit::GivenResiduals { residuals, selected } => {
            if residuals.len() != d.n() {
                return Err(Error::InvalidArgument(format!(
                    "residuals have length {}, expected n = {}",
                    residuals.len(),
                    d.n()
                )));
            }
            let mut sel = selected.clone();
            sel.sort_unstable();
            sel.dedup();
            Ok(ExoResiduals {
                residuals: residuals.clone(),
                selected: sel,
                lambdas: Vec::new(),
                fit: None,
            })
        }
    }
}

/// `max_j √n·|corr(X_j, ε̂)|` over the listed columns.
pub fn max_abs_statistic<F: Real>(d: &Dataset<F>, residuals: &[F], columns: &[usize]) -> Result<F> {
    let corr = marginal_correlations(d, residuals)?;
    let rn = F::from_usize_lossy(d.n()).sqrt();
    Ok(columns.iter().map(|&j| corr[j] * rn).fold(F::zero(), F::max))
}

/// Exogeneity test: fit, then compare `T̂` with the chosen null. Bootstrap
/// multipliers come from `rng/"null"`.
pub fn exogeneity_test<F: Real>(
    d: &Dataset<F>,
    fit: &ExoFit<F>,
    alpha: F,
    null: &ExoNull,
    rng: &RngStream,
) -> Result<TestReport<F>> {
    check_alpha(alpha)?;
    let res = exogeneity_residuals(d, fit, rng)?;
    exogeneity_test_from(d, &res, fit.name(), alpha, null, rng)
}

/// Exogeneity test on residuals that are already available.
pub fn exogeneity_test_from<F: Real>(
    d: &Dataset<F>,
    res: &ExoResiduals<F>,
    method: &str,
    alpha: F,
    null: &ExoNull,
    rng: &RngStream,
) -> Result<TestReport<F>> {
    check_alpha(alpha)?;
    let (n, p) = (d.n(), d.p());
    let mut context = ReportContext {
        n,
        p,
        s: res.selected.len(),
        seed: Some(rng.clone()),
        reps: None,
        method: method.into(),
        search: None,
        selected: res.selected.clone(),
        statistic_over: "all".into(),
        lambdas: res.lambdas.clone(),
        dropped: Vec::new(),
        notes: Vec::new(),
    };
    match null {
        ExoNull::AnalyticJ => {
            let all: Vec<usize> = (0..p).collect();
            let t_hat = max_abs_statistic(d, &res.residuals, &all)?;
            let j = j_statistic(t_hat, p)?;
            let j_alpha = j_critical_value(alpha)?;
            let decision = if j >= j_alpha {
                Decision::RejectExogeneity
            } else {
                Decision::FailToReject
            };
            context.seed = None;
            context.notes.push(format!("J = {}", j.to_f64_lossy()));
            Ok(TestReport {
                statistic: t_hat,
                alpha,
                reference: Reference::Analytic { value: j_alpha },
                p_value: Some(j_pvalue(j)),
                decision,
                context,
            })
        }
        ExoNull::BootstrapLla { reps } => {
            context.reps = Some(*reps);
            let null_rng = rng.child("null");
            let (t_hat, dist) = if res.selected.is_empty() || res.selected.len() >= p {
                context.notes.push(
                    "no usable selected set; plain s = 1 multiplier bootstrap over all covariates".into(),
                );
                let all: Vec<usize> = (0..p).collect();
                let t_hat = max_abs_statistic(d, &res.residuals, &all)?;
                let mb = MultiplierBootstrap::new(d, 1, SearchMethod::default())?;
                (t_hat, mb.distribution(*reps, &null_rng, false)?)
            } else {
                let proc_ = LlaProcess::new(d, &res.selected)?;
                context.statistic_over = "non_selected".into();
                context.dropped = proc_.dropped.clone();
                let t_hat = max_abs_statistic(d, &res.residuals, &proc_.retained)?;
                (t_hat, proc_.distribution(*reps, &null_rng)?)
            };
            let q = dist.quantile(alpha)?;
            let decision = if t_hat >= q {
                Decision::RejectExogeneity
            } else {
                Decision::FailToReject
            };
            Ok(TestReport {
                statistic: t_hat,
                alpha,
                reference: Reference::Bootstrap {
                    value: q,
                    reps: *reps,
                    seed: null_rng,
                },
                p_value: Some(dist.pvalue(t_hat)),
                decision,
                context,
            })
        }
    }
}
