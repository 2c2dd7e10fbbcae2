//! Least squares, LASSO with cross-validation, and one-step LLA SCAD.
//!
//! Penalized fits minimize `(2n)⁻¹|y − β₀ − Xβ|² + Σ w_j|β_j|` by cyclic
//! coordinate descent. By default columns are standardized to unit sample
//! variance first, so the penalty applies to standardized coefficients;
//! coefficients are always reported on the original scale.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::float::{dot, mean, Real};
use crate::linalg::{least_squares, Cholesky, Matrix, SINGULAR_PIVOT_TOL};
use crate::rng::{permutation, RngStream};

pub const DEFAULT_SCAD_A: f64 = 3.7;
/// Coordinate descent stops when no coefficient moves by more than this.
pub const CD_TOL: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 100_000;
pub const CV_GRID_SIZE: usize = 100;
pub const CV_MIN_RATIO: f64 = 1e-3;
pub const DEFAULT_FOLDS: usize = 10;

/// SCAD penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec<F> {
    pub lambda: F,
    pub a: F,
}

impl<F: Real> PenaltySpec<F> {
    pub fn new(lambda: F, a: F) -> Result<Self> {
        if !(lambda >= F::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} must be finite and >= 0")));
        }
        if !(a > F::c(2.0)) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!("SCAD shape a = {a} must exceed 2")));
        }
        Ok(PenaltySpec { lambda, a })
    }

    pub fn with_default_shape(lambda: F) -> Result<Self> {
        Self::new(lambda, F::c(DEFAULT_SCAD_A))
    }
}

/// How a [`FitResult`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FitMethod<F> {
    Ols { indices: Vec<usize> },
    Oracle { support: Vec<usize> },
    Lasso { lambda: F },
    PostLasso { lambda: F },
    ScadLla { lambda: F, a: F },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<F> {
    /// Coefficients on the original covariate scale, length `p`.
    pub beta: Vec<F>,
    /// `{j : beta_j ≠ 0}`, increasing.
    pub support: Vec<usize>,
    pub intercept: F,
    pub fitted: Vec<F>,
    pub residuals: Vec<F>,
    pub method: FitMethod<F>,
    /// Coordinate-descent sweeps (0 for least squares).
    pub sweeps: usize,
}

impl<F: Real> FitResult<F> {
    fn assemble(d: &Dataset<F>, beta: Vec<F>, intercept: F, method: FitMethod<F>, sweeps: usize) -> Result<Self> {
        let y = d.require_y()?;
        let xb = d.x().matvec(&beta);
        let fitted: Vec<F> = xb.iter().map(|v| intercept + *v).collect();
        let residuals = y.iter().zip(&fitted).map(|(a, b)| *a - *b).collect();
        let support = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != F::zero())
            .map(|(j, _)| j)
            .collect();
        Ok(FitResult {
            beta,
            support,
            intercept,
            fitted,
            residuals,
            method,
            sweeps,
        })
    }

    pub fn lambda(&self) -> Option<F> {
        match self.method {
            FitMethod::Lasso { lambda } | FitMethod::PostLasso { lambda } | FitMethod::ScadLla { lambda, .. } => {
                Some(lambda)
            }
            _ => None,
        }
    }
}

/// Least squares with intercept on the columns `indices`; other coefficients
/// are zero.
pub fn fit_ols<F: Real>(d: &Dataset<F>, indices: &[usize]) -> Result<FitResult<F>> {
    let mut idx = indices.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let beta = ols_coefficients(d, &idx)?;
    let intercept = intercept_for(d, &beta)?;
    FitResult::assemble(d, beta, intercept, FitMethod::Ols { indices: idx }, 0)
}

/// Least squares on the true support.
pub fn fit_oracle<F: Real>(d: &Dataset<F>, support: &[usize]) -> Result<FitResult<F>> {
    let mut fit = fit_ols(d, support)?;
    if let FitMethod::Ols { indices } = fit.method {
        fit.method = FitMethod::Oracle { support: indices };
    }
    Ok(fit)
}

fn ols_coefficients<F: Real>(d: &Dataset<F>, idx: &[usize]) -> Result<Vec<F>> {
    let (n, p) = (d.n(), d.p());
    if let Some(&j) = idx.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!("index {j} out of range for p = {p}")));
    }
    if idx.len() + 2 > n {
        return Err(Error::InvalidArgument(format!(
            "least squares on {} columns needs n >= {}, got n = {n}",
            idx.len(),
            idx.len() + 2
        )));
    }
    let mut yc = d.require_y()?.to_vec();
    if idx.is_empty() {
        return Ok(vec![F::zero(); p]);
    }
    crate::float::center_in_place(&mut yc);
    let xs = d.select_columns(idx)?.centered_x();
    let coef = least_squares(&xs, &yc).map_err(|e| match e {
        Error::SingularDesign { column } => Error::SingularDesign { column: idx[column.min(idx.len() - 1)] },
        other => other,
    })?;
    let mut beta = vec![F::zero(); p];
    for (&j, c) in idx.iter().zip(coef) {
        beta[j] = c;
    }
    Ok(beta)
}

fn intercept_for<F: Real>(d: &Dataset<F>, beta: &[F]) -> Result<F> {
    let ybar = mean(d.require_y()?);
    let mut b0 = ybar;
    for (j, b) in beta.iter().enumerate() {
        if *b != F::zero() {
            b0 -= mean(d.x().col(j)) * *b;
        }
    }
    Ok(b0)
}

/// Coordinate-descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions<F> {
    /// Penalize standardized (unit sample variance) coefficients.
    pub standardize: bool,
    pub tol: F,
    pub max_sweeps: usize,
}

impl<F: Real> Default for LassoOptions<F> {
    fn default() -> Self {
        LassoOptions {
            standardize: true,
            tol: F::c(CD_TOL),
            max_sweeps: MAX_SWEEPS,
        }
    }
}

/// Centered (and optionally scaled) design with its centering constants.
struct Prepared<F> {
    xs: Matrix<F>,
    /// Divisor mapping model-scale coefficients back to the original scale.
    scale: Vec<F>,
    /// `(1/n)|x̃_j|²`.
    col_sq: Vec<F>,
    yc: Vec<F>,
}

impl<F: Real> Prepared<F> {
    fn new(d: &Dataset<F>, standardize: bool) -> Result<Self> {
        let n = F::from_usize_lossy(d.n());
        let mut xs = d.centered_x();
        let mut scale = vec![F::one(); d.p()];
        let mut col_sq = vec![F::zero(); d.p()];
        for j in 0..d.p() {
            let var = dot(xs.col(j), xs.col(j)) / n;
            if standardize && var > F::zero() {
                let sd = var.sqrt();
                for v in xs.col_mut(j) {
                    *v /= sd;
                }
                scale[j] = sd;
                col_sq[j] = dot(xs.col(j), xs.col(j)) / n;
            } else {
                col_sq[j] = var;
            }
        }
        let mut yc = d.require_y()?.to_vec();
        crate::float::center_in_place(&mut yc);
        Ok(Prepared { xs, scale, col_sq, yc })
    }

    fn n(&self) -> F {
        F::from_usize_lossy(self.xs.nrows())
    }

    /// Smallest `λ` with an all-zero solution: `max_j |(1/n)⟨x̃_j, y_c⟩|`.
    fn lambda_max(&self) -> F {
        let n = self.n();
        (0..self.xs.ncols())
            .map(|j| (dot(self.xs.col(j), &self.yc) / n).abs())
            .fold(F::zero(), F::max)
    }

    fn objective(&self, b: &[F], resid: &[F], weights: &[F]) -> F {
        let pen: F = b.iter().zip(weights).map(|(b, w)| b.abs() * *w).sum();
        dot(resid, resid) / (F::c(2.0) * self.n()) + pen
    }

    fn residual(&self, b: &[F]) -> Vec<F> {
        let xb = self.xs.matvec(b);
        self.yc.iter().zip(xb).map(|(y, v)| *y - v).collect()
    }

    /// Cyclic coordinate descent from `b`; returns the number of sweeps.
    fn descend(&self, weights: &[F], b: &mut [F], opts: &LassoOptions<F>) -> Result<usize> {
        let n = self.n();
        let p = b.len();
        let mut resid = self.residual(b);
        let mut sweeps = 0usize;
        let mut last_obj = self.objective(b, &resid, weights);
        let update = |j: usize, b: &mut [F], resid: &mut [F]| -> F {
            let c = self.col_sq[j];
            if c <= F::zero() {
                return F::zero();
            }
            let col = self.xs.col(j);
            let z = dot(col, resid) / n + c * b[j];
            let w = weights[j];
            let new = if z > w {
                (z - w) / c
            } else if z < -w {
                (z + w) / c
            } else {
                F::zero()
            };
            let delta = new - b[j];
            if delta != F::zero() {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * *x;
                }
                b[j] = new;
            }
            delta.abs() * c.sqrt()
        };
        loop {
            let mut max_change = F::zero();
            for j in 0..p {
                max_change = max_change.max(update(j, b, &mut resid));
            }
            sweeps += 1;
            if cfg!(debug_assertions) {
                let obj = self.objective(b, &resid, weights);
                debug_assert!(
                    obj <= last_obj + F::c(1e-9) * last_obj.abs().max(F::one()),
                    "coordinate descent increased the objective"
                );
                last_obj = obj;
            }
            if max_change < opts.tol {
                return Ok(sweeps);
            }
            // iterate on the active set until it settles, then re-check all;
            // the active sweeps work on the active Gram block and gradient
            let active: Vec<usize> = (0..p).filter(|&j| b[j] != F::zero() && self.col_sq[j] > F::zero()).collect();
            let m = active.len();
            let mut gram = vec![F::zero(); m * m];
            for a in 0..m {
                for c in a..m {
                    let v = dot(self.xs.col(active[a]), self.xs.col(active[c])) / n;
                    gram[a * m + c] = v;
                    gram[c * m + a] = v;
                }
            }
            let mut grad: Vec<F> = active.iter().map(|&j| dot(self.xs.col(j), &resid) / n).collect();
            let start: Vec<F> = active.iter().map(|&j| b[j]).collect();
            let outcome = loop {
                if sweeps >= opts.max_sweeps {
                    break Err(Error::NoConvergence { sweeps });
                }
                let mut change = F::zero();
                for a in 0..m {
                    let j = active[a];
                    let c = gram[a * m + a];
                    let z = grad[a] + c * b[j];
                    let w = weights[j];
                    let new = if z > w {
                        (z - w) / c
                    } else if z < -w {
                        (z + w) / c
                    } else {
                        F::zero()
                    };
                    let delta = new - b[j];
                    if delta != F::zero() {
                        let row = &gram[a * m..(a + 1) * m];
                        for (g, gc) in grad.iter_mut().zip(row) {
                            *g -= delta * *gc;
                        }
                        b[j] = new;
                        change = change.max(delta.abs() * c.sqrt());
                    }
                }
                sweeps += 1;
                if change < opts.tol {
                    break Ok(());
                }
            };
            for (a, &j) in active.iter().enumerate() {
                let delta = b[j] - start[a];
                if delta != F::zero() {
                    for (r, x) in resid.iter_mut().zip(self.xs.col(j)) {
                        *r -= delta * *x;
                    }
                }
            }
            outcome?;
            if sweeps >= opts.max_sweeps {
                return Err(Error::NoConvergence { sweeps });
            }
        }
    }

    fn to_original(&self, b: &[F]) -> Vec<F> {
        b.iter().zip(&self.scale).map(|(b, s)| *b / *s).collect()
    }

    fn to_model(&self, beta: &[F]) -> Vec<F> {
        beta.iter().zip(&self.scale).map(|(b, s)| *b * *s).collect()
    }
}

fn check_weights<F: Real>(weights: &[F], p: usize) -> Result<()> {
    if weights.len() != p {
        return Err(Error::InvalidArgument(format!("{} weights for p = {p}", weights.len())));
    }
    if weights.iter().any(|w| !(*w >= F::zero()) || !w.is_finite()) {
        return Err(Error::InvalidArgument("penalty weights must be finite and >= 0".into()));
    }
    Ok(())
}

/// Weighted LASSO; `warm` is an optional starting point on the original scale.
pub fn fit_weighted_lasso<F: Real>(
    d: &Dataset<F>,
    weights: &[F],
    opts: &LassoOptions<F>,
    warm: Option<&[F]>,
    method: FitMethod<F>,
) -> Result<FitResult<F>> {
    check_weights(weights, d.p())?;
    let prep = Prepared::new(d, opts.standardize)?;
    let mut b = match warm {
        Some(w) if w.len() == d.p() => prep.to_model(w),
        _ => vec![F::zero(); d.p()],
    };
    let sweeps = prep.descend(weights, &mut b, opts)?;
    let beta = prep.to_original(&b);
    let intercept = intercept_for(d, &beta)?;
    FitResult::assemble(d, beta, intercept, method, sweeps)
}

pub fn fit_lasso<F: Real>(d: &Dataset<F>, lambda: F) -> Result<FitResult<F>> {
    fit_lasso_with(d, lambda, &LassoOptions::default(), None)
}

pub fn fit_lasso_with<F: Real>(
    d: &Dataset<F>,
    lambda: F,
    opts: &LassoOptions<F>,
    warm: Option<&[F]>,
) -> Result<FitResult<F>> {
    if !(lambda >= F::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be finite and >= 0")));
    }
    fit_weighted_lasso(d, &vec![lambda; d.p()], opts, warm, FitMethod::Lasso { lambda })
}

/// `λ_max`, the smallest penalty with an all-zero LASSO solution.
pub fn lasso_lambda_max<F: Real>(d: &Dataset<F>, standardize: bool) -> Result<F> {
    Ok(Prepared::new(d, standardize)?.lambda_max())
}

/// `CV_GRID_SIZE` log-spaced penalties from `λ_max` down to `CV_MIN_RATIO·λ_max`.
pub fn lambda_grid<F: Real>(lambda_max: F) -> Vec<F> {
    let k = CV_GRID_SIZE;
    let lo = F::c(CV_MIN_RATIO).ln();
    (0..k)
        .map(|i| lambda_max * (lo * F::from_usize_lossy(i) / F::from_usize_lossy(k - 1)).exp())
        .collect()
}

/// LASSO solutions along a decreasing grid, each warm-started from the last.
/// The path stops at the first penalty whose fit does not converge, or at
/// `limit`, which is lowered to the failing index; only the converged prefix
/// is returned.
fn lasso_path<F: Real>(
    prep: &Prepared<F>,
    lambdas: &[F],
    opts: &LassoOptions<F>,
    limit: &AtomicUsize,
) -> Result<Vec<Vec<F>>> {
    let p = prep.xs.ncols();
    let mut b = vec![F::zero(); p];
    let mut out = Vec::with_capacity(lambdas.len());
    for (i, &lam) in lambdas.iter().enumerate() {
        if i >= limit.load(Ordering::Relaxed) {
            break;
        }
        match prep.descend(&vec![lam; p], &mut b, opts) {
            Ok(_) => out.push(b.clone()),
            Err(Error::NoConvergence { sweeps }) => {
                if out.is_empty() {
                    return Err(Error::NoConvergence { sweeps });
                }
                log::warn!("lasso path truncated at lambda = {lam}: no convergence after {sweeps} sweeps");
                limit.fetch_min(i, Ordering::Relaxed);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Cross-validated LASSO.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvLasso<F> {
    pub lambda_star: F,
    pub lambda_max: F,
    /// Penalties evaluated: the prefix of the grid on which every fit converged.
    pub lambdas: Vec<F>,
    /// Mean held-out squared error per penalty.
    pub cv_error: Vec<F>,
    /// Standard error of `cv_error` across folds.
    pub cv_se: Vec<F>,
    pub folds: usize,
    pub fit: FitResult<F>,
}

/// K-fold cross-validated LASSO over the standard grid. Folds come from a
/// permutation drawn from `rng/"folds"`; ties in the CV error resolve to the
/// smallest penalty.
pub fn cv_lasso<F: Real>(d: &Dataset<F>, folds: usize, rng: &RngStream) -> Result<CvLasso<F>> {
    cv_lasso_with(d, folds, rng, &LassoOptions::default())
}

pub fn cv_lasso_with<F: Real>(
    d: &Dataset<F>,
    folds: usize,
    rng: &RngStream,
    opts: &LassoOptions<F>,
) -> Result<CvLasso<F>> {
    let n = d.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("folds = {folds} must satisfy 2 <= folds <= n = {n}")));
    }
    let full = Prepared::new(d, opts.standardize)?;
    let lambda_max = full.lambda_max();
    if !(lambda_max > F::zero()) {
        return Err(Error::DegenerateResponse { variance: 0.0 });
    }
    let mut lambdas = lambda_grid(lambda_max);
    let limit = AtomicUsize::new(lambdas.len());
    let perm = permutation(&rng.child("folds"), n);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    let fold_errors: Vec<Vec<F>> = (0..folds)
        .into_par_iter()
        .map(|k| -> Result<Vec<F>> {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != k).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
            let dt = d.select_rows(&train)?;
            let prep = Prepared::new(&dt, opts.standardize)?;
            let path = lasso_path(&prep, &lambdas, opts, &limit)?;
            let y = d.require_y()?;
            Ok(path
                .iter()
                .map(|b| {
                    let beta = prep.to_original(b);
                    let b0 = intercept_for(&dt, &beta).expect("training response present");
                    let sse: F = test
                        .iter()
                        .map(|&i| {
                            let pred = b0 + (0..d.p()).map(|j| d.x()[(i, j)] * beta[j]).sum::<F>();
                            let e = y[i] - pred;
                            e * e
                        })
                        .sum();
                    sse / F::from_usize_lossy(test.len())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let full_path = lasso_path(&full, &lambdas, opts, &limit)?;
    let len = fold_errors.iter().map(Vec::len).chain([full_path.len()]).min().unwrap_or(0);
    lambdas.truncate(len);
    let kf = F::from_usize_lossy(folds);
    let mut cv_error = Vec::with_capacity(lambdas.len());
    let mut cv_se = Vec::with_capacity(lambdas.len());
    for l in 0..lambdas.len() {
        let vals: Vec<F> = fold_errors.iter().map(|f| f[l]).collect();
        let m = vals.iter().copied().sum::<F>() / kf;
        let var = vals.iter().map(|v| (*v - m) * (*v - m)).sum::<F>() / (kf - F::one());
        cv_error.push(m);
        cv_se.push((var / kf).sqrt());
    }
    let mut best = 0usize;
    for l in 1..lambdas.len() {
        if cv_error[l] <= cv_error[best] {
            best = l;
        }
    }
    let lambda_star = lambdas[best];
    let beta = full.to_original(&full_path[best]);
    let intercept = intercept_for(d, &beta)?;
    let fit = FitResult::assemble(d, beta, intercept, FitMethod::Lasso { lambda: lambda_star }, 0)?;
    Ok(CvLasso {
        lambda_star,
        lambda_max,
        lambdas,
        cv_error,
        cv_se,
        folds,
        fit,
    })
}

/// Least-squares refit on a LASSO support. Columns collinear with ones
/// already kept (taken in order of decreasing standardized magnitude) are
/// left out, and at most `n − 2` columns are used.
pub fn fit_post_lasso<F: Real>(d: &Dataset<F>, lasso: &FitResult<F>) -> Result<FitResult<F>> {
    let lambda = lasso.lambda().unwrap_or(F::zero());
    let kept = independent_columns(d, &lasso.support, &lasso.beta);
    let mut fit = fit_ols(d, &kept)?;
    fit.method = FitMethod::PostLasso { lambda };
    Ok(fit)
}

fn independent_columns<F: Real>(d: &Dataset<F>, support: &[usize], beta: &[F]) -> Vec<usize> {
    let xc = d.centered_x();
    let n = F::from_usize_lossy(d.n());
    let var: Vec<F> = support.iter().map(|&j| dot(xc.col(j), xc.col(j)) / n).collect();
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| {
        let ma = beta[support[a]].abs() * var[a].sqrt();
        let mb = beta[support[b]].abs() * var[b].sqrt();
        mb.partial_cmp(&ma).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let limit = d.n().saturating_sub(2);
    let mut kept: Vec<usize> = Vec::new();
    for k in order {
        if kept.len() >= limit {
            break;
        }
        let mut trial = kept.clone();
        trial.push(support[k]);
        let g = xc.select_columns(&trial).scaled_gram();
        if Cholesky::new(&g, F::c(SINGULAR_PIVOT_TOL)).is_ok() {
            kept = trial;
        }
    }
    kept.sort_unstable();
    kept
}

/// SCAD derivative `λ·1{t ≤ λ} + (aλ − t)₊/(a − 1)·1{t > λ}`.
pub fn scad_derivative<F: Real>(t: F, pen: &PenaltySpec<F>) -> F {
    let lam = pen.lambda;
    if t <= lam {
        lam
    } else {
        (pen.a * lam - t).max(F::zero()) / (pen.a - F::one())
    }
}

/// One-step LLA: weighted LASSO with weights `p′_λ(|β_j^init|)`, where the
/// magnitude is measured on the penalized (standardized by default) scale.
pub fn fit_scad_lla<F: Real>(d: &Dataset<F>, pen: &PenaltySpec<F>, init: &FitResult<F>) -> Result<FitResult<F>> {
    fit_scad_lla_with(d, pen, init, &LassoOptions::default())
}

pub fn fit_scad_lla_with<F: Real>(
    d: &Dataset<F>,
    pen: &PenaltySpec<F>,
    init: &FitResult<F>,
    opts: &LassoOptions<F>,
) -> Result<FitResult<F>> {
    if init.beta.len() != d.p() {
        return Err(Error::InvalidArgument(format!(
            "initial estimate has length {}, expected p = {}",
            init.beta.len(),
            d.p()
        )));
    }
    let pen = PenaltySpec::new(pen.lambda, pen.a)?;
    let prep = Prepared::new(d, opts.standardize)?;
    let weights: Vec<F> = prep
        .to_model(&init.beta)
        .iter()
        .map(|b| scad_derivative(b.abs(), &pen))
        .collect();
    fit_weighted_lasso(
        d,
        &weights,
        opts,
        None,
        FitMethod::ScadLla {
            lambda: pen.lambda,
            a: pen.a,
        },
    )
}

/// Largest violation of the weighted-LASSO optimality conditions at `fit`,
/// measured on the penalized scale.
pub fn kkt_violation<F: Real>(d: &Dataset<F>, fit: &FitResult<F>, weights: &[F], standardize: bool) -> Result<F> {
    check_weights(weights, d.p())?;
    let prep = Prepared::new(d, standardize)?;
    let b = prep.to_model(&fit.beta);
    let n = prep.n();
    let mut worst = F::zero();
    for j in 0..d.p() {
        if prep.col_sq[j] <= F::zero() {
            continue;
        }
        let g = dot(prep.xs.col(j), &fit.residuals) / n;
        let v = if b[j] == F::zero() {
            (g.abs() - weights[j]).max(F::zero())
        } else {
            (g - weights[j] * b[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
