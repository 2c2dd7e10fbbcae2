//! Maximum spurious correlation between a noise (or residual) vector and the
//! best linear combination of `s` covariates.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::float::{center_in_place, dot, Real};
use crate::linalg::CovarianceSource;
use crate::subset_search::{solve, SearchMethod, SubsetProblem};

/// Variance below which a response is treated as identically zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, Serialize)]
pub struct SpuriousCorrEstimate<F> {
    pub s: usize,
    pub r_hat: F,
    pub subset: Vec<usize>,
    /// Unit-norm direction aligned with `subset`.
    pub alpha: Vec<F>,
    pub sigma_eps_sq: F,
    /// The attained `v_Sᵀ Σ̂_SS⁻¹ v_S`; equals `r_hat² · sigma_eps_sq`.
    pub value: F,
    pub method: SearchMethod,
    pub exact: bool,
    pub stalled: bool,
}

/// Precomputed pieces shared by every `s` on one dataset.
struct Prepared<F> {
    cov: CovarianceSource<F>,
    eps_c: Vec<F>,
    sigma_sq: F,
    v: Vec<F>,
}

fn materialize_for(method: &SearchMethod, p: usize) -> bool {
    match method {
        SearchMethod::Exhaustive => p <= 2000,
        _ => p <= 64,
    }
}

fn prepare<F: Real>(x: &Dataset<F>, eps: &[F], method: &SearchMethod) -> Result<Prepared<F>> {
    let n = x.n();
    let mut eps_c = eps.to_vec();
    center_in_place(&mut eps_c);
    let sigma_sq = dot(&eps_c, &eps_c) / F::from_usize_lossy(n);
    if sigma_sq < F::c(DEGENERATE_VARIANCE) {
        return Err(Error::DegenerateResponse {
            variance: sigma_sq.to_f64_lossy(),
        });
    }
    let cov = CovarianceSource::new(x.centered_x(), materialize_for(method, x.p()));
    let v = cov.cross(&eps_c);
    Ok(Prepared {
        cov,
        eps_c,
        sigma_sq,
        v,
    })
}

/// Sample correlation between `eps_c` (centered) and `X_S α`.
fn direct_correlation<F: Real>(xc: &crate::linalg::Matrix<F>, eps_c: &[F], subset: &[usize], alpha: &[F]) -> F {
    let n = xc.nrows();
    let mut comb = vec![F::zero(); n];
    for (&j, &a) in subset.iter().zip(alpha) {
        for (c, x) in comb.iter_mut().zip(xc.col(j)) {
            *c += a * *x;
        }
    }
    let num = dot(eps_c, &comb);
    let den = (dot(eps_c, eps_c) * dot(&comb, &comb)).sqrt();
    if den > F::zero() {
        num / den
    } else {
        F::zero()
    }
}

fn estimate_at<F: Real>(prep: &Prepared<F>, s: usize, method: &SearchMethod) -> Result<SpuriousCorrEstimate<F>> {
    let prob = SubsetProblem::new(&prep.cov, &prep.v, s)?;
    let sol = solve(&prob, method)?;
    let r_hat = (sol.value / prep.sigma_sq).sqrt().min(F::one());
    let check = direct_correlation(prep.cov.centered(), &prep.eps_c, &sol.subset, &sol.alpha);
    if (check - r_hat).abs() > F::check_tol() {
        log::warn!(
            "correlation recomputed from alpha ({}) differs from r_hat ({}) beyond {}",
            check,
            r_hat,
            F::check_tol()
        );
    }
    Ok(SpuriousCorrEstimate {
        s,
        r_hat,
        subset: sol.subset,
        alpha: sol.alpha,
        sigma_eps_sq: prep.sigma_sq,
        value: sol.value,
        method: *method,
        exact: sol.exact,
        stalled: sol.stalled,
    })
}

fn check_sizes(n: usize, p: usize, s: usize) -> Result<()> {
    if s < 1 || s > p {
        return Err(Error::InvalidArgument(format!(
            "s = {s} must satisfy 1 <= s <= p = {p}"
        )));
    }
    if n < s + 2 {
        return Err(Error::InvalidArgument(format!(
            "need n >= s + 2, got n = {n} and s = {s}"
        )));
    }
    Ok(())
}

/// `R̂ₙ(s,p)` for the response of `d` treated as the noise vector.
pub fn compute_max_spurious<F: Real>(
    d: &Dataset<F>,
    s: usize,
    method: &SearchMethod,
) -> Result<SpuriousCorrEstimate<F>> {
    check_sizes(d.n(), d.p(), s)?;
    let prep = prepare(d, d.require_y()?, method)?;
    estimate_at(&prep, s, method)
}

/// `R̂ₙ(k,p)` for `k = 1..=s_max`.
pub fn compute_spurious_sequence<F: Real>(
    d: &Dataset<F>,
    s_max: usize,
    method: &SearchMethod,
) -> Result<Vec<SpuriousCorrEstimate<F>>> {
    check_sizes(d.n(), d.p(), s_max)?;
    let prep = prepare(d, d.require_y()?, method)?;
    (1..=s_max).map(|k| estimate_at(&prep, k, method)).collect()
}

/// `R̂ₙ(s,p)` with fitted residuals in place of the noise.
pub fn residual_spurious<F: Real>(
    d: &Dataset<F>,
    residuals: &[F],
    s: usize,
    method: &SearchMethod,
) -> Result<SpuriousCorrEstimate<F>> {
    if residuals.len() != d.n() {
        return Err(Error::InvalidArgument(format!(
            "residuals have length {}, expected n = {}",
            residuals.len(),
            d.n()
        )));
    }
    check_sizes(d.n(), d.p(), s)?;
    let prep = prepare(d, residuals, method)?;
    estimate_at(&prep, s, method)
}

/// `|corr(ε, X_j)|` for every column `j`; zero for constant columns.
pub fn marginal_correlations<F: Real>(d: &Dataset<F>, eps: &[F]) -> Result<Vec<F>> {
    let mut e = eps.to_vec();
    center_in_place(&mut e);
    let ee = dot(&e, &e);
    if ee / F::from_usize_lossy(e.len()) < F::c(DEGENERATE_VARIANCE) {
        return Err(Error::DegenerateResponse {
            variance: (ee / F::from_usize_lossy(e.len())).to_f64_lossy(),
        });
    }
    let xc = d.centered_x();
    Ok((0..d.p())
        .map(|j| {
            let c = xc.col(j);
            let cc = dot(c, c);
            if cc > F::zero() {
                (dot(c, &e) / (cc * ee).sqrt()).abs()
            } else {
                F::zero()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::{gaussian_vector, RngStream};

    fn gaussian_dataset(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let st = RngStream::new(seed);
        let x = Matrix::from_col_major(n, p, gaussian_vector(&st.child("x"), n * p));
        Dataset::new(x, Some(gaussian_vector(&st.child("y"), n))).unwrap()
    }

    /// Brute force: correlation of ε with X_S α for the
    /// maximizing α of every subset, written without the subset machinery.
    fn brute_force(d: &Dataset<f64>, s: usize) -> f64 {
        let n = d.n();
        let p = d.p();
        let y = d.y().unwrap();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let e: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let xc = d.centered_x();
        let mut best = 0.0f64;
        let mut comb: Vec<usize> = (0..s).collect();
        loop {
            // normal equations for the regression of e on X_S: the fitted
            // combination maximizes the correlation
            let xs = xc.select_columns(&comb);
            let coef = crate::linalg::least_squares(&xs, &e).unwrap();
            let fit = xs.matvec(&coef);
            let num: f64 = e.iter().zip(&fit).map(|(a, b)| a * b).sum();
            let den = (e.iter().map(|a| a * a).sum::<f64>() * fit.iter().map(|a| a * a).sum::<f64>()).sqrt();
            best = best.max((num / den).abs());
            let mut i = s;
            while i > 0 && comb[i - 1] == p - s + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            comb[i - 1] += 1;
            for k in i..s {
                comb[k] = comb[k - 1] + 1;
            }
        }
        best
    }

    #[test]
    fn copy_of_column_is_perfectly_correlated() {
        let d = gaussian_dataset(30, 5, 1);
        let d = d.with_response(d.x().col(2).to_vec()).unwrap();
        for s in 1..=3 {
            let est = compute_max_spurious(&d, s, &SearchMethod::default()).unwrap();
            assert!((est.r_hat - 1.0).abs() < 1e-12, "s = {s}: {}", est.r_hat);
        }
    }

    #[test]
    fn one_covariate_is_absolute_correlation() {
        let d = gaussian_dataset(25, 1, 2);
        let est = compute_max_spurious(&d, 1, &SearchMethod::default()).unwrap();
        let r = crate::float::pearson(d.x().col(0), d.y().unwrap()).unwrap();
        assert!((est.r_hat - r.abs()).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_n50_p12_s2() {
        let d = gaussian_dataset(50, 12, 3);
        let est = compute_max_spurious(&d, 2, &SearchMethod::Exhaustive).unwrap();
        let bf = brute_force(&d, 2);
        assert!((est.r_hat - bf).abs() < 1e-9, "{} vs {bf}", est.r_hat);
        // alpha plugged straight into the correlation
        let mut e = d.y().unwrap().to_vec();
        center_in_place(&mut e);
        let c = direct_correlation(&d.centered_x(), &e, &est.subset, &est.alpha);
        assert!((c - est.r_hat).abs() < 1e-9);
        assert!((est.r_hat * est.r_hat * est.sigma_eps_sq - est.value).abs() < 1e-12);
    }

    #[test]
    fn signed_and_absolute_maxima_coincide() {
        // flipping alpha flips the sign, so the maximizing alpha is positive
        let d = gaussian_dataset(40, 8, 4);
        let est = compute_max_spurious(&d, 2, &SearchMethod::Exhaustive).unwrap();
        let mut e = d.y().unwrap().to_vec();
        center_in_place(&mut e);
        let c = direct_correlation(&d.centered_x(), &e, &est.subset, &est.alpha);
        assert!(c > 0.0);
        let neg: Vec<f64> = est.alpha.iter().map(|a| -a).collect();
        let cn = direct_correlation(&d.centered_x(), &e, &est.subset, &neg);
        assert!((cn + c).abs() < 1e-14);
    }

    #[test]
    fn sequence_examples() {
        let d = gaussian_dataset(20, 4, 5);
        let seq = compute_spurious_sequence(&d, 4, &SearchMethod::Exhaustive).unwrap();
        for w in seq.windows(2) {
            assert!(w[1].r_hat >= w[0].r_hat - 1e-12);
        }
        // s = p: multiple correlation of the full regression
        let xc = d.centered_x();
        let mut e = d.y().unwrap().to_vec();
        center_in_place(&mut e);
        let coef = crate::linalg::least_squares(&xc, &e).unwrap();
        let fit = xc.matvec(&coef);
        let r2 = dot(&fit, &fit) / dot(&e, &e);
        assert!((seq[3].r_hat - r2.sqrt()).abs() < 1e-10);

        let d = gaussian_dataset(40, 12, 6);
        let ex = compute_spurious_sequence(&d, 3, &SearchMethod::Exhaustive).unwrap();
        let ts = compute_spurious_sequence(&d, 3, &SearchMethod::two_step(6)).unwrap();
        for (a, b) in ts.iter().zip(&ex) {
            assert!(a.r_hat <= b.r_hat + 1e-12);
        }
    }

    #[test]
    fn residual_examples() {
        let d = gaussian_dataset(40, 10, 7);
        let y = d.y().unwrap().to_vec();
        let a = residual_spurious(&d, &y, 2, &SearchMethod::default()).unwrap();
        let b = compute_max_spurious(&d, 2, &SearchMethod::default()).unwrap();
        assert_eq!(a.subset, b.subset);
        assert_eq!(a.r_hat, b.r_hat);

        let res: Vec<f64> = gaussian_vector(&RngStream::new(70), 40);
        let est = residual_spurious(&d, &res, 1, &SearchMethod::default()).unwrap();
        let direct = marginal_correlations(&d, &res)
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max);
        assert!((est.r_hat - direct).abs() < 1e-12);

        let zero = vec![1e-9; 40];
        assert!(matches!(
            residual_spurious(&d, &zero, 1, &SearchMethod::default()),
            Err(Error::DegenerateResponse { .. })
        ));
    }

    #[test]
    fn sample_size_guard() {
        let d = gaussian_dataset(4, 6, 8);
        assert!(compute_max_spurious(&d, 3, &SearchMethod::default()).is_err());
        assert!(compute_max_spurious(&d, 2, &SearchMethod::default()).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(20))]

            #[test]
            fn affine_invariance(seed in 0u64..5000, a in 0.2f64..5.0, b in -3.0f64..3.0, flip in proptest::bool::ANY) {
                let d = gaussian_dataset(30, 7, seed);
                let base = compute_max_spurious(&d, 2, &SearchMethod::Exhaustive).unwrap();
                let sign = if flip { -1.0 } else { 1.0 };
                let y2: Vec<f64> = d.y().unwrap().iter().map(|v| sign * a * v + b).collect();
                let mut cols: Vec<Vec<f64>> = (0..7).map(|j| d.x().col(j).to_vec()).collect();
                for (j, c) in cols.iter_mut().enumerate() {
                    let scale = 0.5 + j as f64;
                    c.iter_mut().for_each(|v| *v = scale * *v - 1.0);
                }
                let d2 = Dataset::new(Matrix::from_columns(&cols), Some(y2)).unwrap();
                let other = compute_max_spurious(&d2, 2, &SearchMethod::Exhaustive).unwrap();
                prop_assert!((base.r_hat - other.r_hat).abs() < 1e-9);
                prop_assert_eq!(base.subset, other.subset);
            }

            #[test]
            fn column_permutation(seed in 0u64..5000) {
                let d = gaussian_dataset(30, 6, seed);
                let perm = [4usize, 2, 0, 5, 1, 3];
                let cols: Vec<Vec<f64>> = perm.iter().map(|&j| d.x().col(j).to_vec()).collect();
                let d2 = Dataset::new(Matrix::from_columns(&cols), d.y().map(|y| y.to_vec())).unwrap();
                let a = compute_max_spurious(&d, 2, &SearchMethod::Exhaustive).unwrap();
                let b = compute_max_spurious(&d2, 2, &SearchMethod::Exhaustive).unwrap();
                prop_assert!((a.r_hat - b.r_hat).abs() < 1e-12);
                let mut mapped: Vec<usize> = b.subset.iter().map(|&k| perm[k]).collect();
                mapped.sort_unstable();
                prop_assert_eq!(a.subset, mapped);
            }

            #[test]
            fn bounded_by_one(seed in 0u64..5000, s in 1usize..4) {
                let d = gaussian_dataset(12, 9, seed);
                let est = compute_max_spurious(&d, s, &SearchMethod::default()).unwrap();
                prop_assert!(est.r_hat >= 0.0 && est.r_hat <= 1.0);
            }
        }
    }
}
