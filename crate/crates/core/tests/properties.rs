//! Property tests for the invariants of the data, search, bootstrap,
//! limit-law, regression and inference layers.

use proptest::prelude::*;

use spurcorr::asymptotics::{gumbel_like_cdf, j_critical_value, j_pvalue, j_statistic, topk_sum_cdf};
use spurcorr::bootstrap::{MultiplierBootstrap, Scale};
use spurcorr::data::{center_columns, Dataset};
use spurcorr::datagen::{CovarianceModel, PresetParams};
use spurcorr::inference::{check_discovery, exogeneity_test, max_abs_statistic, Decision, ExoFit, ExoNull};
use spurcorr::linalg::{subset_gram, Matrix};
use spurcorr::regression::{fit_lasso, lasso_lambda_max, scad_derivative, PenaltySpec};
use spurcorr::rng::{gaussian_vector, RngStream};
use spurcorr::spurious::compute_max_spurious;
use spurcorr::subset_search::SearchMethod;

fn dataset(n: usize, p: usize, seed: u64) -> Dataset<f64> {
    let rng = RngStream::new(seed);
    let x = Matrix::from_col_major(n, p, gaussian_vector(&rng.child("x"), n * p));
    Dataset::new(x, Some(gaussian_vector(&rng.child("y"), n))).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn centering_idempotent_and_affine(seed in any::<u64>(), a in 0.1f64..5.0, b in -10.0f64..10.0) {
        let d = dataset(12, 4, seed);
        let c = center_columns(&d);
        let cc = center_columns(&c);
        for (u, v) in c.x().as_slice().iter().zip(cc.x().as_slice()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        let shifted: Vec<f64> = d.x().as_slice().iter().map(|v| a * v + b).collect();
        let ds = Dataset::new(Matrix::from_col_major(12, 4, shifted), None).unwrap();
        for (u, v) in center_columns(&ds).x().as_slice().iter().zip(c.x().as_slice()) {
            prop_assert!((u - a * v).abs() < 1e-10);
        }
    }

    #[test]
    fn subset_gram_permutation_consistent(seed in any::<u64>()) {
        let d = dataset(20, 6, seed);
        let idx = [0usize, 2, 3, 5];
        let g = subset_gram(&d, &idx).unwrap().gram();
        let perm = [3usize, 0, 2, 1];
        let cols: Vec<usize> = perm.iter().map(|&k| idx[k]).collect();
        let dp = d.select_columns(&cols).unwrap();
        let gp = subset_gram(&dp, &[0, 1, 2, 3]).unwrap().gram();
        for a in 0..4 {
            for b in 0..4 {
                prop_assert!((gp[(a, b)] - g[(perm[a], perm[b])]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn substreams_independent_of_order(seed in any::<u64>()) {
        let root = RngStream::new(seed);
        let first: Vec<f64> = gaussian_vector(&root.child(1usize), 5);
        let _: Vec<f64> = gaussian_vector(&root.child(0usize), 50);
        let again: Vec<f64> = gaussian_vector(&root.child(1usize), 5);
        prop_assert_eq!(first, again);
    }

    #[test]
    fn exhaustive_monotone_and_dominance(seed in any::<u64>(), p in 4usize..9) {
        let d = dataset(25, p, seed);
        let mut prev = 0.0;
        for s in 1..=3 {
            let ex = compute_max_spurious(&d, s, &SearchMethod::Exhaustive).unwrap();
            let two = compute_max_spurious(&d, s, &SearchMethod::two_step(p)).unwrap();
            let fwd = compute_max_spurious(&d, s, &SearchMethod::Forward).unwrap();
            prop_assert!(ex.value >= prev - 1e-12);
            prop_assert!(fwd.value <= two.value + 1e-12);
            prop_assert!(two.value <= ex.value + 1e-12);
            prop_assert!((two.value - ex.value).abs() < 1e-10);
            prev = ex.value;
        }
    }

    #[test]
    fn r_hat_affine_invariant(seed in any::<u64>(), a in 0.2f64..4.0, b in -3.0f64..3.0, c in 0.2f64..4.0) {
        let d = dataset(30, 10, seed);
        let base = compute_max_spurious(&d, 2, &SearchMethod::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&base.r_hat));
        let y: Vec<f64> = d.y().unwrap().iter().map(|v| -a * v + b).collect();
        let mut cols: Vec<Vec<f64>> = (0..10).map(|j| d.x().col(j).to_vec()).collect();
        for v in cols[3].iter_mut() {
            *v = c * *v - b;
        }
        let d2 = Dataset::new(Matrix::from_columns(&cols), Some(y)).unwrap();
        let est = compute_max_spurious(&d2, 2, &SearchMethod::default()).unwrap();
        prop_assert!((est.r_hat - base.r_hat).abs() < 1e-9);
        prop_assert_eq!(est.subset, base.subset);
    }

    #[test]
    fn r_hat_exchangeable(seed in any::<u64>()) {
        let d = dataset(30, 8, seed);
        let base = compute_max_spurious(&d, 2, &SearchMethod::Exhaustive).unwrap();
        let order = [7usize, 6, 5, 4, 3, 2, 1, 0];
        let dp = d.select_columns(&order).unwrap();
        let est = compute_max_spurious(&dp, 2, &SearchMethod::Exhaustive).unwrap();
        prop_assert!((est.r_hat - base.r_hat).abs() < 1e-12);
        let mut mapped: Vec<usize> = est.subset.iter().map(|&j| order[j]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, base.subset);
    }

    #[test]
    fn search_value_scales_quadratically(seed in any::<u64>(), c in 0.5f64..3.0) {
        let d = dataset(30, 12, seed);
        let y: Vec<f64> = d.y().unwrap().iter().map(|v| c * v).collect();
        let base = compute_max_spurious(&d, 3, &SearchMethod::default()).unwrap();
        let scaled = compute_max_spurious(&d.with_response(y).unwrap(), 3, &SearchMethod::default()).unwrap();
        prop_assert!(close(scaled.value, c * c * base.value, 1e-10));
        prop_assert_eq!(scaled.subset, base.subset);
    }

    #[test]
    fn corrected_is_rescaled_plain(seed in any::<u64>()) {
        let d = dataset(25, 10, seed);
        let mb = MultiplierBootstrap::new(&d, 2, SearchMethod::default()).unwrap();
        let xi: Vec<f64> = gaussian_vector(&RngStream::new(seed).child("xi"), 25);
        let r = mb.replicate_with(&xi).unwrap();
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert_eq!(r.corrected, r.plain * 25f64.sqrt() / norm);
    }

    #[test]
    fn corrected_distribution_in_unit_interval(seed in any::<u64>()) {
        let d = dataset(20, 15, seed);
        let mb = MultiplierBootstrap::new(&d, 3, SearchMethod::default()).unwrap();
        let dist = mb.distribution(100, &RngStream::new(seed), true).unwrap().with_scale(Scale::PerSqrtN);
        let v = dist.values();
        prop_assert_eq!(v.len(), 100);
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(v.iter().all(|x| *x >= 0.0 && *x <= 1.0 + 1e-12));
    }

    #[test]
    fn limit_cdfs_monotone(t0 in -10.0f64..10.0, dt in 0.0f64..5.0, s in 2usize..5) {
        prop_assert!(gumbel_like_cdf(t0) <= gumbel_like_cdf(t0 + dt));
        let (a, b) = (topk_sum_cdf(t0, s).unwrap(), topk_sum_cdf(t0 + dt, s).unwrap());
        prop_assert!(a <= b + 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn j_inverse(alpha in 1e-4f64..0.9999) {
        let j = j_critical_value(alpha).unwrap();
        prop_assert!((j_pvalue(j) - alpha).abs() < 1e-10);
    }

    #[test]
    fn scad_derivative_shape(lambda in 0.01f64..2.0, a in 2.1f64..6.0, t1 in 0.0f64..20.0, t2 in 0.0f64..20.0) {
        let pen = PenaltySpec::new(lambda, a).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(scad_derivative(lo, &pen) >= scad_derivative(hi, &pen));
        prop_assert_eq!(scad_derivative(0.0, &pen), lambda);
        prop_assert_eq!(scad_derivative(a * lambda + t1, &pen), 0.0);
        let eps = 1e-9;
        prop_assert!((scad_derivative(lambda - eps, &pen) - scad_derivative(lambda + eps, &pen)).abs() < 1e-6);
    }

    #[test]
    fn lasso_support_scale_equivariant(seed in any::<u64>(), c in 0.1f64..10.0) {
        let d = dataset(40, 12, seed);
        let x = d.x().clone();
        let y: Vec<f64> = d.y().unwrap().iter().enumerate().map(|(i, e)| e + 1.5 * x.col(2)[i]).collect();
        let d = d.with_response(y).unwrap();
        let lam = 0.3 * lasso_lambda_max(&d, true).unwrap();
        let base = fit_lasso(&d, lam).unwrap();
        let mut cols: Vec<Vec<f64>> = (0..12).map(|j| x.col(j).to_vec()).collect();
        for v in cols[2].iter_mut() {
            *v *= c;
        }
        let d2 = Dataset::new(Matrix::from_columns(&cols), d.y().map(|y| y.to_vec())).unwrap();
        let scaled = fit_lasso(&d2, lam).unwrap();
        prop_assert_eq!(scaled.support, base.support.clone());
        for (i, r) in base.residuals.iter().enumerate() {
            let y = d.y().unwrap()[i];
            let fitted = base.intercept + (0..12).map(|j| base.beta[j] * x.col(j)[i]).sum::<f64>();
            prop_assert!((r - (y - fitted)).abs() < 1e-10);
        }
    }

    #[test]
    fn discovery_decision_affine_invariant(seed in any::<u64>(), a in 0.5f64..3.0, b in -2.0f64..2.0) {
        let d = dataset(40, 20, seed);
        let x = d.x().clone();
        let fitted: Vec<f64> = (0..40).map(|i| x.col(0)[i] - x.col(1)[i]).collect();
        let rng = RngStream::new(seed).child("cd");
        let base = check_discovery(&d, &fitted, 2, 0.1, 100, &rng).unwrap();
        let y2: Vec<f64> = d.y().unwrap().iter().map(|v| a * v + b).collect();
        let f2: Vec<f64> = fitted.iter().map(|v| 2.0 * a * v - b).collect();
        let other = check_discovery(&d.with_response(y2).unwrap(), &f2, 2, 0.1, 100, &rng).unwrap();
        prop_assert_eq!(base.decision, other.decision);
        prop_assert!((base.statistic - other.statistic).abs() < 1e-10);
    }

    #[test]
    fn analytic_exogeneity_formulations_agree(seed in any::<u64>(), alpha in 0.01f64..0.5) {
        let d = dataset(50, 30, seed);
        let fit = ExoFit::Oracle { support: vec![0, 1] };
        let r = exogeneity_test(&d, &fit, alpha, &ExoNull::AnalyticJ, &RngStream::new(seed)).unwrap();
        let resid = spurcorr::regression::fit_oracle(&d, &[0, 1]).unwrap().residuals;
        let t = max_abs_statistic(&d, &resid, &(0..30).collect::<Vec<_>>()).unwrap();
        let j = j_statistic(t, 30).unwrap();
        let by_crit = j >= j_critical_value(alpha).unwrap();
        let by_p = j_pvalue(j) <= alpha;
        prop_assert_eq!(by_crit, by_p);
        prop_assert_eq!(r.decision == Decision::RejectExogeneity, by_crit);
        let p = r.p_value.unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn correlation_models_valid(p in 20usize..60, rho in 0.0f64..0.95) {
        let params = PresetParams { block_size: Some(10), rho: Some(rho), ..PresetParams::default() };
        for name in ["block", "anisotropic"] {
            let m = CovarianceModel::preset(name, p, &params).unwrap().materialize().unwrap();
            for i in 0..p {
                prop_assert!((m[(i, i)] - 1.0).abs() < 1e-12);
                for j in 0..p {
                    prop_assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-12);
                }
            }
            prop_assert!(spurcorr::linalg::Cholesky::new(&m, 1e-10).is_ok());
        }
    }
}
