//! Multiplier bootstrap for the null law of the maximum spurious correlation.
//!
//! Each replicate draws `ξ ~ N(0, I_n)`, forms `z = n^{-1/2} Σ ξᵢ(Xᵢ − X̄)` and
//! maximizes `z_Sᵀ Σ̂_SS⁻¹ z_S` over size-`s` subsets with the same search used
//! for the observed statistic. The corrected version rescales by `√n/|ξ|₂`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::float::{dot, Real};
use crate::linalg::{Cholesky, CovarianceSource, Matrix, SINGULAR_PIVOT_TOL};
use crate::rng::{gaussian_vector, RngStream};
use crate::subset_search::{solve, SearchMethod, SubsetProblem};

/// Smallest replicate count accepted by the distribution builders.
pub const MIN_REPS: usize = 100;
/// `D̂` entries below this multiple of the unresidualized variance are dropped.
pub const DEGENERATE_COORDINATE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Plain multiplier bootstrap.
    Mb,
    /// Corrected multiplier bootstrap.
    Cmb,
    /// Max-abs process over covariates residualized on a selected set.
    LlaMb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `√n`-scale, comparable to `√n·R̂ₙ`.
    Raw,
    /// Correlation scale, comparable to `R̂ₙ`.
    PerSqrtN,
}

/// Sorted bootstrap replicates with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDistribution<F> {
    values: Vec<F>,
    pub reps: usize,
    pub seed: RngStream,
    pub statistic: Statistic,
    pub scale: Scale,
    pub n: usize,
    /// Subset size (`1` for the max-abs process).
    pub s: usize,
    pub method: SearchMethod,
    /// Covariates excluded from the process, with the reason logged.
    pub dropped: Vec<usize>,
}

impl<F: Real> BootstrapDistribution<F> {
    fn from_values(
        mut values: Vec<F>,
        seed: RngStream,
        statistic: Statistic,
        n: usize,
        s: usize,
        method: SearchMethod,
    ) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite replicate"));
        BootstrapDistribution {
            reps: values.len(),
            values,
            seed,
            statistic,
            scale: Scale::Raw,
            n,
            s,
            method,
            dropped: Vec::new(),
        }
    }

    /// Builds a distribution from arbitrary values (sorted on construction).
    pub fn from_sample(values: Vec<F>, statistic: Statistic, scale: Scale, n: usize) -> Self {
        let mut d = Self::from_values(values, RngStream::new(0), statistic, n, 1, SearchMethod::default());
        d.scale = scale;
        d
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// The same replicates on the requested scale.
    pub fn with_scale(&self, scale: Scale) -> Self {
        if scale == self.scale {
            return self.clone();
        }
        let rn = F::from_usize_lossy(self.n).sqrt();
        let values = self
            .values
            .iter()
            .map(|v| match scale {
                Scale::PerSqrtN => *v / rn,
                Scale::Raw => *v * rn,
            })
            .collect();
        BootstrapDistribution {
            values,
            scale,
            ..self.clone()
        }
    }

    /// Upper-`alpha` quantile: the `⌈(1−α)·reps⌉`-th smallest value.
    pub fn quantile(&self, alpha: F) -> Result<F> {
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        let reps = self.values.len();
        let pos = ((F::one() - alpha) * F::from_usize_lossy(reps)).to_f64_lossy();
        // guard against 0.95·100 = 95.00000000000001
        let rounded = pos.round();
        let k = if (pos - rounded).abs() < 1e-9 { rounded } else { pos.ceil() } as usize;
        Ok(self.values[k.clamp(1, reps) - 1])
    }

    /// `(1 + #{replicates ≥ t})/(reps + 1)`.
    pub fn pvalue(&self, t: F) -> F {
        let below = self.values.partition_point(|v| *v < t);
        let at_least = self.values.len() - below;
        F::from_usize_lossy(1 + at_least) / F::from_usize_lossy(self.values.len() + 1)
    }

    /// Fraction of replicates at least `t`.
    pub fn exceedance(&self, t: F) -> F {
        let below = self.values.partition_point(|v| *v < t);
        F::from_usize_lossy(self.values.len() - below) / F::from_usize_lossy(self.values.len())
    }

    /// Single-column CSV of the sorted replicates.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value")?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Multiplier process on one dataset with the centered covariance prepared once.
#[derive(Debug, Clone)]
pub struct MultiplierBootstrap<F> {
    cov: CovarianceSource<F>,
    s: usize,
    method: SearchMethod,
}

/// One replicate in both forms, from the same `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate<F> {
    pub plain: F,
    pub corrected: F,
}

impl<F: Real> MultiplierBootstrap<F> {
    pub fn new(d: &Dataset<F>, s: usize, method: SearchMethod) -> Result<Self> {
        let (n, p) = (d.n(), d.p());
        if s < 1 || s > p {
            return Err(Error::InvalidArgument(format!("s = {s} must satisfy 1 <= s <= p = {p}")));
        }
        if n < s + 2 {
            return Err(Error::InvalidArgument(format!("need n >= s + 2, got n = {n}, s = {s}")));
        }
        Ok(MultiplierBootstrap {
            cov: CovarianceSource::auto(d.centered_x()),
            s,
            method,
        })
    }

    pub fn n(&self) -> usize {
        self.cov.n()
    }

    /// `z = n^{-1/2} X_cᵀ ξ`; exactly zero for constant `ξ`.
    pub fn process(&self, xi: &[F]) -> Vec<F> {
        if xi.iter().all(|v| *v == xi[0]) {
            return vec![F::zero(); self.cov.p()];
        }
        let rn = F::from_usize_lossy(self.n()).sqrt();
        self.cov.centered().tr_matvec(xi).into_iter().map(|v| v / rn).collect()
    }

    /// Replicate for a given multiplier vector (raw scale).
    pub fn replicate_with(&self, xi: &[F]) -> Result<Replicate<F>> {
        if xi.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "multiplier vector has length {}, expected {}",
                xi.len(),
                self.n()
            )));
        }
        let z = self.process(xi);
        let plain = if z.iter().all(|v| *v == F::zero()) {
            F::zero()
        } else {
            let prob = SubsetProblem::new(&self.cov, &z, self.s)?;
            solve(&prob, &self.method)?.value.max(F::zero()).sqrt()
        };
        let xi_norm = dot(xi, xi).sqrt();
        let corrected = if xi_norm > F::zero() {
            plain * F::from_usize_lossy(self.n()).sqrt() / xi_norm
        } else {
            F::zero()
        };
        Ok(Replicate { plain, corrected })
    }

    /// Replicate drawing `ξ` from `rng`.
    pub fn replicate(&self, rng: &RngStream) -> Result<Replicate<F>> {
        self.replicate_with(&gaussian_vector(rng, self.n()))
    }

    /// Replicates `0..reps` in index order; replicate `i` uses
    /// `rng/"bootstrap"/i`.
    pub fn replicates(&self, reps: usize, rng: &RngStream) -> Result<Vec<Replicate<F>>> {
        let base = rng.child("bootstrap");
        (0..reps)
            .into_par_iter()
            .map(|i| self.replicate(&base.child(i)))
            .collect()
    }

    pub fn distribution(&self, reps: usize, rng: &RngStream, corrected: bool) -> Result<BootstrapDistribution<F>> {
        if reps < MIN_REPS {
            return Err(Error::InvalidArgument(format!("reps = {reps} is below the minimum {MIN_REPS}")));
        }
        let values = self
            .replicates(reps, rng)?
            .into_iter()
            .map(|r| if corrected { r.corrected } else { r.plain })
            .collect();
        Ok(BootstrapDistribution::from_values(
            values,
            rng.clone(),
            if corrected { Statistic::Cmb } else { Statistic::Mb },
            self.n(),
            self.s,
            self.method,
        ))
    }
}

/// One replicate of the (optionally corrected) multiplier statistic, raw scale.
pub fn multiplier_replicate<F: Real>(
    d: &Dataset<F>,
    s: usize,
    rng: &RngStream,
    corrected: bool,
    method: &SearchMethod,
) -> Result<F> {
    let r = MultiplierBootstrap::new(d, s, *method)?.replicate(rng)?;
    Ok(if corrected { r.corrected } else { r.plain })
}

/// Distribution of `reps` replicates, raw scale.
pub fn bootstrap_distribution<F: Real>(
    d: &Dataset<F>,
    s: usize,
    reps: usize,
    rng: &RngStream,
    corrected: bool,
    method: &SearchMethod,
) -> Result<BootstrapDistribution<F>> {
    MultiplierBootstrap::new(d, s, *method)?.distribution(reps, rng, corrected)
}

/// Covariates outside a selected set, residualized on it.
#[derive(Debug, Clone)]
pub struct LlaProcess<F> {
    /// Residualized, centered columns of the retained covariates.
    resid: Matrix<F>,
    /// `√D̂_j` per retained column.
    scale: Vec<F>,
    /// Original indices of the retained columns.
    pub retained: Vec<usize>,
    /// Original indices of non-selected columns spanned by the selection.
    pub dropped: Vec<usize>,
}

impl<F: Real> LlaProcess<F> {
    pub fn new(d: &Dataset<F>, selected: &[usize]) -> Result<Self> {
        let (n, p) = (d.n(), d.p());
        if selected.is_empty() {
            return Err(Error::EmptySelection);
        }
        let mut sel = selected.to_vec();
        sel.sort_unstable();
        sel.dedup();
        if sel.iter().any(|&j| j >= p) {
            return Err(Error::InvalidArgument("selected index out of range".into()));
        }
        if sel.len() >= p {
            return Err(Error::InvalidArgument(format!(
                "selected set has {} of p = {p} covariates; nothing left to test",
                sel.len()
            )));
        }
        let xc = d.centered_x();
        let nf = F::from_usize_lossy(n);
        let xs = xc.select_columns(&sel);
        let chol = Cholesky::new(&xs.scaled_gram(), F::c(SINGULAR_PIVOT_TOL))?;
        let others: Vec<usize> = (0..p).filter(|j| sel.binary_search(j).is_err()).collect();
        let mut cols = Vec::with_capacity(others.len());
        let mut scale = Vec::with_capacity(others.len());
        let mut retained = Vec::with_capacity(others.len());
        let mut dropped = Vec::new();
        for &j in &others {
            let xj = xc.col(j);
            let cross: Vec<F> = xs.tr_matvec(xj).into_iter().map(|v| v / nf).collect();
            let coef = chol.solve(&cross);
            let fitted = xs.matvec(&coef);
            let r: Vec<F> = xj.iter().zip(&fitted).map(|(a, b)| *a - *b).collect();
            let var = dot(&r, &r) / nf;
            let orig = dot(xj, xj) / nf;
            if !(var >= F::c(DEGENERATE_COORDINATE) * orig.max(F::one())) {
                log::warn!("covariate {j} is spanned by the selected set; dropped from the null process");
                dropped.push(j);
                continue;
            }
            scale.push(var.sqrt());
            retained.push(j);
            cols.push(r);
        }
        if retained.is_empty() {
            return Err(Error::InvalidData(
                "every non-selected covariate is spanned by the selected set".into(),
            ));
        }
        Ok(LlaProcess {
            resid: Matrix::from_columns(&cols),
            scale,
            retained,
            dropped,
        })
    }

    pub fn n(&self) -> usize {
        self.resid.nrows()
    }

    /// `|D̂^{-1/2} z^lla|_∞` for a given multiplier vector.
    pub fn replicate_with(&self, xi: &[F]) -> F {
        let rn = F::from_usize_lossy(self.n()).sqrt();
        self.resid
            .tr_matvec(xi)
            .into_iter()
            .zip(&self.scale)
            .map(|(v, s)| (v / rn / *s).abs())
            .fold(F::zero(), F::max)
    }

    pub fn distribution(&self, reps: usize, rng: &RngStream) -> Result<BootstrapDistribution<F>> {
        if reps < MIN_REPS {
            return Err(Error::InvalidArgument(format!("reps = {reps} is below the minimum {MIN_REPS}")));
        }
        let base = rng.child("bootstrap");
        let n = self.n();
        let values: Vec<F> = (0..reps)
            .into_par_iter()
            .map(|i| self.replicate_with(&gaussian_vector(&base.child(i), n)))
            .collect();
        let mut dist =
            BootstrapDistribution::from_values(values, rng.clone(), Statistic::LlaMb, n, 1, SearchMethod::default());
        dist.dropped = self.dropped.clone();
        Ok(dist)
    }
}

/// Null law of the max-abs correlation between residuals and covariates
/// outside `selected`, after residualizing those covariates on the selection.
pub fn lla_null_distribution<F: Real>(
    d: &Dataset<F>,
    selected: &[usize],
    reps: usize,
    rng: &RngStream,
) -> Result<BootstrapDistribution<F>> {
    LlaProcess::new(d, selected)?.distribution(reps, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{a_p, gumbel_like_cdf, regularized_lower_gamma};
    use crate::datagen::{sample_covariates, CovarianceModel};

    fn dataset(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        sample_covariates(&CovarianceModel::Identity { p }, n, &RngStream::new(seed)).unwrap()
    }

    #[test]
    fn scalar_case_hand_formula() {
        let d = dataset(30, 1, 1);
        let rng = RngStream::new(2);
        let xi: Vec<f64> = gaussian_vector(&rng, 30);
        let xc = d.centered_x();
        let c = xc.col(0);
        let n = 30.0f64;
        let norm_n = (dot(c, c) / n).sqrt();
        let hand = dot(&xi, c).abs() / (norm_n * n.sqrt());
        let got = multiplier_replicate(&d, 1, &rng, false, &SearchMethod::default()).unwrap();
        assert!((got - hand).abs() < 1e-12);
    }

    #[test]
    fn corrected_is_bounded_and_scaled() {
        let d = dataset(40, 15, 3);
        let mb = MultiplierBootstrap::new(&d, 2, SearchMethod::default()).unwrap();
        let rn = 40f64.sqrt();
        for i in 0..50 {
            let rng = RngStream::new(4).child(i as u64);
            let xi: Vec<f64> = gaussian_vector(&rng, 40);
            let r = mb.replicate_with(&xi).unwrap();
            assert!(r.corrected / rn <= 1.0 + 1e-12);
            assert!(r.corrected >= 0.0);
            assert_eq!(r.corrected, r.plain * rn / dot(&xi, &xi).sqrt());
        }
    }

    #[test]
    fn constant_multipliers_give_zero() {
        let d = dataset(20, 5, 5);
        let mb = MultiplierBootstrap::new(&d, 2, SearchMethod::default()).unwrap();
        let r = mb.replicate_with(&[1.7; 20]).unwrap();
        assert_eq!(r.plain, 0.0);
        assert_eq!(r.corrected, 0.0);
    }

    #[test]
    fn quantile_convention() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let b = BootstrapDistribution::from_sample(v, Statistic::Cmb, Scale::Raw, 10);
        assert_eq!(b.quantile(0.05).unwrap(), 95.0);
        assert_eq!(b.quantile(0.5).unwrap(), 50.0);
        assert!(b.quantile(0.01).unwrap() >= b.quantile(0.1).unwrap());
        let sym = BootstrapDistribution::from_sample(vec![-2.0f64, -1.0, 0.0, 1.0, 2.0], Statistic::Mb, Scale::Raw, 5);
        assert_eq!(sym.quantile(0.5).unwrap(), 0.0);
        assert!(b.quantile(0.0).is_err());
        assert!((b.pvalue(95.5) - 6.0 / 101.0).abs() < 1e-15);
        assert!((b.pvalue(1000.0) - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn determinism_and_substream_stability() {
        let d = dataset(25, 8, 6);
        let rng = RngStream::new(7);
        let method = SearchMethod::default();
        let a = bootstrap_distribution(&d, 2, 100, &rng, true, &method).unwrap();
        let b = bootstrap_distribution(&d, 2, 100, &rng, true, &method).unwrap();
        assert_eq!(a.values(), b.values());
        let mb = MultiplierBootstrap::new(&d, 2, method).unwrap();
        let r100 = mb.replicates(100, &rng).unwrap();
        let r200 = mb.replicates(200, &rng).unwrap();
        assert_eq!(r100[..], r200[..100]);
    }

    #[test]
    fn upper_quantile_near_limit() {
        let d = dataset(200, 200, 8);
        let dist = bootstrap_distribution(&d, 1, 2000, &RngStream::new(9), false, &SearchMethod::default()).unwrap();
        let ap = a_p::<f64>(200).unwrap();
        let q = dist.quantile(0.05).unwrap();
        let centered = q * q - ap;
        let upper_point = |cdf: &dyn Fn(f64) -> f64| {
            let (mut lo, mut hi) = (-10.0f64, 30.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < 0.95 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        // max of 200 independent χ²₁ minus a_p, and its p → ∞ limit
        let exact = upper_point(&|t| regularized_lower_gamma(0.5, (ap + t) / 2.0).powi(200));
        let limit = upper_point(&|t| gumbel_like_cdf(t));
        assert!((limit - 4.7959).abs() < 1e-3);
        // Monte Carlo SE of the quantile is about 0.2 at 2000 replicates
        assert!((centered - exact).abs() < 0.6, "{centered} vs {exact}");
    }

    #[test]
    fn conditional_covariance() {
        let d = dataset(60, 4, 10);
        let mb = MultiplierBootstrap::new(&d, 1, SearchMethod::default()).unwrap();
        let sigma = d.centered_x().scaled_gram();
        let dirs = [vec![1.0, 0.0, 0.0, 0.0], vec![0.5, -0.5, 0.5, 0.5]];
        let reps = 2000;
        let zs: Vec<Vec<f64>> = (0..reps)
            .map(|i| mb.process(&gaussian_vector(&RngStream::new(11).child(i as u64), 60)))
            .collect();
        for a in &dirs {
            for b in &dirs {
                let emp = zs.iter().map(|z| dot(a, z) * dot(b, z)).sum::<f64>() / reps as f64;
                let pop = dot(a, &sigma.matvec(b));
                assert!((emp - pop).abs() <= 0.05 * pop.abs().max(0.2), "{emp} vs {pop}");
            }
        }
    }

    #[test]
    fn lla_matches_hand_computation() {
        let d = dataset(50, 30, 12);
        let sel = [3usize, 17];
        let proc_ = LlaProcess::new(&d, &sel).unwrap();
        let xi: Vec<f64> = gaussian_vector(&RngStream::new(13), 50);
        let got = proc_.replicate_with(&xi);

        // hand-rolled: normal equations on the selected pair, residualize, scale
        let xc = d.centered_x();
        let (a, b) = (xc.col(3), xc.col(17));
        let (aa, ab, bb) = (dot(a, a), dot(a, b), dot(b, b));
        let det = aa * bb - ab * ab;
        let mut best = 0.0f64;
        for j in (0..30).filter(|j| !sel.contains(j)) {
            let c = xc.col(j);
            let (ca, cb) = (dot(c, a), dot(c, b));
            let ka = (bb * ca - ab * cb) / det;
            let kb = (aa * cb - ab * ca) / det;
            let r: Vec<f64> = (0..50).map(|i| c[i] - ka * a[i] - kb * b[i]).collect();
            let dj = dot(&r, &r) / 50.0;
            let z = dot(&r, &xi) / 50f64.sqrt();
            best = best.max((z / dj.sqrt()).abs());
        }
        assert!((got - best).abs() < 1e-10);
    }

    #[test]
    fn lla_orthogonal_selection_is_noop() {
        // column 0 orthogonal (after centering) to the others
        let cols = vec![
            vec![1.0f64, -1.0, 1.0, -1.0, 1.0, -1.0],
            vec![1.0, 1.0, -1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0, -1.0, -1.0],
        ];
        let d = Dataset::new(Matrix::from_columns(&cols), None).unwrap();
        let lla = LlaProcess::new(&d, &[0]).unwrap();
        let xi: Vec<f64> = gaussian_vector(&RngStream::new(14), 6);
        let plain = Dataset::new(Matrix::from_columns(&cols[1..]), None).unwrap();
        let mb = MultiplierBootstrap::new(&plain, 1, SearchMethod::default()).unwrap();
        assert!((lla.replicate_with(&xi) - mb.replicate_with(&xi).unwrap().plain).abs() < 1e-12);
    }

    #[test]
    fn lla_errors_and_drops() {
        let d = dataset(20, 5, 15);
        assert!(matches!(LlaProcess::new(&d, &[]), Err(Error::EmptySelection)));
        let mut cols: Vec<Vec<f64>> = (0..3).map(|j| d.x().col(j).to_vec()).collect();
        cols.push(cols[0].iter().map(|v| 2.0 * v).collect());
        let dup = Dataset::new(Matrix::from_columns(&cols), None).unwrap();
        let lla = LlaProcess::new(&dup, &[0]).unwrap();
        assert_eq!(lla.dropped, vec![3]);
        assert_eq!(lla.retained, vec![1, 2]);
        assert!(matches!(LlaProcess::new(&dup, &[0, 3]), Err(Error::SingularGram { .. })));
    }
}
