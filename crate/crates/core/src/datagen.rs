//! Samplers for the simulation designs: covariance models, noise laws and
//! sparse linear models.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::float::Real;
use crate::linalg::{orthonormal_columns, Cholesky, Matrix, SINGULAR_PIVOT_TOL};
use crate::rng::{fill_gaussian, gaussian_vector, RngStream};

/// Size of the dense block in the anisotropic design.
pub const ANISOTROPIC_BLOCK: usize = 10;
/// Seed of the fixed orthogonal matrix behind the anisotropic block.
pub const ANISOTROPIC_BLOCK_SEED: u64 = 0x5a17_b10c;

/// Population covariance of the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel<F> {
    Identity {
        p: usize,
    },
    /// Equi-correlated leading block of size `block_size`, identity elsewhere.
    BlockEquicorr {
        p: usize,
        block_size: usize,
        rho: F,
    },
    /// `X = G₁(ρ)Z₁ + G₂(ρ)Z₂` with `Z₁ ~ N(0, A)` for a fixed 10×10
    /// correlation matrix `A` of condition number `cond_number` before
    /// rescaling.
    Anisotropic {
        p: usize,
        cond_number: F,
        rho: F,
    },
    /// Rows `Γᵣ x` with `x ~ N(0, I_r)` and `Γᵣᵀ Γᵣ = I_r`; `Γᵣ` is the
    /// orthonormalized Gaussian matrix drawn from `basis_seed`.
    LowRank {
        p: usize,
        r: usize,
        basis_seed: u64,
    },
}

/// Parameters consulted when building a model from a preset name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams<F> {
    pub block_size: Option<usize>,
    pub rho: Option<F>,
    pub cond_number: Option<F>,
    pub rank: Option<usize>,
    pub basis_seed: u64,
}

impl<F> Default for PresetParams<F> {
    fn default() -> Self {
        PresetParams {
            block_size: None,
            rho: None,
            cond_number: None,
            rank: None,
            basis_seed: 0,
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["isotropic", "block", "anisotropic", "lowrank"];

impl<F: Real> CovarianceModel<F> {
    /// Builds one of the named presets.
    ///
    /// * `isotropic`: identity.
    /// * `block`: leading block of `min(500, p)` (or `block_size`) with
    ///   correlation 0.8 (or `rho`).
    /// * `anisotropic`: condition number 5 and `ρ = 0.8` unless overridden.
    /// * `lowrank`: rank `rank` (default `p/2`).
    pub fn preset(name: &str, p: usize, params: &PresetParams<F>) -> Result<Self> {
        let model = match name {
            "isotropic" | "identity" => CovarianceModel::Identity { p },
            "block" => CovarianceModel::BlockEquicorr {
                p,
                block_size: params.block_size.unwrap_or(p.min(500)),
                rho: params.rho.unwrap_or(F::c(0.8)),
            },
            "anisotropic" => CovarianceModel::Anisotropic {
                p,
                cond_number: params.cond_number.unwrap_or(F::c(5.0)),
                rho: params.rho.unwrap_or(F::c(0.8)),
            },
            "lowrank" => CovarianceModel::LowRank {
                p,
                r: params.rank.unwrap_or((p / 2).max(1)),
                basis_seed: params.basis_seed,
            },
            other => {
                return Err(Error::InvalidModel(format!(
                    "unknown scenario {other:?}; expected one of {PRESET_NAMES:?}"
                )))
            }
        };
        model.validate()?;
        Ok(model)
    }

    pub fn p(&self) -> usize {
        match self {
            CovarianceModel::Identity { p }
            | CovarianceModel::BlockEquicorr { p, .. }
            | CovarianceModel::Anisotropic { p, .. }
            | CovarianceModel::LowRank { p, .. } => *p,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CovarianceModel::Identity { .. } => "isotropic",
            CovarianceModel::BlockEquicorr { .. } => "block",
            CovarianceModel::Anisotropic { .. } => "anisotropic",
            CovarianceModel::LowRank { .. } => "lowrank",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p() < 1 {
            return Err(Error::InvalidModel("p must be >= 1".into()));
        }
        match self {
            CovarianceModel::Identity { .. } => Ok(()),
            CovarianceModel::BlockEquicorr { p, block_size, rho } => {
                if *block_size < 1 || block_size > p {
                    return Err(Error::InvalidModel(format!(
                        "block_size = {block_size} must lie in [1, p = {p}]"
                    )));
                }
                let lower = if *block_size > 1 {
                    -F::one() / F::from_usize_lossy(block_size - 1)
                } else {
                    -F::one()
                };
                if !(*rho > lower && *rho < F::one()) {
                    return Err(Error::InvalidModel(format!(
                        "rho = {rho} must lie in ({lower}, 1) for block size {block_size}"
                    )));
                }
                Ok(())
            }
            CovarianceModel::Anisotropic { p, cond_number, rho } => {
                if *p < 2 * ANISOTROPIC_BLOCK {
                    return Err(Error::InvalidModel(format!(
                        "anisotropic design needs p >= {}, got {p}",
                        2 * ANISOTROPIC_BLOCK
                    )));
                }
                if !(*cond_number >= F::one()) || !cond_number.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "condition number {cond_number} must be finite and >= 1"
                    )));
                }
                if !(*rho >= F::zero() && *rho < F::one()) {
                    return Err(Error::InvalidModel(format!("rho = {rho} must lie in [0, 1)")));
                }
                Ok(())
            }
            CovarianceModel::LowRank { p, r, .. } => {
                if *r < 1 || r > p {
                    return Err(Error::InvalidModel(format!("rank r = {r} must lie in [1, p = {p}]")));
                }
                Ok(())
            }
        }
    }

    /// The anisotropic design's 10×10 block `A`: `Q·diag(1..c)·Qᵀ` for a fixed
    /// random orthogonal `Q`, rescaled to unit diagonal.
    pub fn anisotropic_block(cond_number: F) -> Result<Matrix<F>> {
        let k = ANISOTROPIC_BLOCK;
        let g: Matrix<F> = Matrix::from_col_major(
            k,
            k,
            gaussian_vector(&RngStream::new(ANISOTROPIC_BLOCK_SEED).child("orthogonal"), k * k),
        );
        let q = orthonormal_columns(&g)?;
        let mut a: Matrix<F> = Matrix::zeros(k, k);
        for l in 0..k {
            let ev = F::one() + (cond_number - F::one()) * F::from_usize_lossy(l) / F::from_usize_lossy(k - 1);
            for i in 0..k {
                for j in 0..k {
                    a[(i, j)] += q[(i, l)] * ev * q[(j, l)];
                }
            }
        }
        let d: Vec<F> = (0..k).map(|i| a[(i, i)].sqrt()).collect();
        for i in 0..k {
            for j in 0..k {
                a[(i, j)] /= d[i] * d[j];
            }
            a[(i, i)] = F::one();
        }
        Ok(a)
    }

    /// `Γᵣ` of the low-rank design.
    pub fn lowrank_basis(p: usize, r: usize, basis_seed: u64) -> Result<Matrix<F>> {
        let g: Matrix<F> = Matrix::from_col_major(
            p,
            r,
            gaussian_vector(&RngStream::new(basis_seed).child("lowrank-basis"), p * r),
        );
        orthonormal_columns(&g)
    }

    /// Dense `p × p` population covariance. Correlation models are checked for
    /// unit diagonal and positive definiteness.
    pub fn materialize(&self) -> Result<Matrix<F>> {
        self.validate()?;
        let p = self.p();
        let sigma = match self {
            CovarianceModel::Identity { .. } => Matrix::identity(p),
            CovarianceModel::BlockEquicorr { block_size, rho, .. } => {
                let mut m = Matrix::identity(p);
                for i in 0..*block_size {
                    for j in 0..*block_size {
                        if i != j {
                            m[(i, j)] = *rho;
                        }
                    }
                }
                m
            }
            CovarianceModel::Anisotropic { cond_number, rho, .. } => {
                let a = Self::anisotropic_block(*cond_number)?;
                let rows = anisotropic_rows(p, *rho);
                let mut m = Matrix::zeros(p, p);
                for i in 0..p {
                    for j in 0..p {
                        let (ci, ki, di) = rows[i];
                        let (cj, kj, _) = rows[j];
                        let mut v = ci * cj * a[(ki, kj)];
                        if i == j {
                            v += di * di;
                        }
                        m[(i, j)] = v;
                    }
                }
                m
            }
            CovarianceModel::LowRank { r, basis_seed, .. } => {
                let g = Self::lowrank_basis(p, *r, *basis_seed)?;
                return Ok(g.matmul(&g.transpose()));
            }
        };
        for i in 0..p {
            if (sigma[(i, i)] - F::one()).abs() > F::c(1e-12).max(F::epsilon() * F::c(8.0)) {
                return Err(Error::InvalidModel(format!("diagonal entry {i} is not 1")));
            }
        }
        Cholesky::new(&sigma, F::c(SINGULAR_PIVOT_TOL))
            .map_err(|_| Error::InvalidModel("covariance is not positive definite".into()))?;
        Ok(sigma)
    }
}

/// Per coordinate `i` of the anisotropic design: the coefficient on `Z₁`, the
/// index into `Z₁`, and the coefficient on the coordinate's own entry of `Z₂`.
fn anisotropic_rows<F: Real>(p: usize, rho: F) -> Vec<(F, usize, F)> {
    let k = ANISOTROPIC_BLOCK;
    let s1 = (F::one() + rho * rho).sqrt();
    let om = F::one() - rho;
    let s2 = (F::one() + om * om).sqrt();
    (0..p)
        .map(|i| {
            if i < k {
                (F::one(), i, F::zero())
            } else if i < 2 * k {
                (rho / s1, i - k, F::one() / s1)
            } else {
                (om / s2, 0, F::one() / s2)
            }
        })
        .collect()
}

/// Distribution of the regression noise, always mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    Gaussian,
    /// `√12·(U − 1/2)`.
    UniformStandardized,
    /// Symmetric exponential divided by `√2`.
    LaplaceStandardized,
}

impl NoiseModel {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian" | "normal" => Ok(NoiseModel::Gaussian),
            "uniform" | "uniform_standardized" => Ok(NoiseModel::UniformStandardized),
            "laplace" | "laplace_standardized" => Ok(NoiseModel::LaplaceStandardized),
            other => Err(Error::InvalidArgument(format!("unknown noise law {other:?}"))),
        }
    }

    pub fn sample<F: Real>(&self, n: usize, rng: &RngStream) -> Vec<F> {
        let mut g = rng.generator();
        (0..n)
            .map(|_| {
                let v: f64 = match self {
                    NoiseModel::Gaussian => g.sample(StandardNormal),
                    NoiseModel::UniformStandardized => 12f64.sqrt() * (g.random::<f64>() - 0.5),
                    NoiseModel::LaplaceStandardized => {
                        let e: f64 = g.sample(Exp1);
                        let sign = if g.random::<bool>() { 1.0 } else { -1.0 };
                        sign * e / std::f64::consts::SQRT_2
                    }
                };
                F::c(v)
            })
            .collect()
    }
}

/// `Y = Xᵀβ + noise_scale·ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelSpec<F> {
    pub beta: Vec<F>,
    pub cov: CovarianceModel<F>,
    pub noise: NoiseModel,
    /// Multiplies the unit-variance noise; 1 in every simulation design.
    pub noise_scale: F,
}

impl<F: Real> LinearModelSpec<F> {
    pub fn new(beta: Vec<F>, cov: CovarianceModel<F>, noise: NoiseModel) -> Result<Self> {
        if beta.len() != cov.p() {
            return Err(Error::InvalidModel(format!(
                "beta has length {}, expected p = {}",
                beta.len(),
                cov.p()
            )));
        }
        cov.validate()?;
        Ok(LinearModelSpec {
            beta,
            cov,
            noise,
            noise_scale: F::one(),
        })
    }

    /// The coefficient vector `(1, 0, −0.8, 0, 0.6, 0, −0.4, 0, …, 0)`.
    pub fn sdp_beta(p: usize) -> Vec<F> {
        let mut b = vec![F::zero(); p];
        for (i, v) in [1.0, -0.8, 0.6, -0.4].iter().enumerate() {
            if 2 * i < p {
                b[2 * i] = F::c(*v);
            }
        }
        b
    }

    /// Indices of the nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != F::zero())
            .map(|(j, _)| j)
            .collect()
    }
}

/// `n` i.i.d. rows with population covariance given by `model`.
pub fn sample_covariates<F: Real>(model: &CovarianceModel<F>, n: usize, rng: &RngStream) -> Result<Dataset<F>> {
    model.validate()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    let p = model.p();
    let mut g = rng.generator();
    let x = match model {
        CovarianceModel::Identity { .. } => {
            let mut data = vec![F::zero(); n * p];
            fill_gaussian(&mut g, &mut data);
            Matrix::from_col_major(n, p, data)
        }
        CovarianceModel::BlockEquicorr { block_size, rho, .. } => {
            let b = *block_size;
            let mut data = vec![F::zero(); n * p];
            fill_gaussian(&mut g, &mut data);
            if b > 1 {
                let block = CovarianceModel::BlockEquicorr { p: b, block_size: b, rho: *rho }.materialize()?;
                let chol = Cholesky::new(&block, F::c(SINGULAR_PIVOT_TOL))?;
                let l = chol.factor();
                let mut z = vec![F::zero(); b];
                for i in 0..n {
                    for (j, zj) in z.iter_mut().enumerate() {
                        *zj = data[j * n + i];
                    }
                    for j in 0..b {
                        let mut v = F::zero();
                        for k in 0..=j {
                            v += l[(j, k)] * z[k];
                        }
                        data[j * n + i] = v;
                    }
                }
            }
            Matrix::from_col_major(n, p, data)
        }
        CovarianceModel::Anisotropic { cond_number, rho, .. } => {
            let a = CovarianceModel::anisotropic_block(*cond_number)?;
            let chol = Cholesky::new(&a, F::c(SINGULAR_PIVOT_TOL))?;
            let l = chol.factor();
            let k = ANISOTROPIC_BLOCK;
            let rows = anisotropic_rows(p, *rho);
            let mut z1 = vec![F::zero(); n * k];
            fill_gaussian(&mut g, &mut z1);
            let mut w1 = vec![F::zero(); n * k];
            for i in 0..n {
                for j in 0..k {
                    let mut v = F::zero();
                    for m in 0..=j {
                        v += l[(j, m)] * z1[m * n + i];
                    }
                    w1[j * n + i] = v;
                }
            }
            let mut data = vec![F::zero(); n * p];
            fill_gaussian(&mut g, &mut data[k * n..]);
            for (j, (c, src, d)) in rows.iter().enumerate() {
                let col = &mut data[j * n..(j + 1) * n];
                let base = &w1[src * n..(src + 1) * n];
                for (x, b) in col.iter_mut().zip(base) {
                    *x = *c * *b + *d * *x;
                }
            }
            Matrix::from_col_major(n, p, data)
        }
        CovarianceModel::LowRank { r, basis_seed, .. } => {
            let gamma = CovarianceModel::<F>::lowrank_basis(p, *r, *basis_seed)?;
            let mut z = vec![F::zero(); n * r];
            fill_gaussian(&mut g, &mut z);
            let mut data = vec![F::zero(); n * p];
            for j in 0..p {
                let col = &mut data[j * n..(j + 1) * n];
                for k in 0..*r {
                    let c = gamma[(j, k)];
                    for (x, zk) in col.iter_mut().zip(&z[k * n..(k + 1) * n]) {
                        *x += c * *zk;
                    }
                }
            }
            Matrix::from_col_major(n, p, data)
        }
    };
    Dataset::new(x, None)
}

/// Covariates from `spec.cov` (substream `covariates`) and a response with
/// noise from substream `noise`.
pub fn sample_linear_model<F: Real>(spec: &LinearModelSpec<F>, n: usize, rng: &RngStream) -> Result<Dataset<F>> {
    let d = sample_covariates(&spec.cov, n, &rng.child("covariates"))?;
    let eps: Vec<F> = spec.noise.sample(n, &rng.child("noise"));
    let mut y = d.x().matvec(&spec.beta);
    for (yi, e) in y.iter_mut().zip(eps) {
        *yi += spec.noise_scale * e;
    }
    d.with_response(y)
}

/// Covariates from `model` with an independent unit-variance noise vector as
/// the response.
pub fn sample_null<F: Real>(model: &CovarianceModel<F>, noise: NoiseModel, n: usize, rng: &RngStream) -> Result<Dataset<F>> {
    let spec = LinearModelSpec::new(vec![F::zero(); model.p()], model.clone(), noise)?;
    sample_linear_model(&spec, n, rng)
}
