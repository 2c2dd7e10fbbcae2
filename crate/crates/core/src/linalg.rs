//! Small dense linear algebra: column-major matrices, Cholesky with a relative
//! pivot guard, Householder least squares, and covariance access for subset
//! searches.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::float::{dot, Real};

/// Relative pivot tolerance below which a Gram matrix is declared singular.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-10;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    /// Builds from column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape does not match storage");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn from_columns(cols: &[Vec<F>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        let mut data = Vec::with_capacity(r * c);
        for col in cols {
            assert_eq!(col.len(), r, "ragged columns");
            data.extend_from_slice(col);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[F] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [F] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<F> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = out.col_mut(j);
            for (k, &b) in oc.iter().enumerate() {
                if b == F::zero() {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(self.col(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![F::zero(); self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b == F::zero() {
                continue;
            }
            for (d, &a) in out.iter_mut().zip(self.col(j)) {
                *d += a * b;
            }
        }
        out
    }

    /// `selfᵀ · v`.
    pub fn tr_matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.rows, v.len());
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    /// Columns `idx` in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix<F> {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Matrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// Principal submatrix on `idx` (square matrices only).
    pub fn principal(&self, idx: &[usize]) -> Matrix<F> {
        let k = idx.len();
        let mut m = Self::zeros(k, k);
        for (b, &j) in idx.iter().enumerate() {
            for (a, &i) in idx.iter().enumerate() {
                m[(a, b)] = self[(i, j)];
            }
        }
        m
    }

    pub fn frobenius(&self) -> F {
        self.data.iter().map(|v| *v * *v).sum::<F>().sqrt()
    }

    pub fn sub(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }

    /// `(1/n)·AᵀA` for a matrix whose columns are already centered.
    pub fn scaled_gram(&self) -> Matrix<F> {
        let n = F::from_usize_lossy(self.rows);
        let p = self.cols;
        let mut g = Self::zeros(p, p);
        for j in 0..p {
            for k in 0..=j {
                let v = dot(self.col(j), self.col(k)) / n;
                g[(j, k)] = v;
                g[(k, j)] = v;
            }
        }
        g
    }
}

impl<F> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[j * self.rows + i]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[j * self.rows + i]
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    l: Matrix<F>,
}

impl<F: Real> Cholesky<F> {
    /// Factorizes a symmetric matrix, failing with `SingularGram` when a pivot
    /// drops below `rel_tol` times the largest diagonal entry.
    pub fn new(a: &Matrix<F>, rel_tol: F) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky of a non-square matrix");
        let max_diag = (0..n)
            .map(|i| a[(i, i)])
            .fold(F::zero(), |m, v| if v > m { v } else { m });
        let threshold = rel_tol * max_diag;
        let mut l = Matrix::zeros(n, n);
        for k in 0..n {
            let mut d = a[(k, k)];
            for m in 0..k {
                d -= l[(k, m)] * l[(k, m)];
            }
            if !(d > threshold) || d <= F::zero() {
                return Err(Error::SingularGram {
                    position: k,
                    pivot: d.to_f64_lossy(),
                    threshold: threshold.to_f64_lossy(),
                });
            }
            let lkk = d.sqrt();
            l[(k, k)] = lkk;
            for i in (k + 1)..n {
                let mut v = a[(i, k)];
                for m in 0..k {
                    v -= l[(i, m)] * l[(k, m)];
                }
                l[(i, k)] = v / lkk;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor(&self) -> &Matrix<F> {
        &self.l
    }

    pub fn into_factor(self) -> Matrix<F> {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `L·x = b`.
    pub fn forward(&self, b: &[F]) -> Vec<F> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l[(i, k)] * x[k];
            }
            x[i] = v / self.l[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ·x = b`.
    pub fn backward(&self, b: &[F]) -> Vec<F> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= self.l[(k, i)] * x[k];
            }
            x[i] = v / self.l[(i, i)];
        }
        x
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        self.backward(&self.forward(b))
    }

    /// `bᵀ A⁻¹ b`, computed as `|L⁻¹ b|²`.
    pub fn quad_form_inv(&self, b: &[F]) -> F {
        let w = self.forward(b);
        dot(&w, &w)
    }

    pub fn logdet(&self) -> F {
        let two = F::c(2.0);
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<F>() * two
    }

    pub fn inverse(&self) -> Matrix<F> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = F::zero());
            e[j] = F::one();
            let x = self.solve(&e);
            inv.col_mut(j).copy_from_slice(&x);
        }
        inv
    }

    /// Reconstructs `L·Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<F> {
        self.l.matmul(&self.l.transpose())
    }
}

/// Cholesky factor of the centered Gram matrix of a covariate subset.
#[derive(Debug, Clone, Serialize)]
pub struct GramCache<F> {
    pub subset: Vec<usize>,
    pub chol: Matrix<F>,
    pub logdet: F,
}

impl<F: Real> GramCache<F> {
    pub fn cholesky(&self) -> Cholesky<F> {
        Cholesky {
            l: self.chol.clone(),
        }
    }

    pub fn gram(&self) -> Matrix<F> {
        self.chol.matmul(&self.chol.transpose())
    }
}

fn validate_subset(idx: &[usize], p: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument("subset must be nonempty".into()));
    }
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "subset indices must be strictly increasing".into(),
        ));
    }
    if let Some(&last) = idx.last() {
        if last >= p {
            return Err(Error::InvalidArgument(format!(
                "subset index {last} out of range for p = {p}"
            )));
        }
    }
    Ok(())
}

/// Cholesky factor of `(1/n)(X_S − X̄_S)ᵀ(X_S − X̄_S)`.
pub fn subset_gram<F: Real>(d: &Dataset<F>, s_idx: &[usize]) -> Result<GramCache<F>> {
    validate_subset(s_idx, d.p())?;
    let xc = d.x().select_columns(s_idx);
    let mut xc = xc;
    for j in 0..xc.ncols() {
        crate::float::center_in_place(xc.col_mut(j));
    }
    let gram = xc.scaled_gram();
    let chol = Cholesky::new(&gram, F::c(SINGULAR_PIVOT_TOL))?;
    let logdet = chol.logdet();
    Ok(GramCache {
        subset: s_idx.to_vec(),
        chol: chol.into_factor(),
        logdet,
    })
}

/// Householder QR least squares: minimizes `|A·x − b|₂`.
///
/// Fails with `SingularDesign` when a diagonal entry of `R` falls below
/// `1e-10` times the largest column norm.
pub fn least_squares<F: Real>(a: &Matrix<F>, b: &[F]) -> Result<Vec<F>> {
    let (m, n) = (a.nrows(), a.ncols());
    assert_eq!(m, b.len());
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > m {
        return Err(Error::SingularDesign { column: m });
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let scale = (0..n)
        .map(|j| dot(a.col(j), a.col(j)).sqrt())
        .fold(F::zero(), F::max);
    let tol = F::c(SINGULAR_PIVOT_TOL) * scale.max(F::min_positive_value());
    for k in 0..n {
        let norm = r.col(k)[k..].iter().map(|v| *v * *v).sum::<F>().sqrt();
        if norm <= tol {
            return Err(Error::SingularDesign { column: k });
        }
        let alpha = if r[(k, k)] > F::zero() { -norm } else { norm };
        let mut v: Vec<F> = r.col(k)[k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 > F::zero() {
            for j in k..n {
                let col = &mut r.col_mut(j)[k..];
                let f = F::c(2.0) * dot(&v, col) / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * *vi;
                }
            }
            let tail = &mut qtb[k..];
            let f = F::c(2.0) * dot(&v, tail) / vnorm2;
            for (c, vi) in tail.iter_mut().zip(&v) {
                *c -= f * *vi;
            }
        }
        if r[(k, k)].abs() <= tol {
            return Err(Error::SingularDesign { column: k });
        }
    }
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut v = qtb[i];
        for j in (i + 1)..n {
            v -= r[(i, j)] * x[j];
        }
        x[i] = v / r[(i, i)];
    }
    Ok(x)
}

/// Orthonormal basis of the column space of `a` (Gram-Schmidt with one
/// reorthogonalization pass). Fails if the columns are linearly dependent.
pub fn orthonormal_columns<F: Real>(a: &Matrix<F>) -> Result<Matrix<F>> {
    let mut q = a.clone();
    for k in 0..q.ncols() {
        let orig = dot(a.col(k), a.col(k)).sqrt();
        for _ in 0..2 {
            for j in 0..k {
                let (left, right) = q.data.split_at_mut(k * q.rows);
                let qj = &left[j * q.rows..(j + 1) * q.rows];
                let qk = &mut right[..q.rows];
                let r = dot(qj, qk);
                for (x, y) in qk.iter_mut().zip(qj) {
                    *x -= r * *y;
                }
            }
        }
        let norm = dot(q.col(k), q.col(k)).sqrt();
        if !(norm > F::c(SINGULAR_PIVOT_TOL) * orig) {
            return Err(Error::SingularDesign { column: k });
        }
        for x in q.col_mut(k) {
            *x /= norm;
        }
    }
    Ok(q)
}

/// Access to entries of the sample covariance `Σ̂ = (1/n)X_cᵀX_c`, either from a
/// materialized `p × p` matrix or computed column by column on demand.
#[derive(Debug, Clone)]
pub struct CovarianceSource<F> {
    xc: Matrix<F>,
    dense: Option<Matrix<F>>,
    diag: Vec<F>,
}

impl<F: Real> CovarianceSource<F> {
    /// `xc` must have centered columns.
    pub fn new(xc: Matrix<F>, materialize: bool) -> Self {
        let n = F::from_usize_lossy(xc.nrows());
        let diag = (0..xc.ncols())
            .map(|j| dot(xc.col(j), xc.col(j)) / n)
            .collect();
        let dense = materialize.then(|| xc.scaled_gram());
        CovarianceSource { xc, dense, diag }
    }

    /// Materializes when `p` is small enough that a `p × p` matrix is cheap
    /// and will be reused.
    pub fn auto(xc: Matrix<F>) -> Self {
        let p = xc.ncols();
        Self::new(xc, p <= 2500)
    }

    pub fn p(&self) -> usize {
        self.xc.ncols()
    }

    pub fn n(&self) -> usize {
        self.xc.nrows()
    }

    pub fn centered(&self) -> &Matrix<F> {
        &self.xc
    }

    pub fn diag(&self) -> &[F] {
        &self.diag
    }

    pub fn entry(&self, j: usize, k: usize) -> F {
        match &self.dense {
            Some(g) => g[(j, k)],
            None => dot(self.xc.col(j), self.xc.col(k)) / F::from_usize_lossy(self.n()),
        }
    }

    /// Column `Σ̂_{·,j}`.
    pub fn column(&self, j: usize) -> Vec<F> {
        match &self.dense {
            Some(g) => g.col(j).to_vec(),
            None => {
                let n = F::from_usize_lossy(self.n());
                let xj = self.xc.col(j);
                (0..self.p())
                    .map(|k| dot(self.xc.col(k), xj) / n)
                    .collect()
            }
        }
    }

    pub fn principal(&self, idx: &[usize]) -> Matrix<F> {
        let k = idx.len();
        let mut m = Matrix::zeros(k, k);
        for (b, &j) in idx.iter().enumerate() {
            for (a, &i) in idx.iter().enumerate().take(b + 1) {
                let v = self.entry(i, j);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    }

    /// Cross moment `(1/n)X_cᵀ w` for a vector `w` of length `n`.
    pub fn cross(&self, w: &[F]) -> Vec<F> {
        let n = F::from_usize_lossy(self.n());
        self.xc.tr_matvec(w).into_iter().map(|v| v / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vector, RngStream};

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let v = gaussian_vector(&RngStream::new(seed), n * p);
        Dataset::new(Matrix::from_col_major(n, p, v), None).unwrap()
    }

    #[test]
    fn orthonormal_centered_columns_give_identity_factor() {
        // centered, orthogonal, (1/n)|x|² = 1 with n = 4
        let x = Matrix::from_columns(&[vec![1.0f64, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]]);
        let d = Dataset::new(x, None).unwrap();
        let g = subset_gram(&d, &[0, 1]).unwrap();
        let err = g.chol.sub(&Matrix::identity(2)).frobenius();
        assert!(err < 1e-10);
        assert!(g.logdet.abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let c = vec![0.3, 1.2, -0.7, 2.0, 0.1];
        let x = Matrix::from_columns(&[c.clone(), vec![1.0, 0.0, 2.0, 1.0, 3.0], c]);
        let d = Dataset::new(x, None).unwrap();
        assert!(matches!(
            subset_gram(&d, &[0, 2]),
            Err(Error::SingularGram { .. })
        ));
        assert!(subset_gram(&d, &[0, 1]).is_ok());
    }

    #[test]
    fn factor_reconstructs_direct_gram() {
        let d = random_dataset(6, 3, 3);
        let g = subset_gram(&d, &[0, 1, 2]).unwrap();
        // direct oracle: explicit double loop over centered entries
        let n = 6.0;
        let x = d.x();
        let means: Vec<f64> = (0..3).map(|j| x.col(j).iter().sum::<f64>() / n).collect();
        let mut direct = Matrix::zeros(3, 3);
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for i in 0..6 {
                    s += (x[(i, a)] - means[a]) * (x[(i, b)] - means[b]);
                }
                direct[(a, b)] = s / n;
            }
        }
        let err = g.gram().sub(&direct).frobenius() / direct.frobenius();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn subset_must_be_increasing() {
        let d = random_dataset(6, 3, 1);
        assert!(subset_gram(&d, &[1, 0]).is_err());
        assert!(subset_gram(&d, &[]).is_err());
        assert!(subset_gram(&d, &[3]).is_err());
    }

    #[test]
    fn permutation_consistent_gram() {
        let d = random_dataset(20, 4, 9);
        let g = subset_gram(&d, &[0, 1, 3]).unwrap().gram();
        let src = CovarianceSource::new(d.centered_x(), false);
        let perm = [3, 0, 1];
        let gp = src.principal(&perm);
        // unpermute: position of original index in perm
        for (a, &i) in [0usize, 1, 3].iter().enumerate() {
            for (b, &j) in [0usize, 1, 3].iter().enumerate() {
                let pa = perm.iter().position(|&v| v == i).unwrap();
                let pb = perm.iter().position(|&v| v == j).unwrap();
                assert!((g[(a, b)] - gp[(pa, pb)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let n = 20;
        let a = Matrix::from_col_major(n, 3, gaussian_vector(&RngStream::new(4), n * 3));
        let b: Vec<f64> = gaussian_vector(&RngStream::new(5), n);
        let x = least_squares(&a, &b).unwrap();
        let ata = a.transpose().matmul(&a);
        let atb = a.tr_matvec(&b);
        let chol = Cholesky::new(&ata, 1e-12).unwrap();
        let xn = chol.solve(&atb);
        for (u, v) in x.iter().zip(&xn) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_and_lazy_sources_agree() {
        let d = random_dataset(15, 5, 2);
        let a = CovarianceSource::new(d.centered_x(), true);
        let b = CovarianceSource::new(d.centered_x(), false);
        for j in 0..5 {
            for (u, v) in a.column(j).iter().zip(b.column(j)) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }
}
