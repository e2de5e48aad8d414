//! Dense Hermitian matrices and the linear algebra the certificates need.
//!
//! The real vector space of Hermitian matrices of order `n` has dimension
//! `n²`. [`HermitianMatrix::vec`] realises that isomorphism with a
//! column-wise lower-triangular traversal, which is what the independence
//! and spanning tests operate on.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::LinalgError;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Largest admissible `|a_ij - conj(a_ji)|` (relative to the largest entry)
/// accepted by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default relative threshold for [`HermitianMatrix::numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

const EIG_MAX_ITERS: usize = 1000;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Dense Hermitian matrix. Entries are stored in full and kept exactly
/// Hermitian: the diagonal is real and `a_ij == conj(a_ji)` bit for bit.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    data: CMatrix,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HermitianMatrix")
            .field("order", &self.order())
            .field("data", &self.data)
            .finish()
    }
}

impl HermitianMatrix {
    /// Validates and symmetrises a square complex matrix.
    pub fn new(data: CMatrix) -> Result<Self, LinalgError> {
        if data.nrows() != data.ncols() {
            return Err(LinalgError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let scale = data.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
        let n = data.nrows();
        let mut deviation = 0.0_f64;
        for j in 0..n {
            for i in j..n {
                deviation = deviation.max((data[(i, j)] - data[(j, i)].conj()).norm());
            }
        }
        if deviation > HERMITIAN_TOL * scale {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(data))
    }

    /// Projects an arbitrary square matrix onto its Hermitian part
    /// `(A + A*) / 2` without any tolerance check.
    pub fn symmetrized(mut data: CMatrix) -> Self {
        let n = data.nrows();
        assert_eq!(n, data.ncols(), "square matrix required");
        for j in 0..n {
            data[(j, j)] = c(data[(j, j)].re, 0.0);
            for i in (j + 1)..n {
                let avg = (data[(i, j)] + data[(j, i)].conj()) * 0.5;
                data[(i, j)] = avg;
                data[(j, i)] = avg.conj();
            }
        }
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: CMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: CMatrix::identity(n, n),
        }
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            data[(i, i)] = c(d, 0.0);
        }
        Self { data }
    }

    /// `e_i e_iᵀ` of order `n`.
    pub fn unit_diagonal(n: usize, i: usize) -> Self {
        let mut data = CMatrix::zeros(n, n);
        data[(i, i)] = c(1.0, 0.0);
        Self { data }
    }

    /// Outer product `v v*`.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        let data = CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj());
        Self::symmetrized(data)
    }

    /// Builds the matrix from its lower triangle; `f(i, j)` is called for
    /// `i >= j` only and the diagonal imaginary part is dropped.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                if i == j {
                    data[(i, i)] = c(v.re, 0.0);
                } else {
                    data[(i, j)] = v;
                    data[(j, i)] = v.conj();
                }
            }
        }
        Self { data }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    #[inline]
    pub fn as_matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.data[(i, i)].re).sum()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            data: &self.data * c(alpha, 0.0),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &HermitianMatrix) {
        assert_eq!(self.order(), other.order(), "order mismatch in axpy");
        let a = c(alpha, 0.0);
        for (dst, src) in self.data.iter_mut().zip(other.data.iter()) {
            *dst += a * src;
        }
    }

    /// Congruence `T* A T` for an arbitrary (possibly rectangular) `T`.
    pub fn congruence(&self, t: &CMatrix) -> HermitianMatrix {
        assert_eq!(t.nrows(), self.order(), "congruence dimension mismatch");
        let prod = t.adjoint() * &self.data * t;
        Self::symmetrized(prod)
    }

    /// Frobenius inner product `Σ a_ij conj(b_ij)`.
    pub fn inner(&self, other: &HermitianMatrix) -> Result<f64, LinalgError> {
        frobenius_inner(self, other)
    }

    /// Real vector of length `n²`: for each column `j`, the diagonal entry
    /// `a_jj` followed by `Re(a_ij), Im(a_ij)` for `i > j`.
    pub fn vec(&self) -> Vec<f64> {
        let n = self.order();
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            out.push(self.data[(j, j)].re);
            for i in (j + 1)..n {
                let z = self.data[(i, j)];
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    /// [`HermitianMatrix::vec`] with the off-diagonal entries scaled by `√2`,
    /// so that `vec_scaled(A) · vec_scaled(B) = A • B`.
    pub fn vec_scaled(&self) -> Vec<f64> {
        let mut out = self.vec();
        let mut k = 0;
        for j in 0..self.order() {
            k += 1;
            for _ in 0..2 * (self.order() - j - 1) {
                out[k] *= std::f64::consts::SQRT_2;
                k += 1;
            }
        }
        out
    }

    /// Inverse of [`HermitianMatrix::vec`].
    pub fn from_vec(n: usize, v: &[f64]) -> Result<Self, LinalgError> {
        if v.len() != n * n {
            return Err(LinalgError::VecLength {
                expected: n * n,
                found: v.len(),
            });
        }
        let mut it = v.iter().copied();
        let mut data = CMatrix::zeros(n, n);
        for j in 0..n {
            data[(j, j)] = c(it.next().unwrap_or_default(), 0.0);
            for i in (j + 1)..n {
                let re = it.next().unwrap_or_default();
                let im = it.next().unwrap_or_default();
                data[(i, j)] = c(re, im);
                data[(j, i)] = c(re, -im);
            }
        }
        Ok(Self { data })
    }

    pub fn eig(&self) -> Result<EigenDecomposition, LinalgError> {
        eig(self)
    }

    pub fn numerical_rank(&self, tol_rel: f64) -> Result<usize, LinalgError> {
        Ok(self.eig()?.rank(tol_rel))
    }

    /// The `2n × 2n` real symmetric matrix `[[Re A, -Im A], [Im A, Re A]]`.
    pub fn real_embedding(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut out = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                let z = self.data[(i, j)];
                out[(i, j)] = z.re;
                out[(i + n, j + n)] = z.re;
                out[(i + n, j)] = z.im;
                out[(i, j + n)] = -z.im;
            }
        }
        out
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix {
            data: &self.data + &rhs.data,
        }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix {
            data: &self.data - &rhs.data,
        }
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        HermitianMatrix { data: -&self.data }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

/// Frobenius inner product of two Hermitian matrices of the same order.
pub fn frobenius_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64, LinalgError> {
    if a.order() != b.order() {
        return Err(LinalgError::OrderMismatch {
            left: a.order(),
            right: b.order(),
        });
    }
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        let p = x * y.conj();
        re += p.re;
        im += p.im;
    }
    debug_assert!(
        im.abs() <= 1e-10 * a.frobenius_norm() * b.frobenius_norm() + f64::MIN_POSITIVE,
        "imaginary part {im} of a Hermitian inner product"
    );
    Ok(re)
}

/// Eigenvalues sorted in descending order with matching unitary eigenvectors
/// (column `k` of `vectors` belongs to `values[k]`).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenDecomposition {
    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// Absolute threshold below which an eigenvalue counts as zero.
    pub fn rank_threshold(&self, tol_rel: f64) -> f64 {
        let lmax = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        tol_rel * lmax.max(1.0)
    }

    pub fn rank(&self, tol_rel: f64) -> usize {
        let thr = self.rank_threshold(tol_rel);
        self.values.iter().filter(|v| v.abs() > thr).count()
    }

    /// Eigenvectors for the columns `range`.
    pub fn columns(&self, start: usize, count: usize) -> CMatrix {
        self.vectors.columns(start, count).into_owned()
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.order();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let l = c(self.values[j], 0.0);
            for i in 0..n {
                scaled[(i, j)] *= l;
            }
        }
        HermitianMatrix::symmetrized(scaled * self.vectors.adjoint())
    }

    /// Applies `f` to every eigenvalue and rebuilds `Q f(Λ) Q*`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let mapped = EigenDecomposition {
            values: self.values.iter().map(|&v| f(v)).collect(),
            vectors: self.vectors.clone(),
        };
        mapped.reconstruct()
    }
}

/// Hermitian eigendecomposition through the real symmetric embedding.
///
/// Each eigenvalue of `A` appears twice in the embedding, with eigenvectors
/// `[u; v]` and `[-v; u]` that both map to multiples of `u + iv`. One complex
/// vector per pair is kept by a pivoted Gram–Schmidt pass that always takes
/// the candidate with the largest remaining component, so repeated
/// eigenvalues of `A` still yield a full unitary basis.
pub fn eig(a: &HermitianMatrix) -> Result<EigenDecomposition, LinalgError> {
    let n = a.order();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let embedded = a.real_embedding();
    let sym = SymmetricEigen::try_new(embedded.clone(), f64::EPSILON, EIG_MAX_ITERS).ok_or_else(
        || {
            let mut off = 0.0;
            for j in 0..2 * n {
                for i in 0..2 * n {
                    if i != j {
                        off += embedded[(i, j)] * embedded[(i, j)];
                    }
                }
            }
            LinalgError::NoConvergence {
                iterations: EIG_MAX_ITERS,
                off_diagonal: off.sqrt(),
            }
        },
    )?;

    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[j].total_cmp(&sym.eigenvalues[i]).then(i.cmp(&j)));

    let mut residuals: Vec<DVector<C64>> = order
        .iter()
        .map(|&k| {
            let col = sym.eigenvectors.column(k);
            DVector::from_fn(n, |i, _| c(col[i], col[i + n]))
        })
        .collect();
    let mut taken = vec![false; 2 * n];
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(n);

    for _ in 0..n {
        let mut best = usize::MAX;
        let mut best_norm = -1.0;
        for (idx, r) in residuals.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let nr = r.norm_squared();
            if nr > best_norm * (1.0 + 1e-9) {
                best_norm = nr;
                best = idx;
            }
        }
        if best == usize::MAX || best_norm <= 1e-20 {
            return Err(LinalgError::EigenBasisDeficient {
                found: basis.len(),
                order: n,
            });
        }
        taken[best] = true;
        let q = &residuals[best] / c(best_norm.sqrt(), 0.0);
        for (idx, r) in residuals.iter_mut().enumerate() {
            if taken[idx] {
                continue;
            }
            let proj = q.dotc(r);
            r.axpy(-proj, &q, c(1.0, 0.0));
        }
        basis.push(q);
    }

    // Second orthogonalisation pass against rounding drift.
    for k in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(k);
        let q = &mut rest[0];
        for prev in done.iter() {
            let proj = prev.dotc(q);
            q.axpy(-proj, prev, c(1.0, 0.0));
        }
        let nrm = q.norm();
        *q /= c(nrm, 0.0);
    }

    let mat = a.as_matrix();
    let mut pairs: Vec<(f64, DVector<C64>)> = basis
        .into_iter()
        .map(|q| {
            let aq = mat * &q;
            (q.dotc(&aq).re, q)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));

    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (j, (val, q)) in pairs.into_iter().enumerate() {
        vectors.set_column(j, &q);
        values.push(val);
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Outcome of [`independent_subset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Independence {
    pub all_independent: bool,
    /// Greedily selected basis indices, in input order.
    pub basis: Vec<usize>,
    /// Singular-value rank of the stacked (column-normalised) vec matrix.
    pub rank: usize,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
}

impl Independence {
    fn empty() -> Self {
        Self {
            all_independent: true,
            basis: Vec::new(),
            rank: 0,
            singular_values: Vec::new(),
        }
    }
}

/// Stacks `vec(M_k)` as columns and tests them for linear independence.
///
/// Columns are normalised to unit length first (a positive column scaling
/// does not change the rank) and the rank counts singular values above
/// `tol_rel · σ_max`. Rows that vanish in every column are dropped before
/// the factorisation.
pub fn independent_subset(
    matrices: &[HermitianMatrix],
    tol_rel: f64,
) -> Result<Independence, LinalgError> {
    let Some(first) = matrices.first() else {
        return Ok(Independence::empty());
    };
    let n = first.order();
    if let Some(bad) = matrices.iter().find(|m| m.order() != n) {
        return Err(LinalgError::OrderMismatch {
            left: n,
            right: bad.order(),
        });
    }
    let columns: Vec<Vec<f64>> = matrices.iter().map(HermitianMatrix::vec).collect();
    Ok(independent_columns(&columns, tol_rel))
}

/// Independence test on raw real column vectors of equal length.
pub fn independent_columns(columns: &[Vec<f64>], tol_rel: f64) -> Independence {
    let d = columns.len();
    if d == 0 {
        return Independence::empty();
    }
    let len = columns[0].len();
    let live_rows: Vec<usize> = (0..len)
        .filter(|&r| columns.iter().any(|col| col[r] != 0.0))
        .collect();
    let rows = live_rows.len();

    let mut v = DMatrix::<f64>::zeros(rows, d);
    let mut nonzero = vec![false; d];
    for (j, col) in columns.iter().enumerate() {
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            nonzero[j] = true;
            for (r, &src) in live_rows.iter().enumerate() {
                v[(r, j)] = col[src] / norm;
            }
        }
    }

    let singular_values = singular_values(&v);
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let rank = if smax > 0.0 {
        singular_values.iter().filter(|&&s| s > tol_rel * smax).count()
    } else {
        0
    };

    // Greedy basis in input order by modified Gram–Schmidt (two passes).
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut basis = Vec::new();
    for j in 0..d {
        if !nonzero[j] {
            continue;
        }
        let mut r = v.column(j).into_owned();
        for _ in 0..2 {
            for qk in &q {
                let p = qk.dot(&r);
                r.axpy(-p, qk, 1.0);
            }
        }
        let nr = r.norm();
        if nr > tol_rel {
            q.push(r / nr);
            basis.push(j);
        }
    }

    Independence {
        all_independent: rank == d,
        basis,
        rank,
        singular_values,
    }
}

/// Singular values of a real matrix in descending order. Tall inputs are
/// reduced by QR first.
pub fn singular_values(v: &DMatrix<f64>) -> Vec<f64> {
    if v.nrows() == 0 || v.ncols() == 0 {
        return Vec::new();
    }
    let small = if v.nrows() > v.ncols() {
        v.clone().qr().r()
    } else {
        v.clone()
    };
    let mut s: Vec<f64> = small.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
