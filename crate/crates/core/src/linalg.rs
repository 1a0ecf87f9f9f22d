//! Linear algebra plumbing: coefficient/functional vectors, sparse matrices,
//! SPD solves, the dense generalized symmetric eigenproblem and the
//! pseudo-inverse solve used for the Gram system.
//!
//! Sparse Cholesky and dense eigendecompositions are delegated to `faer`.

use std::ops::{Deref, DerefMut};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt as SparseLlt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};

use crate::error::{check_len, Error, Result};

pub use faer::Mat as DenseMatrix;

/// Relative residual every SPD solve must satisfy.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Default size limit for dense eigendecompositions.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Relative cutoff applied to the spectrum in [`pinv_solve`].
pub const PINV_RTOL: f64 = 1e-12;

macro_rules! tagged_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, Default, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }
    };
}

tagged_vector!(
    /// Expansion coefficients of a finite element function in the nodal basis.
    PrimalVector
);
tagged_vector!(
    /// Values of a linear functional on the nodal basis functions (a load vector).
    DualVector
);

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse real matrix in compressed-column storage.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let triplets: Vec<_> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let inner = SparseColMat::try_new_from_triplets(nrows, ncols, &triplets)
            .map_err(|e| Error::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;
        Ok(Self { inner })
    }

    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.val().len()
    }

    pub fn as_faer(&self) -> &SparseColMat<usize, f64> {
        &self.inner
    }

    fn col_ptr(&self) -> &[usize] {
        self.inner.symbolic().col_ptr()
    }

    fn row_idx(&self) -> &[usize] {
        self.inner.symbolic().row_idx()
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.col_ptr()[j]..self.col_ptr()[j + 1];
        let rows = &self.row_idx()[range.clone()];
        match rows.binary_search(&i) {
            Ok(k) => self.inner.val()[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Stored entries as `(row, col, value)`, column by column.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cp = self.col_ptr();
        (0..self.ncols())
            .flat_map(move |j| (cp[j]..cp[j + 1]).map(move |p| (self.row_idx()[p], j, self.inner.val()[p])))
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols(), "matrix-vector length mismatch");
        let mut y = vec![0.0; self.nrows()];
        let (cp, ri, val) = (self.col_ptr(), self.row_idx(), self.inner.val());
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for p in cp[j]..cp[j + 1] {
                y[ri[p]] += val[p] * xj;
            }
        }
        y
    }

    /// `A^T x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows(), "transpose matrix-vector length mismatch");
        let (cp, ri, val) = (self.col_ptr(), self.row_idx(), self.inner.val());
        (0..self.ncols()).map(|j| (cp[j]..cp[j + 1]).map(|p| val[p] * x[ri[p]]).sum()).collect()
    }

    /// `a * self + b * other` for matrices sharing one sparsity pattern.
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.col_ptr() != other.col_ptr() || self.row_idx() != other.row_idx() {
            return Err(Error::InvalidArgument("sparsity patterns differ".into()));
        }
        let mut inner = self.inner.clone();
        for (v, w) in inner.val_mut().iter_mut().zip(other.inner.val()) {
            *v = a * *v + b * w;
        }
        Ok(Self { inner })
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows(), self.ncols());
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }
}

/// Chooses between sparse Cholesky and preconditioned conjugate gradients.
#[derive(Clone, Debug)]
pub struct SolverPolicy {
    /// Matrices larger than this are solved iteratively.
    pub direct_max_dim: usize,
    /// Relative residual target of the iterative fallback.
    pub cg_rel_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverPolicy {
    fn default() -> Self {
        Self { direct_max_dim: 400_000, cg_rel_tol: 1e-12, cg_max_iter: 50_000 }
    }
}

#[derive(Clone, Debug)]
enum Backend {
    Direct(SparseLlt<usize, f64>),
    Jacobi { inv_diag: Vec<f64>, rel_tol: f64, max_iter: usize },
}

/// Reusable solver for a sparse SPD matrix. Solves take `&self` and are safe
/// to run concurrently.
#[derive(Clone, Debug)]
pub struct SpdFactorization {
    matrix: SparseMatrix,
    backend: Backend,
}

/// Factors `a` with the default [`SolverPolicy`].
pub fn factor_spd(a: &SparseMatrix) -> Result<SpdFactorization> {
    factor_spd_with(a, &SolverPolicy::default())
}

pub fn factor_spd_with(a: &SparseMatrix, policy: &SolverPolicy) -> Result<SpdFactorization> {
    check_square(a)?;
    if a.nrows() > policy.direct_max_dim {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {}", diag[i])));
        }
        return Ok(SpdFactorization {
            matrix: a.clone(),
            backend: Backend::Jacobi {
                inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
                rel_tol: policy.cg_rel_tol,
                max_iter: policy.cg_max_iter,
            },
        });
    }
    let llt = a.as_faer().sp_cholesky(Side::Lower).map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
    Ok(SpdFactorization { matrix: a.clone(), backend: Backend::Direct(llt) })
}

fn check_square(a: &SparseMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// Symbolic Cholesky analysis shared by every matrix with one sparsity pattern.
#[derive(Clone, Debug)]
pub struct SymbolicCholesky {
    symbolic: SymbolicLlt<usize>,
    dim: usize,
}

impl SymbolicCholesky {
    pub fn analyze(pattern: &SparseMatrix) -> Result<Self> {
        check_square(pattern)?;
        let symbolic = SymbolicLlt::try_new(pattern.as_faer().symbolic(), Side::Lower)
            .map_err(|e| Error::Solver(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self { symbolic, dim: pattern.nrows() })
    }

    /// Numeric factorization of `a`, whose pattern must match the analysed one.
    pub fn factor(&self, a: &SparseMatrix) -> Result<SpdFactorization> {
        check_len(self.dim, a.nrows())?;
        let llt = SparseLlt::try_new_with_symbolic(self.symbolic.clone(), a.as_faer().as_ref(), Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
        Ok(SpdFactorization { matrix: a.clone(), backend: Backend::Direct(llt) })
    }
}

impl SpdFactorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[b])?.pop().unwrap_or_default())
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        for b in rhs {
            check_len(n, b.len())?;
        }
        let xs = match &self.backend {
            Backend::Direct(llt) => {
                let b = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
                let x = llt.solve(&b);
                (0..rhs.len()).map(|j| x.col_as_slice(j).to_vec()).collect()
            }
            Backend::Jacobi { inv_diag, rel_tol, max_iter } => {
                rhs.iter().map(|b| pcg(&self.matrix, inv_diag, b, *rel_tol, *max_iter)).collect::<Result<Vec<_>>>()?
            }
        };
        if cfg!(debug_assertions) {
            for (b, x) in rhs.iter().zip(&xs) {
                let res = relative_residual(&self.matrix, x, b);
                debug_assert!(res <= SOLVE_RESIDUAL_TOL, "SPD solve residual {res:e} exceeds tolerance");
            }
        }
        Ok(xs)
    }
}

/// `||A x - b|| / ||b||`, or `||A x||` when `b = 0`.
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

fn pcg(a: &SparseMatrix, inv_diag: &[f64], b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("p^T A p = {pap:e} in conjugate gradients")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= rel_tol * nb {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

/// Eigenpairs of `A v = tau B v`, eigenvalues ascending, eigenvectors
/// `B`-orthonormal and stored as columns.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// Dense generalized symmetric-definite eigensolver (Cholesky reduction).
pub fn eig_sym_dense(a: MatRef<'_, f64>, b: MatRef<'_, f64>, cap: usize) -> Result<GeneralizedEigen> {
    let n = a.nrows();
    if n > cap {
        return Err(Error::DimensionTooLarge { dim: n, cap });
    }
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::InvalidArgument("eigenproblem matrices must be square and equally sized".into()));
    }
    let llt = b.llt(Side::Lower).map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
    let l = llt.L();
    // L^{-1}
    let mut linv = Mat::<f64>::identity(n, n);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, linv.as_mut(), faer::Par::Seq);
    let c = &linv * a * linv.transpose();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let evd =
        sym.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("eigendecomposition failed: {e:?}")))?;
    let values: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    let vectors = linv.transpose() * evd.U();
    Ok(GeneralizedEigen { values, vectors })
}

/// Minimum-norm least-squares solution of `G x = w` for symmetric `G`.
///
/// Works on `(G + G^T) / 2`; eigenvalues with magnitude at most
/// `PINV_RTOL * max |eigenvalue|` are discarded.
pub fn pinv_solve(g: MatRef<'_, f64>, w: &[f64]) -> Result<Vec<f64>> {
    Ok(pinv_solve_detailed(g, w)?.solution)
}

/// Output of [`pinv_solve_detailed`].
#[derive(Clone, Debug)]
pub struct PinvSolution {
    pub solution: Vec<f64>,
    /// Eigenvalues of the symmetrized matrix, ascending.
    pub eigenvalues: Vec<f64>,
    /// Singular values of the symmetrized matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

pub fn pinv_solve_detailed(g: MatRef<'_, f64>, w: &[f64]) -> Result<PinvSolution> {
    pinv_solve_with_rtol(g, w, PINV_RTOL)
}

/// [`pinv_solve_detailed`] with an explicit relative cutoff.
pub fn pinv_solve_with_rtol(g: MatRef<'_, f64>, w: &[f64], rtol: f64) -> Result<PinvSolution> {
    let m = g.nrows();
    if m == 0 || g.ncols() != m {
        return Err(Error::InvalidArgument("pseudo-inverse needs a nonempty square matrix".into()));
    }
    check_len(m, w.len())?;
    let sym = Mat::from_fn(m, m, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let evd =
        sym.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("eigendecomposition failed: {e:?}")))?;
    let u = evd.U();
    let eig: Vec<f64> = (0..m).map(|i| evd.S()[i]).collect();
    let sigma_max = eig.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
    let cutoff = rtol * sigma_max;
    let mut x = vec![0.0; m];
    let mut rank = 0;
    for (k, &lam) in eig.iter().enumerate() {
        if lam.abs() <= cutoff || lam == 0.0 {
            continue;
        }
        rank += 1;
        let coef = (0..m).map(|i| u[(i, k)] * w[i]).sum::<f64>() / lam;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += coef * u[(i, k)];
        }
    }
    let mut singular_values: Vec<f64> = eig.iter().map(|e| e.abs()).collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(PinvSolution { solution: x, eigenvalues: eig, singular_values, rank })
}
