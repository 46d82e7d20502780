//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{R4Error, Result};

/// Real-valued dense matrix, the carrier for designs, responses, coefficients and residuals.
pub type DenseMatrix = DMatrix<f64>;

const MAX_SWEEPS: usize = 10_000;

pub(crate) fn ensure_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(R4Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// Thin SVD with singular values sorted in decreasing order.
///
/// Returns `(U, s, V)` with `A = U diag(s) Vᵀ`, `U` of size `n×k`, `V` of size `p×k`,
/// `k = min(n, p)`.
pub fn thin_svd(a: &DenseMatrix) -> Result<(DenseMatrix, DVector<f64>, DenseMatrix)> {
    ensure_finite(a, "matrix")?;
    let (n, p) = a.shape();
    let k = n.min(p);
    if k == 0 {
        return Ok((DMatrix::zeros(n, 0), DVector::zeros(0), DMatrix::zeros(p, 0)));
    }
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| R4Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut u_sorted = DMatrix::zeros(n, k);
    let mut v_sorted = DMatrix::zeros(p, k);
    let mut s_sorted = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
        s_sorted[dst] = svd.singular_values[src];
    }
    Ok((u_sorted, s_sorted, v_sorted))
}

/// Cutoff below which singular values are treated as zero: `max(n, p)·ε·σ_max`.
pub fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank under [`rank_cutoff`].
pub fn numerical_rank(a: &DenseMatrix) -> Result<usize> {
    let (_, s, _) = thin_svd(a)?;
    if s.is_empty() || s[0] == 0.0 {
        return Ok(0);
    }
    let cut = rank_cutoff(a.nrows(), a.ncols(), s[0]);
    Ok(s.iter().filter(|&&v| v > cut).count())
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in decreasing order.
///
/// Each eigenvector is signed so its first component with magnitude above
/// `1e-12` is positive, which makes downstream fits reproducible.
pub fn symmetric_eigen_desc(a: &DenseMatrix) -> Result<(DVector<f64>, DenseMatrix)> {
    ensure_finite(a, "matrix")?;
    let m = a.nrows();
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| R4Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut values = DVector::zeros(m);
    let mut vectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Cached thin SVD of a design matrix, restricted to its numerical range.
///
/// Applies the projection `P_X` and the minimum-norm least-squares solve
/// without ever forming an `n×n` matrix.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    u: DenseMatrix,
    s: DVector<f64>,
    v: DenseMatrix,
    rows: usize,
    cols: usize,
}

impl LeastSquares {
    pub fn new(x: &DenseMatrix) -> Result<Self> {
        let (u, s, v) = thin_svd(x)?;
        let (rows, cols) = x.shape();
        let rank = if s.is_empty() || s[0] == 0.0 {
            0
        } else {
            let cut = rank_cutoff(rows, cols, s[0]);
            s.iter().filter(|&&v| v > cut).count()
        };
        Ok(LeastSquares {
            u: u.columns(0, rank).into_owned(),
            s: s.rows(0, rank).into_owned(),
            v: v.columns(0, rank).into_owned(),
            rows,
            cols,
        })
    }

    /// Numerical rank `q` of the design.
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Coordinates of the columns of `y` in the orthonormal basis of range(X): `Uᵀy`.
    pub fn coords(&self, y: &DenseMatrix) -> DenseMatrix {
        self.u.tr_mul(y)
    }

    /// Maps range coordinates back to `n`-space: `U w`.
    pub fn from_coords(&self, w: &DenseMatrix) -> DenseMatrix {
        &self.u * w
    }

    /// Minimum-norm coefficients `B` with `XB = U w`: `V diag(1/s) w`.
    pub fn coef_from_coords(&self, w: &DenseMatrix) -> DenseMatrix {
        let mut scaled = w.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row /= self.s[i];
        }
        &self.v * scaled
    }

    /// `P_X y`.
    pub fn project(&self, y: &DenseMatrix) -> DenseMatrix {
        self.from_coords(&self.coords(y))
    }

    /// `(XᵀX)⁻ Xᵀ y`.
    pub fn solve(&self, y: &DenseMatrix) -> DenseMatrix {
        self.coef_from_coords(&self.coords(y))
    }

    /// Diagonal of `P_X` (observation leverages).
    pub fn leverages(&self) -> Vec<f64> {
        self.u.row_iter().map(|r| r.norm_squared()).collect()
    }
}

pub fn row_norms(a: &DenseMatrix) -> Vec<f64> {
    a.row_iter().map(|r| r.norm()).collect()
}

/// Indices of rows with nonzero Euclidean norm.
pub fn nonzero_rows(a: &DenseMatrix) -> Vec<usize> {
    a.row_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// Selects the given rows of `a`, in order.
pub fn select_rows(a: &DenseMatrix, rows: &[usize]) -> DenseMatrix {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Compound-symmetry matrix with unit diagonal and constant off-diagonal `rho`.
pub fn compound_symmetry(dim: usize, rho: f64) -> DenseMatrix {
    DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho })
}

/// Closed-form symmetric square root of [`compound_symmetry`].
///
/// The matrix is `(1-ρ)I + ρ11ᵀ`, with eigenvalue `1-ρ` on the complement of
/// `1` and `1+(d-1)ρ` along `1`.
pub fn compound_symmetry_sqrt(dim: usize, rho: f64) -> DenseMatrix {
    let d = dim as f64;
    let a = (1.0 - rho).sqrt();
    let c = ((1.0 + (d - 1.0) * rho).sqrt() - a) / d;
    DMatrix::from_fn(dim, dim, |i, j| if i == j { a + c } else { c })
}
