//! Closed-form reduced-rank regression.
//!
//! For a weighting `Γ` the rank-`r` minimizer of `tr{(Y − XB)Γ(Y − XB)ᵀ}` is
//! `B̂ = (XᵀX)⁻XᵀYΓ^{1/2} P_V Γ^{-1/2}`, with `V` the leading `r` eigenvectors of
//! `Γ^{1/2}YᵀP_XYΓ^{1/2}`.

use nalgebra::DMatrix;

use crate::error::{R4Error, Result};
use crate::linalg::{ensure_finite, numerical_rank, symmetric_eigen_desc, DenseMatrix, LeastSquares};
use crate::thresholding::{matrix_singular_threshold, ThresholdRule};

/// Design, responses and optional response weighting.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub gamma: Option<DenseMatrix>,
}

impl RegressionData {
    pub fn new(x: DenseMatrix, y: DenseMatrix, gamma: Option<DenseMatrix>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(R4Error::invalid(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() == 0 || y.ncols() == 0 || x.ncols() == 0 {
            return Err(R4Error::invalid("empty design or response"));
        }
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        if let Some(g) = &gamma {
            if g.nrows() != y.ncols() || g.ncols() != y.ncols() {
                return Err(R4Error::invalid(format!(
                    "Gamma must be {m}×{m}, got {}×{}",
                    g.nrows(),
                    g.ncols(),
                    m = y.ncols()
                )));
            }
            ensure_finite(g, "Gamma")?;
            matrix_sqrt_pd(g)?;
        }
        Ok(RegressionData { x, y, gamma })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// `(Γ^{1/2}, Γ^{-1/2})`, or `None` for identity weighting.
    pub fn gamma_roots(&self) -> Result<Option<(DenseMatrix, DenseMatrix)>> {
        self.gamma.as_ref().map(matrix_sqrt_pd).transpose()
    }

    /// `tr{(Y − XB − C)Γ(Y − XB − C)ᵀ}`.
    pub fn weighted_rss(&self, b: &DenseMatrix, c: Option<&DenseMatrix>) -> f64 {
        let mut r = &self.y - &self.x * b;
        if let Some(c) = c {
            r -= c;
        }
        match &self.gamma {
            None => r.norm_squared(),
            Some(g) => (&r * g).component_mul(&r).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RrrFit {
    pub b_hat: DenseMatrix,
    pub rank: usize,
    pub fitted: DenseMatrix,
}

/// Symmetric square root and inverse square root of a positive-definite matrix.
pub fn matrix_sqrt_pd(g: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let m = g.nrows();
    if g.ncols() != m {
        return Err(R4Error::invalid("matrix must be square"));
    }
    ensure_finite(g, "matrix")?;
    let asym = (g - g.transpose()).norm();
    if asym > 1e-10 * g.norm().max(1.0) {
        return Err(R4Error::invalid("matrix must be symmetric"));
    }
    let sym = (g + g.transpose()) * 0.5;
    let (vals, vecs) = symmetric_eigen_desc(&sym)?;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = m as f64 * f64::EPSILON * vals[0].abs();
    if !(min > tol) {
        return Err(R4Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let root = |f: &dyn Fn(f64) -> f64| {
        let mut scaled = vecs.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(vals[j]);
        }
        let out = &scaled * vecs.transpose();
        (&out + out.transpose()) * 0.5
    };
    Ok((root(&|v| v.sqrt()), root(&|v| 1.0 / v.sqrt())))
}

/// Rank-`r` reduced-rank regression with identity weighting, on a cached design.
///
/// Works in the coordinates `W = UᵀY` of range(X): the fitted values are the
/// best rank-`r` approximation of `P_X Y`, i.e. `U·T_r(W)` with `T_r` the
/// truncated SVD, obtained from the smaller of the two Gram matrices of `W`.
#[derive(Debug, Clone)]
pub(crate) struct ReducedRank {
    pub(crate) ls: LeastSquares,
}

pub(crate) struct RankFit {
    /// Rank-`r` coordinates in range(X); fitted values are `U·core`.
    pub core: DenseMatrix,
    pub fitted: DenseMatrix,
}

impl ReducedRank {
    pub fn new(x: &DenseMatrix) -> Result<Self> {
        Ok(ReducedRank { ls: LeastSquares::new(x)? })
    }

    pub fn max_rank(&self, m: usize) -> usize {
        self.ls.rank().min(m)
    }

    pub fn check_rank(&self, r: usize, m: usize) -> Result<()> {
        let max = self.max_rank(m);
        if r == 0 || r > max {
            return Err(R4Error::invalid(format!(
                "rank {r} out of range [1, {max}] (min of response dimension and rank(X))"
            )));
        }
        Ok(())
    }

    pub fn fit(&self, y: &DenseMatrix, r: usize) -> Result<RankFit> {
        let m = y.ncols();
        self.check_rank(r, m)?;
        let w = self.ls.coords(y);
        let q = w.nrows();
        let core = if r == q.min(m) {
            w
        } else if q <= m {
            let (vals, vecs) = symmetric_eigen_desc(&(&w * w.transpose()))?;
            log_tie(&vals, r);
            let lead = vecs.columns(0, r);
            &lead * (lead.transpose() * &w)
        } else {
            let (vals, vecs) = symmetric_eigen_desc(&w.tr_mul(&w))?;
            log_tie(&vals, r);
            let lead = vecs.columns(0, r);
            (&w * lead) * lead.transpose()
        };
        let fitted = self.ls.from_coords(&core);
        Ok(RankFit { core, fitted })
    }

    pub fn coef(&self, core: &DenseMatrix) -> DenseMatrix {
        self.ls.coef_from_coords(core)
    }
}

fn log_tie(vals: &nalgebra::DVector<f64>, r: usize) {
    if r < vals.len() {
        let gap = vals[r - 1] - vals[r];
        if gap <= 1e-12 * vals[0].abs().max(f64::MIN_POSITIVE) {
            log::debug!("tied eigenvalues at rank {r}: {} vs {}", vals[r - 1], vals[r]);
        }
    }
}

/// Rank-`r` reduced-rank regression `R(X, Y, Γ, r)`.
pub fn rrr_fit(data: &RegressionData, r: usize) -> Result<RrrFit> {
    let engine = ReducedRank::new(&data.x)?;
    rrr_fit_with(&engine, data, r)
}

pub(crate) fn rrr_fit_with(engine: &ReducedRank, data: &RegressionData, r: usize) -> Result<RrrFit> {
    let roots = data.gamma_roots()?;
    let y_t = match &roots {
        Some((half, _)) => &data.y * half,
        None => data.y.clone(),
    };
    let fit = engine.fit(&y_t, r)?;
    let mut b_hat = engine.coef(&fit.core);
    if let Some((_, inv_half)) = &roots {
        b_hat = &b_hat * inv_half;
    }
    let fitted = &data.x * &b_hat;
    Ok(RrrFit { b_hat, rank: r, fitted })
}

/// Reduced-rank ridge regression: rank-`r` fit on the design augmented with
/// `√μ·I_p` rows and the response padded with zero rows.
pub fn rrr_ridge_fit(data: &RegressionData, r: usize, mu: f64) -> Result<RrrFit> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(R4Error::invalid(format!("ridge parameter must be finite and nonnegative, got {mu}")));
    }
    if mu == 0.0 {
        return rrr_fit(data, r);
    }
    let (n, p, m) = (data.n(), data.p(), data.m());
    let mut x_aug = DMatrix::zeros(n + p, p);
    x_aug.rows_mut(0, n).copy_from(&data.x);
    x_aug.rows_mut(n, p).fill_diagonal(mu.sqrt());
    let mut y_aug = DMatrix::zeros(n + p, m);
    y_aug.rows_mut(0, n).copy_from(&data.y);
    let aug = RegressionData { x: x_aug, y: y_aug, gamma: data.gamma.clone() };
    let fit = rrr_fit(&aug, r)?;
    let fitted = &data.x * &fit.b_hat;
    Ok(RrrFit { b_hat: fit.b_hat, rank: r, fitted })
}

/// Singular-value-penalized estimator: `A = Θ^σ(P_X Y Γ^{1/2})`, `B̂ = (XᵀX)⁻XᵀAΓ^{-1/2}`.
pub fn singular_value_shrink_fit(data: &RegressionData, rule: &ThresholdRule) -> Result<RrrFit> {
    let ls = LeastSquares::new(&data.x)?;
    let roots = data.gamma_roots()?;
    let y_t = match &roots {
        Some((half, _)) => &data.y * half,
        None => data.y.clone(),
    };
    let z = ls.project(&y_t);
    let shrunk = matrix_singular_threshold(rule, &z)?;
    let rank = numerical_rank(&shrunk)?;
    let mut b_hat = ls.solve(&shrunk);
    if let Some((_, inv_half)) = &roots {
        b_hat = &b_hat * inv_half;
    }
    let fitted = &data.x * &b_hat;
    Ok(RrrFit { b_hat, rank, fitted })
}
