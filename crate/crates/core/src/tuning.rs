//! Solution paths over a (threshold level or outlier budget) × rank grid,
//! selection by predictive information criterion, and outlier detection paths.

use std::f64::consts::E;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{R4Error, Result};
use crate::linalg::{numerical_rank, row_norms, DenseMatrix};
use crate::rrr::RegressionData;
use crate::solver::{fit_prepared, fit_prepared_state, subsample_starts, FitResult, OutlierSpec, Prepared, SolverOptions, Start};
use crate::thresholding::{RuleKind, ThresholdRule};

/// Degrees-of-freedom weight in the criterion.
pub const PIC_A1: f64 = 7.0;
/// Risk-inflation weight in the criterion.
pub const PIC_A2: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Threshold-level grid for the penalized forms.
    Penalized { rule: RuleKind, elementwise: bool },
    /// Outlier-budget grid for the constrained form.
    Constrained { eta: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub ranks: Vec<usize>,
    pub lambda_count: usize,
    /// Target range `(v_L, v_U)` of outlier proportions covered by the grid.
    pub outlier_fraction_bounds: (f64, f64),
    pub kind: GridKind,
    /// Keep every cell's full fit; otherwise only per-cell summaries and the selected fit.
    pub retain_fits: bool,
}

impl GridSpec {
    pub fn new(ranks: Vec<usize>, kind: GridKind) -> Self {
        GridSpec { ranks, lambda_count: 100, outlier_fraction_bounds: (0.0, 0.4), kind, retain_fits: true }
    }

    fn validate(&self, max_rank: usize) -> Result<()> {
        let (lo, hi) = self.outlier_fraction_bounds;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(R4Error::invalid(format!("outlier fraction bounds must satisfy 0 <= v_L < v_U <= 1, got ({lo}, {hi})")));
        }
        if self.lambda_count < 2 {
            return Err(R4Error::invalid("grid needs at least 2 points"));
        }
        if self.ranks.is_empty() {
            return Err(R4Error::invalid("rank list is empty"));
        }
        if let Some(&r) = self.ranks.iter().find(|&&r| r == 0 || r > max_rank) {
            return Err(R4Error::invalid(format!("rank {r} out of range [1, {max_rank}]")));
        }
        Ok(())
    }
}

/// One `(grid point, rank)` cell of a path.
#[derive(Debug, Clone, Serialize)]
pub struct PathCell {
    pub rank: usize,
    pub grid_index: usize,
    /// `λ` for penalized grids, `ϱ` for constrained grids.
    pub grid_value: f64,
    pub pic: f64,
    /// Whether the cell lies in the criterion's domain (`δ < 1`).
    pub admissible: bool,
    pub numerical_rank: usize,
    pub outlier_count: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub outlier_norms: Vec<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

impl PathCell {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub kind: GridKind,
    pub ranks: Vec<usize>,
    /// Grid values per rank, in path order (decreasing `λ` / increasing `ϱ`).
    pub grids: Vec<Vec<f64>>,
    /// Cells ordered by rank (as in `ranks`), then grid index.
    pub cells: Vec<PathCell>,
    /// Index into `cells` of the criterion minimizer.
    pub selected: Option<usize>,
    pub selected_fit: Option<FitResult>,
    /// `‖ĉᵢ‖₂` per observation (rows) and valid grid point (columns) at the selected rank.
    pub detection_path: DenseMatrix,
    pub detection_grid: Vec<f64>,
    /// `rank(X)` used in the criterion.
    pub q: usize,
}

impl PathResult {
    pub fn selected_cell(&self) -> Option<&PathCell> {
        self.selected.map(|i| &self.cells[i])
    }
}

/// Model size `Jm + (m+q−r)r + J·log(en/J)` with `0·log 0 = 0`.
fn complexity(m: f64, n: f64, q: f64, r: f64, j: f64) -> (f64, f64) {
    let dof = j * m + (m + q - r) * r;
    let inflation = if j == 0.0 { 0.0 } else { j * (E * n / j).ln() };
    (dof, inflation)
}

/// Penalty part of the criterion for a model with rank `r` and `j` outlying rows.
pub fn pic_penalty(n: usize, m: usize, q: usize, r: usize, j: usize) -> f64 {
    let (dof, inflation) = complexity(m as f64, n as f64, q as f64, r as f64, j as f64);
    (PIC_A1 * dof + PIC_A2 * inflation) / (m as f64 * n as f64)
}

/// `δ(B, C) = {Jm + (m+q−r)r + J·log(en/J)}/(mn)`; the criterion is minimized over `δ < 1`.
pub fn pic_domain(n: usize, m: usize, q: usize, r: usize, j: usize) -> f64 {
    let (dof, inflation) = complexity(m as f64, n as f64, q as f64, r as f64, j as f64);
    (dof + inflation) / (m as f64 * n as f64)
}

/// Predictive information criterion
/// `log‖Y − XB − C‖²_F + {A₁(Jm + (m+q−r)r) + A₂J·log(en/J)}/(mn)`,
/// with `r` the numerical rank of `B` and `J` the number of nonzero rows of `C`.
/// With a weighting `Γ` the residual norm is `tr{RΓRᵀ}`.
///
/// A zero residual yields `-∞`; callers treat it as a degenerate overfit.
pub fn pic(data: &RegressionData, b: &DenseMatrix, c: &DenseMatrix, q: usize) -> Result<f64> {
    let rss = data.weighted_rss(b, Some(c));
    let r = numerical_rank(b)?;
    let j = crate::linalg::nonzero_rows(c).len();
    Ok(pic_from_parts(rss, data.n(), data.m(), q, r, j))
}

pub(crate) fn pic_from_parts(rss: f64, n: usize, m: usize, q: usize, r: usize, j: usize) -> f64 {
    pic_with_dof(rss, n, m, q as f64, r, j)
}

/// Criterion with a real-valued design dimension, e.g. the effective degrees
/// of freedom of a ridge fit.
pub(crate) fn pic_with_dof(rss: f64, n: usize, m: usize, q: f64, r: usize, j: usize) -> f64 {
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let (dof, inflation) = complexity(m as f64, n as f64, q, r as f64, j as f64);
    rss.ln() + (PIC_A1 * dof + PIC_A2 * inflation) / (m as f64 * n as f64)
}

struct RankPath {
    grid: Vec<f64>,
    cells: Vec<PathCell>,
    best: Option<(usize, FitResult)>,
}

/// Fits every `(grid point, rank)` cell, warm-starting along the grid at each
/// rank, and selects the cell minimizing [`pic`] among admissible cells.
///
/// Penalized grids run from `λ_max` (largest residual norm of the plain
/// reduced-rank fit, where `Ĉ = 0`) down to a `λ_min` found by bisection so
/// that the cold-start outlier fraction reaches `v_U`, log-spaced.
/// Constrained grids use `ϱ = 0` plus `round(n·f)` for `f` log-spaced up to `v_U`.
pub fn fit_path(data: &RegressionData, grid: &GridSpec, opts: &SolverOptions) -> Result<PathResult> {
    let prep = Prepared::new(data)?;
    let q = prep.q();
    grid.validate(q.min(data.m()))?;
    let per_rank: Vec<Result<RankPath>> =
        grid.ranks.par_iter().map(|&rank| fit_rank(&prep, data, grid, opts, rank, q)).collect();

    let mut grids = Vec::with_capacity(grid.ranks.len());
    let mut cells = Vec::new();
    let mut best: Option<(usize, f64, FitResult)> = None;
    for path in per_rank {
        let path = path?;
        let offset = cells.len();
        if let Some((idx, fit)) = path.best {
            let value = path.cells[idx].pic;
            if best.as_ref().map_or(true, |(_, v, _)| value < *v) {
                best = Some((offset + idx, value, fit));
            }
        }
        grids.push(path.grid);
        cells.extend(path.cells);
    }
    let (selected, selected_fit) = match best {
        Some((i, _, fit)) => (Some(i), Some(fit)),
        None => (None, None),
    };

    let (detection_path, detection_grid) = match selected {
        Some(i) => {
            let rank = cells[i].rank;
            let at_rank: Vec<&PathCell> = cells.iter().filter(|c| c.rank == rank && c.is_valid()).collect();
            let table = DMatrix::from_fn(data.n(), at_rank.len(), |row, col| at_rank[col].outlier_norms[row]);
            (table, at_rank.iter().map(|c| c.grid_value).collect())
        }
        None => (DMatrix::zeros(data.n(), 0), Vec::new()),
    };

    Ok(PathResult {
        kind: grid.kind,
        ranks: grid.ranks.clone(),
        grids,
        cells,
        selected,
        selected_fit,
        detection_path,
        detection_grid,
        q,
    })
}

fn spec_for(kind: GridKind, value: f64) -> OutlierSpec {
    match kind {
        GridKind::Penalized { rule, elementwise } => {
            let rule = ThresholdRule { kind: rule, lambda: value };
            if elementwise {
                OutlierSpec::PenalizedElementwise(rule)
            } else {
                OutlierSpec::PenalizedRowwise(rule)
            }
        }
        GridKind::Constrained { eta } => OutlierSpec::Constrained { rho_count: value as usize, eta },
    }
}

fn fit_rank(
    prep: &Prepared,
    data: &RegressionData,
    grid: &GridSpec,
    opts: &SolverOptions,
    rank: usize,
    q: usize,
) -> Result<RankPath> {
    let values = match grid.kind {
        GridKind::Penalized { elementwise, .. } => lambda_grid(prep, grid, opts, rank, elementwise)?,
        GridKind::Constrained { .. } => rho_grid(data.n(), grid),
    };
    let (n, m) = (data.n(), data.m());
    let mut cells = Vec::with_capacity(values.len());
    let mut best: Option<(usize, FitResult)> = None;
    // each cell tries the previous cell's solution and every subsample restart,
    // keeping the smallest objective; the first cell is the outlier-free cold fit
    let (restarts, _) = subsample_starts(prep, rank, opts)?;
    let mut previous = Start::Cold;
    for (k, &value) in values.iter().enumerate() {
        let spec = spec_for(grid.kind, value);
        let mut outcome: Option<Result<(FitResult, Start)>> = None;
        let extra: &[Start] = if k == 0 { &[] } else { &restarts };
        for start in std::iter::once(&previous).chain(extra) {
            let result = fit_prepared_state(prep, rank, &spec, opts, start.clone());
            let better = match (&outcome, &result) {
                (None, _) => true,
                (Some(Err(_)), Ok(_)) => true,
                (Some(Ok((cur, _))), Ok((new, _))) => new.objective < cur.objective,
                _ => false,
            };
            if better {
                outcome = Some(result);
            }
        }
        let outcome = match outcome.expect("at least one chain") {
            Ok((fit, state)) => {
                previous = state;
                Ok(fit)
            }
            Err(e) => Err(e),
        };
        match outcome {
            Ok(fit) => {
                let rss = data.weighted_rss(&fit.b_hat, Some(&fit.c_hat));
                let r_num = numerical_rank(&fit.b_hat)?;
                let j = fit.outlier_rows.len();
                let mut value_pic = pic_from_parts(rss, n, m, q, r_num, j);
                if value_pic == f64::NEG_INFINITY {
                    value_pic = f64::INFINITY;
                }
                let admissible = pic_domain(n, m, q, r_num, j) < 1.0;
                let cell = PathCell {
                    rank,
                    grid_index: k,
                    grid_value: value,
                    pic: value_pic,
                    admissible,
                    numerical_rank: r_num,
                    outlier_count: j,
                    objective: fit.objective,
                    iterations: fit.iterations,
                    converged: fit.converged,
                    outlier_norms: fit.outlier_norms(),
                    error: None,
                    fit: None,
                };
                if admissible && value_pic.is_finite() && best.as_ref().map_or(true, |(i, _)| value_pic < cells_pic(&cells, *i)) {
                    best = Some((k, fit.clone()));
                }
                cells.push(PathCell { fit: grid.retain_fits.then_some(fit), ..cell });
            }
            Err(e) => {
                log::warn!("rank {rank}, grid point {k} ({value}): {e}");
                cells.push(PathCell {
                    rank,
                    grid_index: k,
                    grid_value: value,
                    pic: f64::INFINITY,
                    admissible: false,
                    numerical_rank: 0,
                    outlier_count: 0,
                    objective: f64::NAN,
                    iterations: 0,
                    converged: false,
                    outlier_norms: vec![0.0; n],
                    error: Some(e.to_string()),
                    fit: None,
                });
            }
        }
    }
    Ok(RankPath { grid: values, cells, best })
}

fn cells_pic(cells: &[PathCell], i: usize) -> f64 {
    cells[i].pic
}

fn outlier_fraction(prep: &Prepared, opts: &SolverOptions, rank: usize, spec: &OutlierSpec) -> Result<f64> {
    let fit = fit_prepared(prep, rank, spec, opts, Start::Cold)?;
    Ok(fit.outlier_rows.len() as f64 / prep.y_t.nrows() as f64)
}

/// Largest `λ` (to bisection precision) whose cold-start fit flags at least a
/// fraction `target` of the observations.
fn calibrate_lambda(
    prep: &Prepared,
    opts: &SolverOptions,
    rank: usize,
    kind: GridKind,
    lambda_max: f64,
    target: f64,
) -> Result<f64> {
    let mut hi = lambda_max;
    let mut lo = lambda_max;
    let mut found = false;
    for _ in 0..60 {
        lo *= 0.5;
        if outlier_fraction(prep, opts, rank, &spec_for(kind, lo))? >= target {
            found = true;
            break;
        }
        hi = lo;
    }
    if !found {
        return Ok(lo);
    }
    for _ in 0..12 {
        let mid = (lo * hi).sqrt();
        if outlier_fraction(prep, opts, rank, &spec_for(kind, mid))? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

const LAMBDA_MAX_MARGIN: f64 = 1e-9;

fn lambda_grid(prep: &Prepared, grid: &GridSpec, opts: &SolverOptions, rank: usize, elementwise: bool) -> Result<Vec<f64>> {
    let cold = prep.engine.fit(&prep.y_t, rank)?;
    let residual = &prep.y_t - &cold.fitted;
    let top = if elementwise {
        residual.amax()
    } else {
        row_norms(&residual).into_iter().fold(0.0, f64::max)
    };
    // Margin so the largest residual, recomputed inside the solver, stays at or below λ_max.
    let lambda_max = (top * (1.0 + LAMBDA_MAX_MARGIN)).max(f64::MIN_POSITIVE);
    let (v_lo, v_hi) = grid.outlier_fraction_bounds;
    let upper = if v_lo > 0.0 {
        calibrate_lambda(prep, opts, rank, grid.kind, lambda_max, v_lo)?
    } else {
        lambda_max
    };
    let lower = calibrate_lambda(prep, opts, rank, grid.kind, lambda_max, v_hi)?.min(upper);
    let count = grid.lambda_count;
    let ratio = lower / upper;
    Ok((0..count)
        .map(|k| upper * ratio.powf(k as f64 / (count - 1) as f64))
        .collect())
}

fn rho_grid(n: usize, grid: &GridSpec) -> Vec<f64> {
    let (v_lo, v_hi) = grid.outlier_fraction_bounds;
    let f_lo = v_lo.max(1.0 / n as f64).min(v_hi);
    let count = grid.lambda_count - 1;
    let mut values: Vec<usize> = vec![0];
    for k in 0..count {
        let t = if count == 1 { 1.0 } else { k as f64 / (count - 1) as f64 };
        let f = f_lo * (v_hi / f_lo).powf(t);
        values.push(((n as f64 * f).round() as usize).min(n));
    }
    values.sort_unstable();
    values.dedup();
    values.into_iter().map(|v| v as f64).collect()
}

/// Outlier detection paths at the selected rank.
#[derive(Debug, Clone)]
pub struct DetectionTable {
    pub grid_values: Vec<f64>,
    /// `n × (valid grid points)`, entries `‖ĉᵢ‖₂`.
    pub norms: DenseMatrix,
}

pub fn detection_path_table(path: &PathResult) -> Result<DetectionTable> {
    if path.detection_grid.is_empty() {
        return Err(R4Error::invalid("path has no valid fit at the selected rank"));
    }
    Ok(DetectionTable { grid_values: path.detection_grid.clone(), norms: path.detection_path.clone() })
}
