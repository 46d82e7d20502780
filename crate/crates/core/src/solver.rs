//! Block coordinate descent for robust reduced-rank regression.
//!
//! Alternates
//!
//! 1. `C ← Θ(Y − XB)` (row-wise, element-wise or quantile thresholding), the
//!    exact minimizer over `C` for fixed `B`, and
//! 2. `B ← R(X, Y − C, r)`, the exact rank-`r` minimizer over `B` for fixed `C`,
//!
//! so the criterion never increases. With a weighting `Γ` everything runs on
//! `YΓ^{1/2}` and is mapped back at the end, which applies the penalty to
//! `‖Γ^{1/2}cᵢ‖₂`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{R4Error, Result};
use crate::linalg::{nonzero_rows, select_rows, DenseMatrix};
use crate::rrr::{RankFit, ReducedRank, RegressionData};
use crate::thresholding::{elementwise_threshold, quantile_threshold_rows, rowwise_threshold, ThresholdRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierSpec {
    /// `Σᵢ P_Θ(‖cᵢ‖₂)`: whole observations are outlying.
    PenalizedRowwise(ThresholdRule),
    /// `Σᵢₖ P_Θ(|cᵢₖ|)`: individual entries are outlying.
    PenalizedElementwise(ThresholdRule),
    /// `‖C‖_{2,0} ≤ rho_count`, kept rows shrunk by `1/(1+eta)`.
    Constrained { rho_count: usize, eta: f64 },
}

impl OutlierSpec {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            OutlierSpec::PenalizedRowwise(r) | OutlierSpec::PenalizedElementwise(r) => Some(r.lambda),
            OutlierSpec::Constrained { .. } => None,
        }
    }

    pub fn rho_count(&self) -> Option<usize> {
        match self {
            OutlierSpec::Constrained { rho_count, .. } => Some(*rho_count),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct R4Problem {
    pub data: RegressionData,
    pub rank: usize,
    pub outlier_spec: OutlierSpec,
}

impl R4Problem {
    pub fn new(data: RegressionData, rank: usize, outlier_spec: OutlierSpec) -> Result<Self> {
        if let OutlierSpec::Constrained { rho_count, eta } = outlier_spec {
            if rho_count > data.n() {
                return Err(R4Error::invalid(format!(
                    "rho_count {rho_count} exceeds the number of observations {}",
                    data.n()
                )));
            }
            if !(eta >= 0.0) {
                return Err(R4Error::invalid(format!("eta must be nonnegative, got {eta}")));
            }
        }
        Ok(R4Problem { data, rank, outlier_spec })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once `|F_t − F_{t+1}| / max(1, F_t)` falls below this.
    pub tolerance: f64,
    /// Number of subsample-initialized restarts on top of the cold start.
    pub multistart: usize,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 500, tolerance: 1e-8, multistart: 0, subsample_fraction: 0.5, seed: 0 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(R4Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(R4Error::invalid("tolerance must be nonnegative"));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(R4Error::invalid("subsample_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub b_hat: DenseMatrix,
    pub c_hat: DenseMatrix,
    pub rank: usize,
    /// Rows of `Ĉ` with nonzero norm, ascending.
    pub outlier_rows: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub lambda: Option<f64>,
    pub rho_count: Option<usize>,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// `‖ĉᵢ‖₂` for every observation.
    pub fn outlier_norms(&self) -> Vec<f64> {
        crate::linalg::row_norms(&self.c_hat)
    }
}

/// Exact minimizer of the outlier subproblem for a fixed coefficient matrix.
pub fn c_step(residual: &DenseMatrix, spec: &OutlierSpec, seed: u64) -> Result<DenseMatrix> {
    match spec {
        OutlierSpec::PenalizedRowwise(rule) => Ok(rowwise_threshold(rule, residual)),
        OutlierSpec::PenalizedElementwise(rule) => Ok(elementwise_threshold(rule, residual)),
        OutlierSpec::Constrained { rho_count, eta } => quantile_threshold_rows(residual, *rho_count, *eta, seed),
    }
}

/// Outlier penalty for a given `C`, matching [`c_step`]'s subproblem.
fn outlier_penalty(spec: &OutlierSpec, c: &DenseMatrix) -> f64 {
    match spec {
        OutlierSpec::PenalizedRowwise(rule) => c
            .row_iter()
            .map(|row| {
                let norm = row.norm();
                if norm == 0.0 {
                    0.0
                } else {
                    rule.penalty(norm).p_theta
                }
            })
            .sum(),
        OutlierSpec::PenalizedElementwise(rule) => {
            c.iter().filter(|v| **v != 0.0).map(|&v| rule.penalty(v).p_theta).sum()
        }
        OutlierSpec::Constrained { eta, .. } => {
            if *eta == 0.0 {
                0.0
            } else {
                0.5 * eta * c.norm_squared()
            }
        }
    }
}

/// Cached state shared by every fit on the same data: the design SVD and the
/// weighted response.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub engine: ReducedRank,
    pub y_t: DenseMatrix,
    pub roots: Option<(DenseMatrix, DenseMatrix)>,
    pub x: DenseMatrix,
}

impl Prepared {
    pub fn new(data: &RegressionData) -> Result<Self> {
        let engine = ReducedRank::new(&data.x)?;
        let roots = data.gamma_roots()?;
        let y_t = match &roots {
            Some((half, _)) => &data.y * half,
            None => data.y.clone(),
        };
        Ok(Prepared { engine, y_t, roots, x: data.x.clone() })
    }

    fn to_tilde(&self, a: &DenseMatrix) -> DenseMatrix {
        match &self.roots {
            Some((half, _)) => a * half,
            None => a.clone(),
        }
    }

    fn from_tilde(&self, a: DenseMatrix) -> DenseMatrix {
        match &self.roots {
            Some((_, inv_half)) => a * inv_half,
            None => a,
        }
    }

    pub fn q(&self) -> usize {
        self.engine.ls.rank()
    }
}

/// Starting point of the descent, held in the weighted scale together with
/// its fitted values so warm starts skip the `XB` product.
#[derive(Debug, Clone)]
pub(crate) enum Start {
    /// `C⁰ = 0`, `B⁰ = R(X, Y, r)`.
    Cold,
    Warm { b_t: DenseMatrix, fitted: DenseMatrix, c_t: DenseMatrix },
}

#[cfg(test)]
impl Start {
    /// Warm start from `(B, C)` in the original scale.
    pub(crate) fn warm(prep: &Prepared, b: &DenseMatrix, c: &DenseMatrix) -> Start {
        let b_t = prep.to_tilde(b);
        let fitted = &prep.x * &b_t;
        Start::Warm { b_t, fitted, c_t: prep.to_tilde(c) }
    }
}

enum Coef {
    Core(DenseMatrix),
    Tilde(DenseMatrix),
}

struct Iterate {
    fitted: DenseMatrix,
    c: DenseMatrix,
    coef: Coef,
    objective: f64,
}

pub(crate) fn fit_prepared(
    prep: &Prepared,
    rank: usize,
    spec: &OutlierSpec,
    opts: &SolverOptions,
    start: Start,
) -> Result<FitResult> {
    fit_prepared_state(prep, rank, spec, opts, start).map(|(fit, _)| fit)
}

/// As [`fit_prepared`], also returning the final iterate as a warm start.
pub(crate) fn fit_prepared_state(
    prep: &Prepared,
    rank: usize,
    spec: &OutlierSpec,
    opts: &SolverOptions,
    start: Start,
) -> Result<(FitResult, Start)> {
    opts.validate()?;
    let y = &prep.y_t;
    let (n, m) = y.shape();
    prep.engine.check_rank(rank, m)?;
    let objective = |fitted: &DenseMatrix, c: &DenseMatrix| -> f64 {
        0.5 * (y - fitted - c).norm_squared() + outlier_penalty(spec, c)
    };

    let mut current = match start {
        Start::Cold => {
            let RankFit { core, fitted } = prep.engine.fit(y, rank)?;
            let c = DMatrix::zeros(n, m);
            let objective = objective(&fitted, &c);
            Iterate { fitted, c, coef: Coef::Core(core), objective }
        }
        Start::Warm { b_t, fitted, c_t } => {
            let objective = objective(&fitted, &c_t);
            Iterate { fitted, c: c_t, coef: Coef::Tilde(b_t), objective }
        }
    };

    let mut trace = vec![current.objective];
    let mut converged = false;
    let mut iterations = 0;
    let mut warnings = Vec::new();
    while iterations < opts.max_iterations {
        iterations += 1;
        let c = c_step(&(y - &current.fitted), spec, opts.seed)?;
        let RankFit { core, fitted } = prep.engine.fit(&(y - &c), rank)?;
        let value = objective(&fitted, &c);
        let prev = current.objective;
        let scale = prev.max(1.0);
        if value > prev {
            // both half-steps are exact minimizers, so an increase is rounding
            // noise; keep the previous iterate
            if (value - prev) / scale < opts.tolerance.max(1e-10) {
                converged = true;
            } else {
                warnings.push(format!("objective increased from {prev} to {value}; stopping"));
            }
            break;
        }
        current = Iterate { fitted, c, coef: Coef::Core(core), objective: value };
        trace.push(value);
        if (prev - value) / scale < opts.tolerance {
            converged = true;
            break;
        }
    }

    let b_t = match current.coef {
        Coef::Core(core) => prep.engine.coef(&core),
        Coef::Tilde(b_t) => b_t,
    };
    let b_hat = prep.from_tilde(b_t.clone());
    let c_hat = prep.from_tilde(current.c.clone());
    let outlier_rows = nonzero_rows(&c_hat);
    let state = Start::Warm { b_t, fitted: current.fitted, c_t: current.c };
    let fit = FitResult {
        b_hat,
        c_hat,
        rank,
        outlier_rows,
        objective_trace: trace,
        iterations,
        converged,
        objective: current.objective,
        lambda: spec.lambda(),
        rho_count: spec.rho_count(),
        warnings,
    };
    Ok((fit, state))
}

/// Single cold-start fit: `C⁰ = 0`, `B⁰` the plain reduced-rank fit.
pub fn r4_fit(problem: &R4Problem, opts: &SolverOptions) -> Result<FitResult> {
    let prep = Prepared::new(&problem.data)?;
    fit_prepared(&prep, problem.rank, &problem.outlier_spec, opts, Start::Cold)
}

/// Cold start plus `opts.multistart` restarts, each initialized by a plain
/// reduced-rank fit on a random row subsample; returns the fit with the
/// smallest final objective (the earliest one on ties).
pub fn multistart_fit(problem: &R4Problem, opts: &SolverOptions) -> Result<FitResult> {
    let prep = Prepared::new(&problem.data)?;
    multistart_prepared(&prep, problem.rank, &problem.outlier_spec, opts)
}

pub(crate) fn multistart_prepared(
    prep: &Prepared,
    rank: usize,
    spec: &OutlierSpec,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let mut best = fit_prepared(prep, rank, spec, opts, Start::Cold)?;
    if opts.multistart == 0 {
        return Ok(best);
    }
    let (starts, skipped) = subsample_starts(prep, rank, opts)?;
    for start in starts {
        let candidate = fit_prepared(prep, rank, spec, opts, start)?;
        if candidate.objective < best.objective {
            best = candidate;
        }
    }
    best.warnings.extend(skipped);
    Ok(best)
}

/// Restart points `(B⁰, 0)` with `B⁰` the plain reduced-rank fit on seeded row
/// subsamples of size `ceil(fraction·n)`; also returns a warning per restart
/// skipped because its subsample cannot support the rank.
pub(crate) fn subsample_starts(prep: &Prepared, rank: usize, opts: &SolverOptions) -> Result<(Vec<Start>, Vec<String>)> {
    let (n, m) = prep.y_t.shape();
    let size = ((opts.subsample_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.multistart);
    let mut skipped = Vec::new();
    for restart in 0..opts.multistart {
        let mut rows = sample(&mut rng, n, size).into_vec();
        rows.sort_unstable();
        let x_sub = select_rows(&prep.x, &rows);
        let engine = match ReducedRank::new(&x_sub) {
            Ok(e) if e.max_rank(m) >= rank => e,
            _ => {
                let msg = format!("restart {restart}: subsample of {size} rows cannot support rank {rank}");
                log::warn!("{msg}");
                skipped.push(msg);
                continue;
            }
        };
        let fit = engine.fit(&select_rows(&prep.y_t, &rows), rank)?;
        let b_t = engine.coef(&fit.core);
        let fitted = &prep.x * &b_t;
        starts.push(Start::Warm { b_t, fitted, c_t: DMatrix::zeros(n, m) });
    }
    Ok((starts, skipped))
}

/// Joint criterion `F(B, C)` in the original scale.
pub fn joint_objective(problem: &R4Problem, b: &DenseMatrix, c: &DenseMatrix) -> Result<f64> {
    let prep = Prepared::new(&problem.data)?;
    let fitted = &prep.x * prep.to_tilde(b);
    let c_t = prep.to_tilde(c);
    Ok(0.5 * (&prep.y_t - fitted - &c_t).norm_squared() + outlier_penalty(&problem.outlier_spec, &c_t))
}

/// `Σᵢ ρ(‖yᵢ − Bᵀxᵢ‖₂)`, the M-estimation criterion left after profiling `C` out.
pub fn profiled_objective(problem: &R4Problem, b: &DenseMatrix) -> Result<f64> {
    let rule = match &problem.outlier_spec {
        OutlierSpec::PenalizedRowwise(rule) => rule,
        _ => return Err(R4Error::invalid("profiled objective is defined for the row-wise penalized form")),
    };
    let prep = Prepared::new(&problem.data)?;
    let residual = &prep.y_t - &prep.x * prep.to_tilde(b);
    Ok(residual.row_iter().map(|row| rule.penalty(row.norm()).rho).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rrr::rrr_fit;
    use crate::thresholding::RuleKind;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn low_rank_data(n: usize, p: usize, m: usize, r: usize, noise: f64, seed: u64) -> (RegressionData, DenseMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(n, p, &mut rng);
        let b = gaussian(p, r, &mut rng) * gaussian(r, m, &mut rng);
        let y = &x * &b + gaussian(n, m, &mut rng) * noise;
        (RegressionData::new(x, y, None).unwrap(), b)
    }

    #[test]
    fn noiseless_fixed_point() {
        let (data, b) = low_rank_data(30, 4, 3, 2, 0.0, 1);
        let problem = R4Problem::new(data, 2, OutlierSpec::PenalizedRowwise(ThresholdRule::hard(1e3))).unwrap();
        let fit = r4_fit(&problem, &SolverOptions::default()).unwrap();
        assert!(fit.outlier_rows.is_empty());
        assert!((&problem.data.x * (&fit.b_hat - &b)).norm() <= 1e-8);
        assert!(fit.converged && fit.iterations <= 2);
    }

    #[test]
    fn infinite_threshold_is_plain_rrr() {
        let (data, _) = low_rank_data(25, 4, 3, 1, 1.0, 2);
        let plain = rrr_fit(&data, 2).unwrap();
        for spec in [
            OutlierSpec::PenalizedRowwise(ThresholdRule::soft(1e12)),
            OutlierSpec::PenalizedElementwise(ThresholdRule::hard(1e12)),
            OutlierSpec::Constrained { rho_count: 0, eta: 0.0 },
        ] {
            let problem = R4Problem::new(data.clone(), 2, spec).unwrap();
            let fit = r4_fit(&problem, &SolverOptions::default()).unwrap();
            assert_eq!(fit.c_hat.norm(), 0.0);
            assert_relative_eq!(fit.b_hat, plain.b_hat, epsilon = 1e-10);
        }
    }

    /// Refit with a single row absorbed into `C`; objective is ½RSS + λ²/2.
    fn single_outlier_oracle(data: &RegressionData, r: usize, lambda: f64) -> (Option<usize>, f64) {
        let plain = rrr_fit(data, r).unwrap();
        let mut best = (None, 0.5 * data.weighted_rss(&plain.b_hat, None));
        for i in 0..data.n() {
            let keep: Vec<usize> = (0..data.n()).filter(|&k| k != i).collect();
            let sub = RegressionData::new(select_rows(&data.x, &keep), select_rows(&data.y, &keep), None).unwrap();
            let fit = rrr_fit(&sub, r).unwrap();
            let value = 0.5 * sub.weighted_rss(&fit.b_hat, None) + 0.5 * lambda * lambda;
            if value < best.1 {
                best = (Some(i), value);
            }
        }
        best
    }

    #[test]
    fn planted_row_is_unique_outlier() {
        let (mut data, _) = low_rank_data(30, 4, 3, 1, 1.0, 3);
        for j in 0..3 {
            data.y[(7, j)] += 50.0;
        }
        let (oracle_row, oracle_value) = single_outlier_oracle(&data, 1, 10.0);
        assert_eq!(oracle_row, Some(7));
        let problem = R4Problem::new(data, 1, OutlierSpec::PenalizedRowwise(ThresholdRule::hard(10.0))).unwrap();
        let fit = r4_fit(&problem, &SolverOptions::default()).unwrap();
        assert_eq!(fit.outlier_rows, vec![7]);
        assert_relative_eq!(fit.objective, oracle_value, epsilon = 1e-8);
    }

    #[test]
    fn c_step_examples() {
        let r = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.1, 0.1]);
        let c = c_step(&r, &OutlierSpec::PenalizedRowwise(ThresholdRule::soft(1.0)), 0).unwrap();
        assert_relative_eq!(c, DMatrix::from_row_slice(2, 2, &[2.4, 3.2, 0.0, 0.0]), epsilon = 1e-15);

        let r = DMatrix::from_row_slice(3, 1, &[5.0, 2.0, 7.0]);
        let c = c_step(&r, &OutlierSpec::Constrained { rho_count: 1, eta: 0.0 }, 0).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 7.0]));
    }

    #[test]
    fn soft_c_step_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = gaussian(10, 3, &mut rng) * 2.0;
        let rule = ThresholdRule::soft(1.0);
        let f = |c: &DenseMatrix| 0.5 * (&r - c).norm_squared() + c.row_iter().map(|row| row.norm()).sum::<f64>();
        let c = c_step(&r, &OutlierSpec::PenalizedRowwise(rule), 0).unwrap();
        let best = f(&c);
        for k in 0..100_000 {
            let scale = [1e-1, 1e-2, 1e-3][k % 3];
            let cand = &c + gaussian(10, 3, &mut rng) * scale;
            assert!(f(&cand) >= best - 1e-12);
        }
    }

    #[test]
    fn profiled_examples() {
        let (data, b) = low_rank_data(20, 3, 3, 2, 0.0, 5);
        let problem = R4Problem::new(data.clone(), 2, OutlierSpec::PenalizedRowwise(ThresholdRule::soft(1.0))).unwrap();
        assert!(profiled_objective(&problem, &b).unwrap() < 1e-20);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b0 = gaussian(3, 3, &mut rng) * 5.0;
        let lam = 0.5;
        let hard = R4Problem::new(data.clone(), 2, OutlierSpec::PenalizedRowwise(ThresholdRule::hard(lam))).unwrap();
        let resid = &data.y - &data.x * &b0;
        let expected: f64 = resid
            .row_iter()
            .map(|row| {
                let t = row.norm();
                if t > lam {
                    0.5 * lam * lam
                } else {
                    0.5 * t * t
                }
            })
            .sum();
        assert_relative_eq!(profiled_objective(&hard, &b0).unwrap(), expected, epsilon = 1e-10);

        let constrained = R4Problem::new(data, 2, OutlierSpec::Constrained { rho_count: 1, eta: 0.0 }).unwrap();
        assert!(profiled_objective(&constrained, &b0).is_err());
    }

    #[test]
    fn profiled_equals_joint_at_optimal_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [RuleKind::Soft, RuleKind::Hard, RuleKind::HardRidge { eta: 0.5 }] {
            for _ in 0..20 {
                let (data, _) = low_rank_data(15, 3, 4, 2, 2.0, rng.next_u64_compat());
                let rule = ThresholdRule { kind, lambda: 1.5 };
                let problem = R4Problem::new(data.clone(), 2, OutlierSpec::PenalizedRowwise(rule)).unwrap();
                let b = gaussian(3, 4, &mut rng);
                let c = rowwise_threshold(&rule, &(&data.y - &data.x * &b));
                let joint = joint_objective(&problem, &b, &c).unwrap();
                let profiled = profiled_objective(&problem, &b).unwrap();
                assert!((joint - profiled).abs() <= 1e-8, "{kind:?}: {joint} vs {profiled}");
            }
        }
    }

    trait NextU64 {
        fn next_u64_compat(&mut self) -> u64;
    }
    impl NextU64 for ChaCha8Rng {
        fn next_u64_compat(&mut self) -> u64 {
            rand::Rng::random(self)
        }
    }

    #[test]
    fn weighted_fit_descends_and_maps_back() {
        let (data, _) = low_rank_data(30, 4, 3, 1, 1.0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = gaussian(3, 3, &mut rng);
        let gamma = m.transpose() * &m + DMatrix::identity(3, 3);
        let mut y = data.y.clone();
        for j in 0..3 {
            y[(0, j)] += 40.0;
        }
        let weighted = RegressionData::new(data.x.clone(), y, Some(gamma)).unwrap();
        let problem = R4Problem::new(weighted, 1, OutlierSpec::PenalizedRowwise(ThresholdRule::hard(8.0))).unwrap();
        let fit = r4_fit(&problem, &SolverOptions::default()).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(fit.outlier_rows.contains(&0));
        assert_relative_eq!(
            joint_objective(&problem, &fit.b_hat, &fit.c_hat).unwrap(),
            fit.objective,
            epsilon = 1e-8 * fit.objective.max(1.0)
        );
    }

    #[test]
    fn multistart_zero_is_cold_start() {
        let (data, _) = low_rank_data(20, 3, 3, 1, 1.0, 10);
        let problem = R4Problem::new(data, 1, OutlierSpec::Constrained { rho_count: 2, eta: 0.0 }).unwrap();
        let opts = SolverOptions::default();
        let a = r4_fit(&problem, &opts).unwrap();
        let b = multistart_fit(&problem, &opts).unwrap();
        assert_eq!(a.b_hat, b.b_hat);
        assert_eq!(a.objective_trace, b.objective_trace);
        let more = multistart_fit(&problem, &SolverOptions { multistart: 5, ..opts }).unwrap();
        assert!(more.objective <= a.objective);
    }

    #[test]
    fn multistart_records_skipped_restarts() {
        let (data, _) = low_rank_data(6, 3, 3, 2, 1.0, 11);
        let problem = R4Problem::new(data, 3, OutlierSpec::Constrained { rho_count: 1, eta: 0.0 }).unwrap();
        let opts = SolverOptions { multistart: 3, subsample_fraction: 0.2, ..Default::default() };
        let fit = multistart_fit(&problem, &opts).unwrap();
        assert_eq!(fit.warnings.len(), 3);
    }

    #[test]
    fn scaling_equivariance() {
        let (mut data, _) = low_rank_data(25, 3, 3, 1, 0.5, 12);
        for j in 0..3 {
            data.y[(3, j)] -= 20.0;
        }
        let s = 3.5;
        for rule in [ThresholdRule::soft(2.0), ThresholdRule::hard(4.0)] {
            let base = r4_fit(
                &R4Problem::new(data.clone(), 1, OutlierSpec::PenalizedRowwise(rule)).unwrap(),
                &SolverOptions::default(),
            )
            .unwrap();
            let scaled_data = RegressionData::new(data.x.clone(), &data.y * s, None).unwrap();
            let scaled = r4_fit(
                &R4Problem::new(scaled_data, 1, OutlierSpec::PenalizedRowwise(rule.with_lambda(rule.lambda * s))).unwrap(),
                &SolverOptions::default(),
            )
            .unwrap();
            assert!((&scaled.c_hat - &base.c_hat * s).norm() <= 1e-6 * (1.0 + scaled.c_hat.norm()));
        }
    }

    #[test]
    fn fixed_point_consistency() {
        let (mut data, _) = low_rank_data(40, 5, 4, 2, 1.0, 13);
        for j in 0..4 {
            data.y[(1, j)] += 15.0;
        }
        let spec = OutlierSpec::PenalizedRowwise(ThresholdRule::soft(3.0));
        let problem = R4Problem::new(data, 2, spec).unwrap();
        let opts = SolverOptions::default();
        let fit = r4_fit(&problem, &opts).unwrap();
        assert!(fit.converged);
        let prep = Prepared::new(&problem.data).unwrap();
        let again = fit_prepared(
            &prep,
            2,
            &spec,
            &SolverOptions { max_iterations: 1, ..opts },
            Start::warm(&prep, &fit.b_hat, &fit.c_hat),
        )
        .unwrap();
        assert!((fit.objective - again.objective).abs() / fit.objective.max(1.0) < opts.tolerance);
    }

    #[test]
    fn invalid_problem_rejected() {
        let (data, _) = low_rank_data(5, 2, 2, 1, 1.0, 14);
        assert!(R4Problem::new(data.clone(), 1, OutlierSpec::Constrained { rho_count: 6, eta: 0.0 }).is_err());
        let problem = R4Problem::new(data, 3, OutlierSpec::PenalizedRowwise(ThresholdRule::soft(1.0))).unwrap();
        assert!(matches!(r4_fit(&problem, &SolverOptions::default()), Err(R4Error::InvalidInput(_))));
    }
}
