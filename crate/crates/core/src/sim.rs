//! Synthetic benchmark: data generators for Models I, II and III, comparator
//! estimators, per-replication metrics, study aggregation and breakdown sweeps.
//!
//! Gaussian draws use `rand_distr::StandardNormal` (ziggurat) driven by a
//! `ChaCha8Rng` seeded with `seed`, on stream `rep` for replication `rep`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{R4Error, Result};
use crate::linalg::{compound_symmetry, compound_symmetry_sqrt, nonzero_rows, numerical_rank, row_norms, select_rows, thin_svd, DenseMatrix, LeastSquares};
use crate::rrr::{rrr_fit, rrr_ridge_fit, RegressionData};
use crate::solver::{multistart_fit, FitResult, OutlierSpec, R4Problem, SolverOptions};
use crate::thresholding::{RuleKind, ThresholdRule};
use crate::tuning::{fit_path, pic_with_dof, GridKind, GridSpec};

/// Correlation of the compound-symmetry design and error covariances.
pub const COMPOUND_RHO: f64 = 0.5;
/// Value written into every entry of the leverage rows of `X`.
pub const LEVERAGE_VALUE: f64 = 10.0;
/// Number of leading rows turned into leverage points.
pub const LEVERAGE_ROWS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    I,
    II,
    III,
}

impl std::str::FromStr for Model {
    type Err = R4Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            _ => Err(R4Error::invalid(format!("unknown model {s:?}, expected I, II or III"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub r_star: usize,
    /// Latent design dimension (Model III only).
    pub q_latent: usize,
    pub outlier_fraction: f64,
    pub alpha: f64,
    pub snr: f64,
    pub replications: usize,
    pub seed: u64,
    pub leverage: bool,
    /// Threshold levels per rank for the R4 paths.
    pub lambda_count: usize,
    /// Subsample-initialized chains run alongside the cold-start chain on R4 paths.
    pub multistart: usize,
}

impl SimConfig {
    pub fn new(model: Model) -> Self {
        let (p, m) = match model {
            Model::I | Model::II => (12, 8),
            Model::III => (500, 50),
        };
        SimConfig {
            model,
            n: 100,
            p,
            m,
            r_star: 3,
            q_latent: 10,
            outlier_fraction: 0.05,
            alpha: 2.0,
            snr: 0.75,
            replications: 50,
            seed: 0,
            leverage: true,
            lambda_count: 100,
            multistart: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(R4Error::invalid(msg.to_string()));
        if self.n < 2 || self.p == 0 || self.m == 0 {
            return bad("n must be at least 2 and p, m positive");
        }
        if self.r_star == 0 || self.r_star > self.m.min(self.p) {
            return bad("r_star must lie in [1, min(p, m)]");
        }
        if self.model == Model::III && (self.q_latent < self.r_star || self.q_latent > self.p) {
            return bad("q_latent must lie in [r_star, p]");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1)");
        }
        if !(self.alpha.is_finite() && self.snr.is_finite() && self.snr > 0.0) {
            return bad("alpha must be finite and snr positive");
        }
        if self.replications == 0 || self.lambda_count < 2 {
            return bad("need at least one replication and two grid points");
        }
        if self.leverage && self.n <= LEVERAGE_ROWS {
            return bad("n too small for leverage rows");
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.n as f64 * self.outlier_fraction).round() as usize
    }

    pub fn leverage_rows(&self) -> Vec<usize> {
        if self.leverage {
            (0..LEVERAGE_ROWS).collect()
        } else {
            Vec::new()
        }
    }
}

/// One generated data set with its ground truth.
#[derive(Debug, Clone)]
pub struct SimInstance {
    pub data: RegressionData,
    pub b_star: DenseMatrix,
    pub c_star: DenseMatrix,
    /// True error covariance `σ²Σ₀`.
    pub sigma: DenseMatrix,
    pub noise: DenseMatrix,
    /// Design before the leverage rows were overwritten.
    pub clean_x: DenseMatrix,
    pub noise_scale: f64,
    pub leverage_rows: Vec<usize>,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `A · S^{1/2}` for the compound-symmetry `S`, without forming `S^{1/2}`.
fn times_cs_sqrt(a: &DenseMatrix, rho: f64) -> DenseMatrix {
    let d = a.ncols() as f64;
    let diag = (1.0 - rho).sqrt();
    let c = ((1.0 + (d - 1.0) * rho).sqrt() - diag) / d;
    let sums: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| diag * a[(i, j)] + c * sums[i])
}

/// Generates replication `rep`: `Y = XB* + C* + E`.
///
/// `σ` is set so that `σ_{r*}(XB*)/‖E‖_F` equals `snr` exactly, and outlier
/// entries are `α` times the column standard deviations (divisor `n−1`) of
/// `XB*`, both computed on the final design (leverage rows included).
pub fn generate_instance(cfg: &SimConfig, rep: usize) -> Result<SimInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let (n, p, m, r) = (cfg.n, cfg.p, cfg.m, cfg.r_star);

    let clean_x = match cfg.model {
        Model::I | Model::II => times_cs_sqrt(&gaussian(n, p, &mut rng), COMPOUND_RHO),
        Model::III => {
            let x1 = gaussian(n, cfg.q_latent, &mut rng);
            let x2 = gaussian(cfg.q_latent, p, &mut rng);
            times_cs_sqrt(&(x1 * x2), COMPOUND_RHO)
        }
    };
    let b_star = gaussian(p, r, &mut rng) * gaussian(m, r, &mut rng).transpose();
    let e0 = gaussian(n, m, &mut rng);
    let (e_shape, sigma0) = match cfg.model {
        Model::I => (e0, DMatrix::identity(m, m)),
        Model::II | Model::III => (times_cs_sqrt(&e0, COMPOUND_RHO), compound_symmetry(m, COMPOUND_RHO)),
    };

    let mut x = clean_x.clone();
    let leverage_rows = cfg.leverage_rows();
    for &i in &leverage_rows {
        x.row_mut(i).fill(LEVERAGE_VALUE);
    }
    let signal = &x * &b_star;
    let (_, s, _) = thin_svd(&signal)?;
    let sv = if s.len() >= r { s[r - 1] } else { 0.0 };
    let e_norm = e_shape.norm();
    if sv <= 0.0 || e_norm <= 0.0 {
        return Err(R4Error::Numerical("degenerate signal or noise draw".into()));
    }
    let scale = sv / (cfg.snr * e_norm);
    let noise = e_shape * scale;

    let mut c_star = DMatrix::zeros(n, m);
    for j in 0..m {
        let col = signal.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for i in 0..cfg.outlier_count() {
            c_star[(i, j)] = cfg.alpha * sd;
        }
    }

    let y = &x * &b_star + &c_star + &noise;
    let sigma = sigma0 * (scale * scale);
    Ok(SimInstance {
        data: RegressionData::new(x, y, None)?,
        b_star,
        c_star,
        sigma,
        noise,
        clean_x,
        noise_scale: scale,
        leverage_rows,
    })
}

/// Fit, detect, refit: plain reduced-rank fit, drop the `known_outlier_count`
/// rows with the largest residual sum of squares, refit on the rest, and fill
/// the dropped rows of `Ĉ` with residuals of the refit.
pub fn three_step_rro(data: &RegressionData, r: usize, known_outlier_count: usize) -> Result<FitResult> {
    let n = data.n();
    if known_outlier_count >= n {
        return Err(R4Error::invalid(format!("outlier count {known_outlier_count} must be below n = {n}")));
    }
    let first = rrr_fit(data, r)?;
    let residual = &data.y - &first.fitted;
    let mut order: Vec<usize> = (0..n).collect();
    let norms = row_norms(&residual);
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut dropped: Vec<usize> = order[..known_outlier_count].to_vec();
    dropped.sort_unstable();
    let kept: Vec<usize> = (0..n).filter(|i| dropped.binary_search(i).is_err()).collect();

    let sub = RegressionData::new(select_rows(&data.x, &kept), select_rows(&data.y, &kept), data.gamma.clone())?;
    let refit = rrr_fit(&sub, r).map_err(|e| R4Error::Infeasible(format!("refit on {} rows failed: {e}", kept.len())))?;
    let resid = &data.y - &data.x * &refit.b_hat;
    let mut c_hat = DMatrix::zeros(n, data.m());
    for &i in &dropped {
        c_hat.set_row(i, &resid.row(i));
    }
    let outlier_rows = nonzero_rows(&c_hat);
    let objective = 0.5 * data.weighted_rss(&refit.b_hat, Some(&c_hat));
    Ok(FitResult {
        b_hat: refit.b_hat,
        c_hat,
        rank: r,
        outlier_rows,
        objective_trace: vec![objective],
        iterations: 1,
        converged: true,
        objective,
        lambda: None,
        rho_count: Some(known_outlier_count),
        warnings: Vec::new(),
    })
}

/// Metrics of one estimate on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub err_b: f64,
    pub err_b_weighted: f64,
    pub err_bc: f64,
    pub rank: usize,
    pub masking: f64,
    pub swamping: f64,
    pub joint_detection: bool,
}

/// Scores `(B̂, Ĉ)` against the truth. Errors are averaged over the rows
/// outside `leverage_rows`; detection uses all rows, with the nonzero rows
/// of `Ĉ` as the flagged set.
pub fn evaluate(
    b_hat: &DenseMatrix,
    c_hat: &DenseMatrix,
    instance: &SimInstance,
    leverage_rows: &[usize],
) -> Result<Metrics> {
    let data = &instance.data;
    let (n, m) = (data.n(), data.m());
    if b_hat.shape() != instance.b_star.shape() || c_hat.shape() != (n, m) {
        return Err(R4Error::invalid("estimate shapes do not match the truth"));
    }
    let kept: Vec<usize> = (0..n).filter(|i| !leverage_rows.contains(i)).collect();
    let x = select_rows(&data.x, &kept);
    let denom = (m * kept.len()) as f64;
    let diff = &x * (&instance.b_star - b_hat);
    let err_b = diff.norm_squared() / denom;
    let sigma_inv = instance
        .sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| R4Error::Numerical("error covariance is singular".into()))?;
    let err_b_weighted = (&diff * sigma_inv * diff.transpose()).trace() / denom;
    let pred = &diff + select_rows(&(&instance.c_star - c_hat), &kept);
    let err_bc = pred.norm_squared() / denom;

    let truth = nonzero_rows(&instance.c_star);
    let flagged = nonzero_rows(c_hat);
    let missed = truth.iter().filter(|i| flagged.binary_search(i).is_err()).count();
    let false_alarms = flagged.iter().filter(|i| truth.binary_search(i).is_err()).count();
    let clean = n - truth.len();
    Ok(Metrics {
        err_b,
        err_b_weighted,
        err_bc,
        rank: numerical_rank(b_hat)?,
        masking: if truth.is_empty() { 0.0 } else { missed as f64 / truth.len() as f64 },
        swamping: if clean == 0 { 0.0 } else { false_alarms as f64 / clean as f64 },
        joint_detection: missed == 0 && false_alarms == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Hard-thresholded row-wise R4 tuned by the criterion.
    R4,
    /// As `R4` with `Γ = Σ⁻¹` for the true error covariance.
    R4Weighted,
    /// Plain reduced-rank regression, rank by the criterion.
    Rrr,
    /// Reduced-rank ridge regression, rank and ridge level by the criterion.
    Rrs,
    /// Three-step fit-detect-refit with the true outlier count.
    Rro,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::R4 => "R4",
            Method::R4Weighted => "R4_weighted",
            Method::Rrr => "RRR",
            Method::Rrs => "RRS",
            Method::Rro => "RRO",
        }
    }

    pub const ALL: [Method; 5] = [Method::Rrr, Method::Rrs, Method::Rro, Method::R4, Method::R4Weighted];
}

impl std::str::FromStr for Method {
    type Err = R4Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("R4w") && *m == Method::R4Weighted))
            .ok_or_else(|| R4Error::invalid(format!("unknown method {s:?}")))
    }
}

/// An estimate produced by one method on one replication.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub b_hat: DenseMatrix,
    pub c_hat: DenseMatrix,
}

fn ridge_grid(s_max: f64) -> Vec<f64> {
    let top = s_max * s_max;
    std::iter::once(0.0).chain((0..10).map(|k| top * 10f64.powf(-4.0 + 4.0 * k as f64 / 9.0))).collect()
}

/// Runs `method` on `instance` with the criterion-based tuning described on [`Method`].
pub fn fit_method(method: Method, instance: &SimInstance, cfg: &SimConfig) -> Result<Estimate> {
    let data = &instance.data;
    let (n, m) = (data.n(), data.m());
    let ls = LeastSquares::new(&data.x)?;
    let q = ls.rank();
    let max_rank = q.min(m);
    let zero = || DMatrix::zeros(n, m);
    let pick = |candidates: Vec<(f64, Estimate)>| -> Result<Estimate> {
        candidates
            .into_iter()
            .filter(|(v, _)| v.is_finite())
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| e)
            .ok_or_else(|| R4Error::Numerical(format!("{}: no admissible fit", method.name())))
    };
    match method {
        Method::Rrr => {
            let mut out = Vec::new();
            for r in 1..=max_rank {
                let fit = rrr_fit(data, r)?;
                let rss = data.weighted_rss(&fit.b_hat, None);
                let rr = numerical_rank(&fit.b_hat)?;
                out.push((pic_with_dof(rss, n, m, q as f64, rr, 0), Estimate { b_hat: fit.b_hat, c_hat: zero() }));
            }
            pick(out)
        }
        Method::Rrs => {
            let (_, s, _) = thin_svd(&data.x)?;
            let s_max = s.iter().cloned().fold(0.0, f64::max);
            let mut out = Vec::new();
            for mu in ridge_grid(s_max) {
                let dof: f64 = s.iter().take(q).map(|&v| v * v / (v * v + mu)).sum();
                for r in 1..=max_rank {
                    let fit = rrr_ridge_fit(data, r, mu)?;
                    let rss = data.weighted_rss(&fit.b_hat, None);
                    let rr = numerical_rank(&fit.b_hat)?;
                    out.push((pic_with_dof(rss, n, m, dof, rr, 0), Estimate { b_hat: fit.b_hat, c_hat: zero() }));
                }
            }
            pick(out)
        }
        Method::Rro => {
            let known = cfg.outlier_count();
            let mut out = Vec::new();
            for r in 1..=max_rank {
                let fit = three_step_rro(data, r, known)?;
                let rss = data.weighted_rss(&fit.b_hat, Some(&fit.c_hat));
                let rr = numerical_rank(&fit.b_hat)?;
                let j = fit.outlier_rows.len();
                out.push((pic_with_dof(rss, n, m, q as f64, rr, j), Estimate { b_hat: fit.b_hat, c_hat: fit.c_hat }));
            }
            pick(out)
        }
        Method::R4 | Method::R4Weighted => {
            let weighted;
            let target = if method == Method::R4Weighted {
                let gamma = instance
                    .sigma
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| R4Error::Numerical("error covariance is singular".into()))?;
                let gamma = (&gamma + gamma.transpose()) * 0.5;
                weighted = RegressionData::new(data.x.clone(), data.y.clone(), Some(gamma))?;
                &weighted
            } else {
                data
            };
            let mut grid = GridSpec::new((1..=max_rank).collect(), GridKind::Penalized { rule: RuleKind::Hard, elementwise: false });
            grid.lambda_count = cfg.lambda_count;
            grid.retain_fits = false;
            let opts = SolverOptions { multistart: cfg.multistart, seed: cfg.seed, ..SolverOptions::default() };
            let path = fit_path(target, &grid, &opts)?;
            let fit = path
                .selected_fit
                .ok_or_else(|| R4Error::Numerical("R4 path has no admissible fit".into()))?;
            Ok(Estimate { b_hat: fit.b_hat, c_hat: fit.c_hat })
        }
    }
}

/// Mean and spread of one metric across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// 10% symmetric trimmed mean.
    pub trimmed_mean: f64,
    /// Sample standard deviation across replications.
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub err_b: Summary,
    pub err_b_weighted: Summary,
    pub err_bc: Summary,
    pub avg_rank: f64,
    pub masking: f64,
    pub swamping: f64,
    pub joint_detection: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub methods: Vec<MethodReport>,
    /// `records[rep][k]` for method `methods[k]`; `None` for failed replications.
    pub records: Vec<Vec<Option<Metrics>>>,
}

/// Trimmed mean dropping `floor(0.1·N)` values from each end.
pub fn trimmed_mean(values: &[f64], trim: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (trim * v.len() as f64).floor() as usize;
    let kept = &v[k..v.len() - k];
    kept.iter().sum::<f64>() / kept.len() as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn summarize(values: &[f64]) -> Summary {
    Summary { trimmed_mean: trimmed_mean(values, 0.1), sd: sample_sd(values) }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn run_replication(cfg: &SimConfig, methods: &[Method], rep: usize) -> Vec<Option<Metrics>> {
    let instance = match generate_instance(cfg, rep) {
        Ok(inst) => inst,
        Err(e) => {
            log::warn!("replication {rep}: generation failed: {e}");
            return vec![None; methods.len()];
        }
    };
    methods
        .iter()
        .map(|&method| {
            let result = fit_method(method, &instance, cfg)
                .and_then(|est| evaluate(&est.b_hat, &est.c_hat, &instance, &instance.leverage_rows));
            match result {
                Ok(metrics) => Some(metrics),
                Err(e) => {
                    log::warn!("replication {rep}, {}: {e}", method.name());
                    None
                }
            }
        })
        .collect()
}

/// Runs all replications in parallel and aggregates in replication order.
pub fn run_study(cfg: &SimConfig, methods: &[Method]) -> Result<SimReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(R4Error::invalid("no methods selected"));
    }
    let records: Vec<Vec<Option<Metrics>>> =
        (0..cfg.replications).into_par_iter().map(|rep| run_replication(cfg, methods, rep)).collect();
    let reports = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let ok: Vec<Metrics> = records.iter().filter_map(|r| r[k]).collect();
            let col = |f: fn(&Metrics) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
            MethodReport {
                method,
                err_b: summarize(&col(|m| m.err_b)),
                err_b_weighted: summarize(&col(|m| m.err_b_weighted)),
                err_bc: summarize(&col(|m| m.err_bc)),
                avg_rank: mean(ok.iter().map(|m| m.rank as f64)),
                masking: mean(ok.iter().map(|m| m.masking)),
                swamping: mean(ok.iter().map(|m| m.swamping)),
                joint_detection: mean(ok.iter().map(|m| if m.joint_detection { 1.0 } else { 0.0 })),
                successes: ok.len(),
                failures: records.len() - ok.len(),
            }
        })
        .collect();
    Ok(SimReport { config: cfg.clone(), methods: reports, records })
}

impl SimReport {
    /// One row per method; errors as trimmed mean and standard deviation, rates as fractions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,err_b,err_b_sd,err_b_weighted,err_b_weighted_sd,err_bc,err_bc_sd,rank,mask,swamp,detection,successes,failures\n",
        );
        let f = crate::io::format_float;
        for r in &self.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method.name(),
                f(r.err_b.trimmed_mean),
                f(r.err_b.sd),
                f(r.err_b_weighted.trimmed_mean),
                f(r.err_b_weighted.sd),
                f(r.err_bc.trimmed_mean),
                f(r.err_bc.sd),
                f(r.avg_rank),
                f(r.masking),
                f(r.swamping),
                f(r.joint_detection),
                r.successes,
                r.failures
            );
        }
        out
    }

    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == method)
    }
}

/// Fitted-value norms under single-entry contamination `Y + M·eᵢe₁ᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub magnitudes: Vec<f64>,
    /// Contaminated observation (largest leverage).
    pub row: usize,
    pub rrr_norms: Vec<f64>,
    pub r4_norms: Vec<f64>,
}

/// Threshold used by [`breakdown_sweep`] when none is given: three times the
/// median residual row norm of the clean rank-`r` fit.
pub fn default_breakdown_lambda(data: &RegressionData, r: usize) -> Result<f64> {
    let fit = rrr_fit(data, r)?;
    let mut norms = row_norms(&(&data.y - &fit.fitted));
    norms.sort_by(f64::total_cmp);
    Ok(3.0 * norms[norms.len() / 2])
}

/// Corrupts entry `(i, 0)` of `Y`, `i` the largest-leverage row, by each
/// magnitude and records `‖XB̂‖_F` for the rank-`r` plain fit and for
/// hard-thresholded R4 at level `lambda` (multistart as in `opts`).
pub fn breakdown_sweep(
    data: &RegressionData,
    magnitudes: &[f64],
    r: usize,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<BreakdownTable> {
    if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) || magnitudes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(R4Error::invalid("magnitudes must be finite, nonnegative and increasing"));
    }
    let leverages = LeastSquares::new(&data.x)?.leverages();
    let row = (0..leverages.len()).fold(0, |best, i| if leverages[i] > leverages[best] { i } else { best });
    let rule = ThresholdRule::new(RuleKind::Hard, lambda)?;
    let mut rrr_norms = Vec::with_capacity(magnitudes.len());
    let mut r4_norms = Vec::with_capacity(magnitudes.len());
    for &mag in magnitudes {
        let mut y = data.y.clone();
        y[(row, 0)] += mag;
        let corrupted = RegressionData::new(data.x.clone(), y, data.gamma.clone())?;
        let plain = rrr_fit(&corrupted, r)?;
        rrr_norms.push(plain.fitted.norm());
        let problem = R4Problem::new(corrupted, r, OutlierSpec::PenalizedRowwise(rule))?;
        let fit = multistart_fit(&problem, opts)?;
        r4_norms.push((&data.x * &fit.b_hat).norm());
    }
    Ok(BreakdownTable { magnitudes: magnitudes.to_vec(), row, rrr_norms, r4_norms })
}

impl BreakdownTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("magnitude,rrr_fitted_norm,r4_fitted_norm\n");
        let f = crate::io::format_float;
        for k in 0..self.magnitudes.len() {
            let _ = writeln!(out, "{},{},{}", f(self.magnitudes[k]), f(self.rrr_norms[k]), f(self.r4_norms[k]));
        }
        out
    }
}

#[doc(hidden)]
pub fn _compound_symmetry_sqrt_for_tests(dim: usize) -> DenseMatrix {
    compound_symmetry_sqrt(dim, COMPOUND_RHO)
}
