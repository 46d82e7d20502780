//! CSV ingestion, lag designs, forecast error summaries and result writers.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{R4Error, Result};
use crate::linalg::DenseMatrix;
use crate::rrr::RegressionData;
use crate::solver::FitResult;
use crate::tuning::{PathCell, PathResult};

fn io_err(path: &Path, source: std::io::Error) -> R4Error {
    R4Error::Io { path: path.to_path_buf(), source }
}

/// Reads a CSV file of finite decimal numbers into a matrix.
///
/// A single header row is skipped when some field of the first row does not
/// parse as a number. Rows must all have the same number of fields.
pub fn load_csv_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    parse_csv_matrix(file, path)
}

/// Parses CSV content; `path` is only used in error messages.
pub fn parse_csv_matrix<R: Read>(reader: R, path: &Path) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: usize, column: usize, message: String| R4Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };

    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => R4Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => parse_err(line, 0, e.to_string()),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if idx == 0 && parsed.iter().any(|v| v.is_err()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(line, record.len().min(w) + 1, format!("expected {w} fields, found {}", record.len())));
            }
            Some(_) => {}
        }
        for (col, (field, value)) in record.iter().zip(parsed).enumerate() {
            let v = value.map_err(|_| parse_err(line, col + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(R4Error::invalid(format!(
                    "{}: row {line}, column {}: non-finite value {field:?}",
                    path.display(),
                    col + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(R4Error::invalid(format!("{}: no numeric rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(a: &DenseMatrix) -> String {
    let mut out = String::new();
    for row in a.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn write_csv_matrix(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    write_text(path.as_ref(), &matrix_to_csv(a))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| R4Error::Numerical(format!("serializing {}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Regression pairs `y_t = B y_{t−lag} + e_t` from a `T × m` series:
/// `X` holds rows `0..T−lag`, `Y` rows `lag..T`.
pub fn build_var_design(series: &DenseMatrix, lag: usize) -> Result<RegressionData> {
    let t = series.nrows();
    if lag == 0 {
        return Err(R4Error::invalid("lag must be at least 1"));
    }
    if t <= lag {
        return Err(R4Error::invalid(format!("series has {t} rows, needs more than lag = {lag}")));
    }
    let x = series.rows(0, t - lag).into_owned();
    let y = series.rows(lag, t - lag).into_owned();
    RegressionData::new(x, y, None)
}

/// Splits regression rows into the first `split` (training) and the rest.
pub fn split_rows(data: &RegressionData, split: usize) -> Result<(RegressionData, RegressionData)> {
    let n = data.n();
    if split == 0 || split >= n {
        return Err(R4Error::invalid(format!("split index {split} must lie in [1, {})", n)));
    }
    let train = RegressionData::new(data.x.rows(0, split).into_owned(), data.y.rows(0, split).into_owned(), data.gamma.clone())?;
    let test = RegressionData::new(
        data.x.rows(split, n - split).into_owned(),
        data.y.rows(split, n - split).into_owned(),
        data.gamma.clone(),
    )?;
    Ok((train, test))
}

/// Mean of per-entry squared errors after discarding the largest
/// `floor(trim·N)` of them.
pub fn trimmed_mse(pred: &DenseMatrix, actual: &DenseMatrix, trim_fraction: f64) -> Result<f64> {
    if pred.shape() != actual.shape() {
        return Err(R4Error::invalid(format!("shape mismatch {:?} vs {:?}", pred.shape(), actual.shape())));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(R4Error::invalid("trim fraction must lie in [0, 0.5)"));
    }
    if pred.is_empty() {
        return Err(R4Error::invalid("no entries"));
    }
    let mut errors: Vec<f64> = pred.iter().zip(actual.iter()).map(|(p, a)| (p - a).powi(2)).collect();
    errors.sort_by(f64::total_cmp);
    let keep = errors.len() - (trim_fraction * errors.len() as f64).floor() as usize;
    Ok(errors[..keep].iter().sum::<f64>() / keep as f64)
}

fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    rank: usize,
    lambda: Option<f64>,
    rho_count: Option<usize>,
    objective: f64,
    objective_trace: &'a [f64],
    iterations: usize,
    converged: bool,
    outlier_rows: &'a [usize],
    pic: Option<f64>,
    warnings: &'a [String],
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

/// Writes `B_hat.csv`, `C_hat.csv`, `outliers.csv` and `fit.json` into `out_dir`.
/// `extra` entries are merged into `fit.json`.
pub fn write_fit(
    out_dir: impl AsRef<Path>,
    fit: &FitResult,
    pic: Option<f64>,
    extra: serde_json::Map<String, serde_json::Value>,
    with_timestamp: bool,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    ensure_dir(dir)?;
    let b_path = dir.join("B_hat.csv");
    let c_path = dir.join("C_hat.csv");
    let o_path = dir.join("outliers.csv");
    let j_path = dir.join("fit.json");
    write_csv_matrix(&b_path, &fit.b_hat)?;
    write_csv_matrix(&c_path, &fit.c_hat)?;
    let norms = fit.outlier_norms();
    let mut outliers = String::from("row,norm\n");
    for &i in &fit.outlier_rows {
        outliers.push_str(&format!("{i},{}\n", format_float(norms[i])));
    }
    write_text(&o_path, &outliers)?;
    let summary = FitSummary {
        rank: fit.rank,
        lambda: fit.lambda,
        rho_count: fit.rho_count,
        objective: fit.objective,
        objective_trace: &fit.objective_trace,
        iterations: fit.iterations,
        converged: fit.converged,
        outlier_rows: &fit.outlier_rows,
        pic: pic.filter(|v| v.is_finite()),
        warnings: &fit.warnings,
        extra,
        timestamp: with_timestamp.then(timestamp),
    };
    write_json(&j_path, &summary)?;
    Ok(vec![b_path, c_path, o_path, j_path])
}

#[derive(Debug, Serialize)]
struct PathSummary<'a> {
    kind: crate::tuning::GridKind,
    ranks: &'a [usize],
    q: usize,
    grids: &'a [Vec<f64>],
    selected: Option<&'a PathCell>,
    cells: Vec<CellSummary>,
    detection_grid: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

#[derive(Debug, Serialize)]
struct CellSummary {
    rank: usize,
    grid_index: usize,
    grid_value: f64,
    pic: Option<f64>,
    admissible: bool,
    numerical_rank: usize,
    outlier_count: usize,
    objective: Option<f64>,
    iterations: usize,
    converged: bool,
    error: Option<String>,
}

/// Writes `path.json`, `detection_path.csv` (n × valid grid points at the
/// selected rank) and the selected fit's files into `out_dir`.
pub fn write_path(out_dir: impl AsRef<Path>, path: &PathResult, with_timestamp: bool) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let cells = path
        .cells
        .iter()
        .map(|c| CellSummary {
            rank: c.rank,
            grid_index: c.grid_index,
            grid_value: c.grid_value,
            pic: c.pic.is_finite().then_some(c.pic),
            admissible: c.admissible,
            numerical_rank: c.numerical_rank,
            outlier_count: c.outlier_count,
            objective: c.objective.is_finite().then_some(c.objective),
            iterations: c.iterations,
            converged: c.converged,
            error: c.error.clone(),
        })
        .collect();
    let summary = PathSummary {
        kind: path.kind,
        ranks: &path.ranks,
        q: path.q,
        grids: &path.grids,
        selected: path.selected_cell(),
        cells,
        detection_grid: &path.detection_grid,
        timestamp: with_timestamp.then(timestamp),
    };
    let j_path = dir.join("path.json");
    write_json(&j_path, &summary)?;
    written.push(j_path);
    let d_path = dir.join("detection_path.csv");
    write_csv_matrix(&d_path, &path.detection_path)?;
    written.push(d_path);
    if let (Some(fit), Some(cell)) = (&path.selected_fit, path.selected_cell()) {
        written.extend(write_fit(dir, fit, Some(cell.pic), serde_json::Map::new(), with_timestamp)?);
    }
    Ok(written)
}
