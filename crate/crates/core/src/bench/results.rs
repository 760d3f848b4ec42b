use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Result, ScoreError};
use crate::oracles::median;

/// Column layout of the results CSV, frozen for schema version 1.
pub const RESULT_COLUMNS: [&str; 10] = ["estimator", "scheme", "kernel", "d", "m", "param", "value", "seed", "error", "reason"];
pub const TIMING_COLUMNS: [&str; 8] = ["estimator", "d", "m", "param", "value", "seed", "fit_ms", "predict_ms"];
pub const BEST_COLUMNS: [&str; 10] = ["estimator", "scheme", "kernel", "d", "m", "param", "value", "median_error", "std_error", "seeds"];
pub const SLOPE_COLUMNS: [&str; 7] = ["estimator", "kernel", "d", "slope", "status", "strictly_decreasing", "medians"];

/// One fitted-and-evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub estimator: String,
    pub scheme: String,
    pub kernel: String,
    pub d: usize,
    pub m: usize,
    pub param: String,
    pub value: f64,
    pub seed: u64,
    /// Normalized squared error; NaN when the fit failed.
    pub error: f64,
    /// Failure reason or fit warning; empty otherwise.
    pub reason: String,
    /// Wall-clock milliseconds; written only to the timings file.
    pub fit_ms: f64,
    pub predict_ms: f64,
}

/// Shortest round-trip decimal; NaN as `NaN`.
fn num(v: f64) -> String {
    format!("{v}")
}

/// Results without timings, so identical configs give identical bytes.
pub fn write_results_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            r.scheme.clone(),
            r.kernel.clone(),
            r.d.to_string(),
            r.m.to_string(),
            r.param.clone(),
            num(r.value),
            r.seed.to_string(),
            num(r.error),
            r.reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMING_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            r.d.to_string(),
            r.m.to_string(),
            r.param.clone(),
            num(r.value),
            r.seed.to_string(),
            format!("{:.3}", r.fit_ms),
            format!("{:.3}", r.predict_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a results CSV; errors carry the line number.
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| ScoreError::input(format!("line 1: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != RESULT_COLUMNS {
        return Err(ScoreError::input(format!(
            "line 1: expected header {}, got {}",
            RESULT_COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ScoreError::input(format!("line {line}: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let parse_f = |k: usize| -> Result<f64> {
            field(k)
                .parse::<f64>()
                .map_err(|_| ScoreError::input(format!("line {line}: column {} is not a number: {:?}", RESULT_COLUMNS[k], field(k))))
        };
        let parse_u = |k: usize| -> Result<u64> {
            field(k)
                .parse::<u64>()
                .map_err(|_| ScoreError::input(format!("line {line}: column {} is not an integer: {:?}", RESULT_COLUMNS[k], field(k))))
        };
        rows.push(ResultRow {
            estimator: field(0).to_string(),
            scheme: field(1).to_string(),
            kernel: field(2).to_string(),
            d: parse_u(3)? as usize,
            m: parse_u(4)? as usize,
            param: field(5).to_string(),
            value: parse_f(6)?,
            seed: parse_u(7)?,
            error: parse_f(8)?,
            reason: field(9).to_string(),
            fit_ms: 0.0,
            predict_ms: 0.0,
        });
    }
    Ok(rows)
}

/// Best hyperparameter for one (estimator, d, M).
#[derive(Debug, Clone, PartialEq)]
pub struct BestRow {
    pub estimator: String,
    pub scheme: String,
    pub kernel: String,
    pub d: usize,
    pub m: usize,
    pub param: String,
    /// NaN when no grid point succeeded on every seed.
    pub value: f64,
    pub median_error: f64,
    pub std_error: f64,
    pub seeds: usize,
}

/// Per (estimator, d, M): the grid point with the smallest median error
/// over seeds. Points where any seed failed are not eligible. Output keeps
/// the first-appearance order of the input.
pub fn best_hyperparameters(rows: &[ResultRow]) -> Vec<BestRow> {
    type Key = (String, usize, usize);
    let mut order: Vec<Key> = Vec::new();
    // key -> ordered (value -> errors)
    let mut groups: BTreeMap<Key, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    let mut meta: BTreeMap<Key, (String, String, String)> = BTreeMap::new();
    for r in rows {
        let key = (r.estimator.clone(), r.d, r.m);
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Vec::new()
        });
        meta.entry(key).or_insert_with(|| (r.scheme.clone(), r.kernel.clone(), r.param.clone()));
        match g.iter_mut().find(|(v, _)| v.to_bits() == r.value.to_bits()) {
            Some((_, errs)) => errs.push(r.error),
            None => g.push((r.value, vec![r.error])),
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (scheme, kernel, param) = meta[&key].clone();
            let mut best: Option<(f64, f64, f64, usize)> = None;
            for (value, errs) in &groups[&key] {
                if errs.iter().any(|e| !e.is_finite()) {
                    continue;
                }
                let med = median(errs);
                if best.map_or(true, |b| med < b.1) {
                    best = Some((*value, med, std_dev(errs), errs.len()));
                }
            }
            let (value, median_error, std_error, seeds) = best.unwrap_or((f64::NAN, f64::NAN, f64::NAN, 0));
            BestRow { estimator: key.0, scheme, kernel, d: key.1, m: key.2, param, value, median_error, std_error, seeds }
        })
        .collect()
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn write_best_csv<W: Write>(out: W, rows: &[BestRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BEST_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            r.scheme.clone(),
            r.kernel.clone(),
            r.d.to_string(),
            r.m.to_string(),
            r.param.clone(),
            num(r.value),
            num(r.median_error),
            num(r.std_error),
            r.seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeStatus {
    /// Least-squares slope over all sample sizes.
    Fitted,
    /// Every median error is zero: nothing to fit.
    ExactFit,
    /// Fewer than two usable sample sizes (failed or mixed zero errors).
    Insufficient,
}

impl SlopeStatus {
    pub fn name(self) -> &'static str {
        match self {
            SlopeStatus::Fitted => "fitted",
            SlopeStatus::ExactFit => "exact_fit",
            SlopeStatus::Insufficient => "insufficient",
        }
    }
}

/// Log-log convergence fit for one (estimator, d).
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub estimator: String,
    pub kernel: String,
    pub d: usize,
    /// NaN unless `status` is `Fitted`.
    pub slope: f64,
    pub status: SlopeStatus,
    /// Median errors strictly decrease with M.
    pub strictly_decreasing: bool,
    /// `(M, best median error)` in increasing M.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares slope of `ln(median error)` against `ln M`, per
/// (estimator, d), from best-per-M rows.
pub fn convergence_slopes(best: &[BestRow]) -> Vec<SlopeFit> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize), (String, Vec<(usize, f64)>)> = BTreeMap::new();
    for b in best {
        let key = (b.estimator.clone(), b.d);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key.clone());
                (b.kernel.clone(), Vec::new())
            })
            .1
            .push((b.m, b.median_error));
    }
    order
        .into_iter()
        .map(|key| {
            let (kernel, mut points) = groups.remove(&key).expect("grouped");
            points.sort_by_key(|p| p.0);
            let strictly_decreasing = points.iter().all(|p| p.1.is_finite())
                && points.windows(2).all(|w| w[1].1 < w[0].1);
            let (slope, status) = if points.iter().all(|p| p.1 == 0.0) {
                (f64::NAN, SlopeStatus::ExactFit)
            } else if points.len() >= 2 && points.iter().all(|p| p.1.is_finite() && p.1 > 0.0) {
                let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
                let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
                (least_squares_slope(&xs, &ys), SlopeStatus::Fitted)
            } else {
                (f64::NAN, SlopeStatus::Insufficient)
            };
            SlopeFit { estimator: key.0, kernel, d: key.1, slope, status, strictly_decreasing, points }
        })
        .collect()
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_slopes_csv<W: Write>(out: W, fits: &[SlopeFit]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SLOPE_COLUMNS)?;
    for f in fits {
        let medians = f.points.iter().map(|(m, e)| format!("{m}:{e}")).collect::<Vec<_>>().join(" ");
        w.write_record([
            f.estimator.clone(),
            f.kernel.clone(),
            f.d.to_string(),
            num(f.slope),
            f.status.name().to_string(),
            f.strictly_decreasing.to_string(),
            medians,
        ])?;
    }
    w.flush()?;
    Ok(())
}
