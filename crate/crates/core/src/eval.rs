//! Metrics, classical baselines, and the seeds × sampling-rates experiment grid.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_by_bs, BsRecord, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{
    fit_variant, FeatureEncoding, FitConfig, PreparedSample, TargetMode, VariantTag,
};

fn masked_pairs<'a>(
    y: &'a [f64],
    yhat: &'a [f64],
    mask: &'a [bool],
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if y.len() != yhat.len() {
        return Err(Error::Shape {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if mask.len() != y.len() {
        return Err(Error::Shape {
            expected: y.len(),
            got: mask.len(),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("mask selects no entries"));
    }
    Ok(y.iter()
        .zip(yhat)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (*a, *b)))
}

/// Mean absolute error over masked-in entries, in dB.
pub fn mae(y: &[f64], yhat: &[f64], mask: &[bool]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in masked_pairs(y, yhat, mask)? {
        sum += (a - b).abs();
        n += 1;
    }
    Ok(sum / n as f64)
}

/// Mean absolute percentage error over masked-in entries.
pub fn mape(y: &[f64], yhat: &[f64], mask: &[bool]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in masked_pairs(y, yhat, mask)? {
        if a == 0.0 {
            return Err(Error::invalid("MAPE undefined for zero ground truth"));
        }
        sum += ((b - a) / a).abs();
        n += 1;
    }
    Ok(100.0 * sum / n as f64)
}

/// Brute-force k-nearest-neighbor regressor.
#[derive(Debug, Clone)]
pub struct Knn {
    features: Array2<f64>,
    targets: Array2<f64>,
}

impl Knn {
    pub fn new(features: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("KNN needs training points"));
        }
        if features.nrows() != targets.nrows() {
            return Err(Error::Shape {
                expected: features.nrows(),
                got: targets.nrows(),
            });
        }
        Ok(Knn { features, targets })
    }

    /// Indices of the `k` nearest training rows; equal distances resolve to
    /// the earlier row.
    pub fn neighbors(&self, query: ArrayView1<f64>, k: usize) -> Result<Vec<usize>> {
        if query.len() != self.features.ncols() {
            return Err(Error::Shape {
                expected: self.features.ncols(),
                got: query.len(),
            });
        }
        if k == 0 || k > self.features.nrows() {
            return Err(Error::invalid(format!(
                "k = {k} outside 1..={}",
                self.features.nrows()
            )));
        }
        let mut keyed: Vec<(f64, usize)> = self
            .features
            .outer_iter()
            .enumerate()
            .map(|(i, row)| {
                let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < keyed.len() {
            keyed.select_nth_unstable_by(k - 1, cmp);
            keyed.truncate(k);
        }
        keyed.sort_unstable_by(cmp);
        Ok(keyed.into_iter().map(|(_, i)| i).collect())
    }

    pub fn predict(&self, query: ArrayView1<f64>, k: usize) -> Result<Array1<f64>> {
        let idx = self.neighbors(query, k)?;
        let mut out = Array1::zeros(self.targets.ncols());
        for i in &idx {
            out += &self.targets.row(*i);
        }
        Ok(out / k as f64)
    }
}

/// Linear model with one coefficient column per output.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    /// `(features, outputs)`.
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
}

pub const LASSO_TOL: f64 = 1e-6;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    rho.signum() * (rho.abs() - lambda).max(0.0)
}

/// Coordinate descent on `(1/2n)·‖y − Xw − b‖² + λ‖w‖₁`, independently per
/// output column. Stops when no coefficient moves more than [`LASSO_TOL`].
pub fn lasso_fit(x: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<LassoModel> {
    let (n, p) = x.dim();
    if n == 0 || y.nrows() != n {
        return Err(Error::Shape {
            expected: n,
            got: y.nrows(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let nf = n as f64;
    let x_mean = x.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let xc = &x - &x_mean;
    let col_sq: Vec<f64> = xc.columns().into_iter().map(|c| c.dot(&c) / nf).collect();

    let mut coef = Array2::zeros((p, y.ncols()));
    let mut intercept = Array1::zeros(y.ncols());
    for out in 0..y.ncols() {
        let yc_mean = y.column(out).mean().expect("nonempty");
        let mut resid: Array1<f64> = y.column(out).mapv(|v| v - yc_mean);
        let mut w = vec![0.0; p];
        let mut converged = false;
        for _ in 0..LASSO_MAX_SWEEPS {
            let mut max_delta: f64 = 0.0;
            for j in 0..p {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let col = xc.column(j);
                let rho = col.dot(&resid) / nf + col_sq[j] * w[j];
                let new = soft_threshold(rho, lambda) / col_sq[j];
                let delta = new - w[j];
                if delta != 0.0 {
                    resid.scaled_add(-delta, &col);
                    w[j] = new;
                }
                max_delta = max_delta.max(delta.abs());
            }
            if max_delta < LASSO_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(LASSO_MAX_SWEEPS));
        }
        let w = Array1::from(w);
        intercept[out] = yc_mean - x_mean.dot(&w);
        coef.column_mut(out).assign(&w);
    }
    Ok(LassoModel { coef, intercept })
}

pub fn lasso_predict(model: &LassoModel, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.len() != model.coef.nrows() {
        return Err(Error::Shape {
            expected: model.coef.nrows(),
            got: x.len(),
        });
    }
    Ok(x.dot(&model.coef) + &model.intercept)
}

/// Something evaluated in a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Net(VariantTag),
    Knn,
    Lasso,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Net(v) => write!(f, "{v}"),
            Method::Knn => f.write_str("knn"),
            Method::Lasso => f.write_str("lasso"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(Method::Knn),
            "lasso" => Ok(Method::Lasso),
            other => other.parse().map(Method::Net),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub methods: Vec<Method>,
    pub sampling_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub fit: FitConfig,
    pub knn_k: usize,
    pub lasso_lambda: f64,
    pub m_beams: usize,
    /// Worker threads; 1 runs cells in order on the calling thread.
    pub jobs: usize,
}

impl ExperimentGrid {
    pub fn new(
        methods: Vec<Method>,
        sampling_rates: Vec<f64>,
        seeds: Vec<u64>,
        m_beams: usize,
    ) -> Self {
        ExperimentGrid {
            methods,
            sampling_rates,
            seeds,
            fit: FitConfig::default(),
            knn_k: 50,
            lasso_lambda: 1.0,
            m_beams,
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.sampling_rates.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("grid lists must be nonempty"));
        }
        if let Some(r) = self
            .sampling_rates
            .iter()
            .find(|r| !(**r > 0.0 && **r < 0.9))
        {
            return Err(Error::invalid(format!(
                "sampling rate {r} outside (0, 0.9)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub rate: f64,
    pub seed: u64,
    pub mae_db: f64,
    pub mape_pct: f64,
    /// MAE of each output head (SS-RSRP first).
    pub head_mae_db: Vec<f64>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub rate: f64,
    pub n: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub mape_mean: f64,
    pub mape_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ResultTable {
    /// Per-(method, rate) means and population standard deviations over
    /// successful cells, in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(Method, f64)> = Vec::new();
        for r in &self.rows {
            if !keys
                .iter()
                .any(|(m, rate)| *m == r.method && *rate == r.rate)
            {
                keys.push((r.method, r.rate));
            }
        }
        keys.into_iter()
            .map(|(method, rate)| {
                let cells: Vec<_> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.rate == rate && r.ok())
                    .collect();
                let (mae_mean, mae_std) =
                    mean_std(&cells.iter().map(|r| r.mae_db).collect::<Vec<_>>());
                let (mape_mean, mape_std) =
                    mean_std(&cells.iter().map(|r| r.mape_pct).collect::<Vec<_>>());
                SummaryRow {
                    method,
                    rate,
                    n: cells.len(),
                    mae_mean,
                    mae_std,
                    mape_mean,
                    mape_std,
                }
            })
            .collect()
    }

    pub fn mean_mae(&self, method: Method, rate: f64) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.method == method && s.rate == rate && s.n > 0)
            .map(|s| s.mae_mean)
    }

    /// One row per cell. Runtimes go to a separate file so this output is
    /// reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let heads = self
            .rows
            .iter()
            .map(|r| r.head_mae_db.len())
            .max()
            .unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        let mut header: Vec<String> = ["method", "rate", "seed", "mae_db", "mape_pct"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.push("ss_mae_db".into());
        header.extend((1..heads).map(|m| format!("ssb{m}_mae_db")));
        header.push("error".into());
        w.write_record(&header).map_err(fmt)?;
        for r in &self.rows {
            let mut rec = vec![
                r.method.to_string(),
                r.rate.to_string(),
                r.seed.to_string(),
                r.mae_db.to_string(),
                r.mape_pct.to_string(),
            ];
            rec.extend(
                (0..heads).map(|m| r.head_mae_db.get(m).map_or(String::new(), f64::to_string)),
            );
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_timings<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["method", "rate", "seed", "runtime_s"])
            .map_err(fmt)?;
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.rate.to_string(),
                r.seed.to_string(),
                format!("{:.3}", r.runtime_s),
            ])
            .map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record([
            "method",
            "rate",
            "n",
            "mae_mean_db",
            "mae_std_db",
            "mape_mean_pct",
            "mape_std_pct",
        ])
        .map_err(fmt)?;
        for s in self.summary() {
            w.write_record([
                s.method.to_string(),
                s.rate.to_string(),
                s.n.to_string(),
                s.mae_mean.to_string(),
                s.mae_std.to_string(),
                s.mape_mean.to_string(),
                s.mape_std.to_string(),
            ])
            .map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Pooled MAE/MAPE plus per-head MAE of predictions against observed RSRP.
pub fn score(
    samples: &[&PreparedSample],
    predictions: &[Vec<f64>],
) -> Result<(f64, f64, Vec<f64>)> {
    let (mut y, mut yhat, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    let heads = samples.first().map_or(0, |s| s.rsrp.len());
    let mut head_err = vec![(0.0, 0usize); heads];
    for (s, p) in samples.iter().zip(predictions) {
        for m in 0..heads {
            y.push(s.rsrp[m]);
            yhat.push(p[m]);
            mask.push(s.observed[m]);
            if s.observed[m] {
                head_err[m].0 += (s.rsrp[m] - p[m]).abs();
                head_err[m].1 += 1;
            }
        }
    }
    let heads = head_err
        .into_iter()
        .map(|(sum, n)| if n > 0 { sum / n as f64 } else { f64::NAN })
        .collect();
    Ok((mae(&y, &yhat, &mask)?, mape(&y, &yhat, &mask)?, heads))
}

fn baseline_predictions(
    method: Method,
    grid: &ExperimentGrid,
    train: &[&PreparedSample],
    test: &[&PreparedSample],
) -> Result<Vec<Vec<f64>>> {
    use crate::model::Field;
    const FIELDS: [Field; 5] = [
        Field::DeltaH,
        Field::DeltaV,
        Field::Distance,
        Field::Frequency,
        Field::Static,
    ];
    let enc = FeatureEncoding::fit(
        train,
        grid.m_beams,
        grid.fit.exclude_aau,
        TargetMode::RelativeToTxPower,
    )?;
    let x_train = enc.encode(train, &FIELDS)?;
    let x_test = enc.encode(test, &FIELDS)?;
    // regress y = p − p_T in dB, filling unobserved entries with the column mean
    let (z, mask) = enc.encode_targets(train)?;
    let stds = enc.target_standardizers();
    let y_train = Array2::from_shape_fn(z.dim(), |(i, m)| {
        if mask[[i, m]] == 1.0 {
            stds[m].invert(z[[i, m]])
        } else {
            stds[m].mean
        }
    });
    let rows: Vec<Array1<f64>> = match method {
        Method::Knn => {
            let k = grid.knn_k.min(train.len());
            let knn = Knn::new(x_train, y_train)?;
            x_test
                .outer_iter()
                .map(|q| knn.predict(q, k))
                .collect::<Result<_>>()?
        }
        Method::Lasso => {
            let model = lasso_fit(x_train.view(), y_train.view(), grid.lasso_lambda)?;
            x_test
                .outer_iter()
                .map(|q| lasso_predict(&model, q))
                .collect::<Result<_>>()?
        }
        Method::Net(_) => unreachable!("networks are trained elsewhere"),
    };
    Ok(rows
        .into_iter()
        .zip(test)
        .map(|(r, s)| r.iter().map(|v| v + s.p_t).collect())
        .collect())
}

fn run_cell(
    grid: &ExperimentGrid,
    bss: &[BsRecord],
    samples: &[PreparedSample],
    method: Method,
    rate: f64,
    seed: u64,
) -> ResultRow {
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64, Vec<f64>)> {
        let split = split_by_bs(
            bss,
            SplitSpec {
                sampling_rate: rate,
                seed,
            },
        )?;
        let pick = |ids: &[String]| -> Vec<&PreparedSample> {
            let set: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
            samples
                .iter()
                .filter(|s| set.contains(s.bs_id.as_str()))
                .collect()
        };
        let (train, val, test) = (pick(&split.train), pick(&split.val), pick(&split.test));
        if train.is_empty() || val.is_empty() || test.is_empty() {
            return Err(Error::InvalidSplit("a split has no samples".into()));
        }
        let predictions = match method {
            Method::Net(tag) => {
                let mut cfg = grid.fit;
                cfg.train.seed = seed;
                let (model, _) = fit_variant(tag, grid.m_beams, &train, &val, &cfg)?;
                model.predict_prepared(&test)?
            }
            _ => baseline_predictions(method, grid, &train, &test)?,
        };
        score(&test, &predictions)
    })();
    let runtime_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((mae_db, mape_pct, head_mae_db)) => ResultRow {
            method,
            rate,
            seed,
            mae_db,
            mape_pct,
            head_mae_db,
            runtime_s,
            error: None,
        },
        Err(e) => {
            log::warn!("cell {method} rate {rate} seed {seed} failed: {e}");
            ResultRow {
                method,
                rate,
                seed,
                mae_db: f64::NAN,
                mape_pct: f64::NAN,
                head_mae_db: Vec::new(),
                runtime_s,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Evaluate every (method, rate, seed) cell on held-out test BSs. Rows come
/// back in method-major, then rate, then seed order regardless of `jobs`.
pub fn run_grid(
    grid: &ExperimentGrid,
    bss: &[BsRecord],
    samples: &[PreparedSample],
) -> Result<ResultTable> {
    grid.validate()?;
    let cells: Vec<(Method, f64, u64)> = grid
        .methods
        .iter()
        .flat_map(|&m| {
            grid.sampling_rates
                .iter()
                .flat_map(move |&r| grid.seeds.iter().map(move |&s| (m, r, s)))
        })
        .collect();
    let run = |&(m, r, s): &(Method, f64, u64)| {
        let row = run_cell(grid, bss, samples, m, r, s);
        log::info!(
            "{m} rate {r} seed {s}: MAE {:.3} dB ({:.1} s)",
            row.mae_db,
            row.runtime_s
        );
        row
    };
    let rows = if grid.jobs <= 1 {
        cells.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(grid.jobs)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };
    Ok(ResultTable { rows })
}

/// Histogram and summary statistics of absolute errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDistribution {
    /// Fraction of errors in `[k, k+1)` dB for k = 0..20, then `[20, ∞)`.
    pub bins: Vec<f64>,
    pub frac_below_5db: f64,
    pub frac_below_8db: f64,
    /// 25th, 50th, and 75th percentiles with linear interpolation.
    pub quartiles: [f64; 3],
}

pub const ERROR_BINS: usize = 21;

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn error_distribution(abs_errors: &[f64]) -> Result<ErrorDistribution> {
    if abs_errors.is_empty() {
        return Err(Error::invalid("no errors to summarize"));
    }
    let n = abs_errors.len() as f64;
    let mut bins = vec![0.0; ERROR_BINS];
    for &e in abs_errors {
        let k = if e >= 20.0 {
            ERROR_BINS - 1
        } else {
            e.max(0.0).floor() as usize
        };
        bins[k] += 1.0 / n;
    }
    let mut sorted = abs_errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorDistribution {
        bins,
        frac_below_5db: abs_errors.iter().filter(|e| **e < 5.0).count() as f64 / n,
        frac_below_8db: abs_errors.iter().filter(|e| **e < 8.0).count() as f64 / n,
        quartiles: [0.25, 0.5, 0.75].map(|q| quantile_sorted(&sorted, q)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mae_examples() {
        assert_eq!(
            mae(&[-80.0, -90.0], &[-80.0, -90.0], &[true, true]).unwrap(),
            0.0
        );
        assert_eq!(
            mae(&[-80.0, -90.0], &[-82.0, -86.0], &[true, true]).unwrap(),
            3.0
        );
        assert_eq!(
            mae(&[-80.0, -90.0], &[-82.0, -86.0], &[false, true]).unwrap(),
            4.0
        );
        assert!(matches!(
            mae(&[1.0], &[1.0], &[false]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[-100.0], &[-100.0], &[true]).unwrap(), 0.0);
        assert_eq!(mape(&[-100.0], &[-90.0], &[true]).unwrap(), 10.0);
        assert_eq!(
            mape(&[-100.0, -50.0], &[-110.0, -55.0], &[true, true]).unwrap(),
            10.0
        );
        assert!(mape(&[0.0], &[1.0], &[true]).is_err());
        // masked-out zeros are fine
        assert_eq!(
            mape(&[0.0, -10.0], &[1.0, -10.0], &[false, true]).unwrap(),
            0.0
        );
    }

    #[test]
    fn knn_examples() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [5.0, 5.0]];
        let y = array![[1.0], [2.0], [3.0], [10.0]];
        let knn = Knn::new(x.clone(), y).unwrap();
        assert_eq!(knn.predict(array![0.3, 0.1].view(), 4).unwrap()[0], 4.0);
        assert_eq!(knn.predict(x.row(2), 1).unwrap()[0], 3.0);
        // two rows tie at distance 1 from (0.5, 0): the earlier row wins
        assert_eq!(knn.neighbors(array![0.5, 0.0].view(), 1).unwrap(), vec![0]);
        assert!(Knn::new(Array2::zeros((0, 2)), Array2::zeros((0, 1))).is_err());
        assert!(knn.predict(array![0.0, 0.0].view(), 5).is_err());
    }

    #[test]
    fn knn_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_simple_fn((300, 4), || rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((300, 2), || rng.random_range(-1.0..1.0));
        let knn = Knn::new(x.clone(), y).unwrap();
        for _ in 0..200 {
            let q = Array1::from_shape_simple_fn(4, || rng.random_range(-1.0..1.0));
            let k = rng.random_range(1..=50);
            let mut all: Vec<(f64, usize)> = x
                .outer_iter()
                .enumerate()
                .map(|(i, r)| ((&r - &q).mapv(|v| v * v).sum(), i))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
            assert_eq!(knn.neighbors(q.view(), k).unwrap(), want);
        }
    }

    /// Solve the normal equations by Gaussian elimination with partial pivoting.
    fn ols(x: &Array2<f64>, y: &Array1<f64>) -> (Array1<f64>, f64) {
        let (n, p) = x.dim();
        let mut a = Array2::<f64>::zeros((p + 1, p + 2));
        let row = |i: usize, j: usize| if j == 0 { 1.0 } else { x[[i, j - 1]] };
        for r in 0..=p {
            for c in 0..=p {
                a[[r, c]] = (0..n).map(|i| row(i, r) * row(i, c)).sum();
            }
            a[[r, p + 1]] = (0..n).map(|i| row(i, r) * y[i]).sum();
        }
        for col in 0..=p {
            let piv = (col..=p)
                .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
                .unwrap();
            for c in 0..p + 2 {
                a.swap([col, c], [piv, c]);
            }
            for r in 0..=p {
                if r != col {
                    let f = a[[r, col]] / a[[col, col]];
                    for c in 0..p + 2 {
                        a[[r, c]] -= f * a[[col, c]];
                    }
                }
            }
        }
        let sol: Vec<f64> = (0..=p).map(|r| a[[r, p + 1]] / a[[r, r]]).collect();
        (Array1::from(sol[1..].to_vec()), sol[0])
    }

    #[test]
    fn lasso_without_penalty_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_simple_fn((80, 3), || rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(80, |i| {
            1.5 * x[[i, 0]] - 2.0 * x[[i, 1]] + 0.3 * x[[i, 2]] + 4.0 + rng.random_range(-0.1..0.1)
        });
        let model = lasso_fit(x.view(), y.view().insert_axis(ndarray::Axis(1)), 0.0).unwrap();
        let (w, b) = ols(&x, &y);
        for j in 0..3 {
            assert!(
                (model.coef[[j, 0]] - w[j]).abs() < 1e-6,
                "{} vs {}",
                model.coef[[j, 0]],
                w[j]
            );
        }
        assert!((model.intercept[0] - b).abs() < 1e-6);
    }

    #[test]
    fn heavy_penalty_zeroes_everything() {
        let x = array![[1.0, 2.0], [2.0, -1.0], [3.0, 0.5], [-1.0, 1.0]];
        let y = array![[3.0], [1.0], [4.0], [-2.0]];
        let m = lasso_fit(x.view(), y.view(), 1e6).unwrap();
        assert!(m.coef.iter().all(|c| *c == 0.0));
        assert_eq!(m.intercept[0], 1.5);
    }

    #[test]
    fn single_feature_soft_threshold() {
        let x = array![[1.0], [-1.0], [2.0], [-2.0]];
        let y = array![[2.0], [-1.0], [3.5], [-4.5]];
        let lambda = 0.4;
        let m = lasso_fit(x.view(), y.view(), lambda).unwrap();
        // x is centered; rho = mean(x·(y − ȳ)), z = mean(x²)
        let ybar = 0.0;
        let rho: f64 = [1.0, -1.0, 2.0, -2.0]
            .iter()
            .zip([2.0, -1.0, 3.5, -4.5])
            .map(|(a, b)| a * (b - ybar))
            .sum::<f64>()
            / 4.0;
        let z = 2.5;
        let want = rho.signum() * (rho.abs() - lambda).max(0.0) / z;
        assert!((m.coef[[0, 0]] - want).abs() < 1e-9);
    }

    #[test]
    fn error_distribution_examples() {
        let d = error_distribution(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.bins[0], 1.0);
        let d = error_distribution(&[1.0, 9.0]).unwrap();
        assert_eq!(d.frac_below_8db, 0.5);
        assert_eq!(d.frac_below_5db, 0.5);
        let d = error_distribution(&[25.0, 19.5]).unwrap();
        assert_eq!(d.bins[20], 0.5);
        assert_eq!(d.bins[19], 0.5);
        assert!(error_distribution(&[]).is_err());
    }

    #[test]
    fn quartiles_match_sorting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1usize, 2, 5, 17, 100] {
            let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..15.0)).collect();
            let d = error_distribution(&e).unwrap();
            let mut s = e.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (k, q) in [0.25, 0.5, 0.75].iter().enumerate() {
                // numpy-style linear interpolation between order statistics
                let h = (n - 1) as f64 * q;
                let want = s[h as usize]
                    + (h - h.floor()) * (s[(h as usize + 1).min(n - 1)] - s[h as usize]);
                assert!((d.quartiles[k] - want).abs() < 1e-12);
            }
            assert!((d.bins.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn method_names() {
        for s in ["proposed", "benchmark3", "wrong2", "knn", "lasso"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("forest".parse::<Method>().is_err());
    }

    #[test]
    fn grid_counts_and_reproducibility() {
        use crate::model::{prepare_all, Architecture};
        use crate::synth::{generate_dataset, SyntheticScenario};
        let s = SyntheticScenario::default();
        let (bss, samples) = generate_dataset(&s, 12, 15, 1).unwrap();
        let (prep, _) = prepare_all(&bss, &samples);
        let mut grid = ExperimentGrid::new(
            vec![
                Method::Net(VariantTag::Proposed),
                Method::Knn,
                Method::Lasso,
            ],
            vec![0.5],
            (0..3).collect(),
            8,
        );
        grid.fit.arch = Architecture {
            hidden_width: 8,
            subnet_layers: 1,
            single_layers: 1,
        };
        grid.fit.train.max_epochs = 2;
        let a = run_grid(&grid, &bss, &prep).unwrap();
        assert_eq!(a.rows.len(), 9);
        assert!(a.rows.iter().all(ResultRow::ok), "{:?}", a.rows);
        let b = run_grid(&grid, &bss, &prep).unwrap();
        let render = |t: &ResultTable| {
            let mut v = Vec::new();
            t.write_csv(&mut v).unwrap();
            v
        };
        assert_eq!(render(&a), render(&b));
        grid.jobs = 2;
        assert_eq!(render(&a), render(&run_grid(&grid, &bss, &prep).unwrap()));
        assert_eq!(a.summary().len(), 3);
    }

    #[test]
    fn failing_cells_are_recorded() {
        use crate::model::prepare_all;
        use crate::synth::{generate_dataset, SyntheticScenario};
        let (bss, samples) = generate_dataset(&SyntheticScenario::default(), 4, 5, 1).unwrap();
        let (prep, _) = prepare_all(&bss, &samples);
        // 5% of 4 BSs rounds to an empty training set
        let grid = ExperimentGrid::new(vec![Method::Knn], vec![0.05], vec![0], 8);
        let t = run_grid(&grid, &bss, &prep).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(!t.rows[0].ok());
    }
}
