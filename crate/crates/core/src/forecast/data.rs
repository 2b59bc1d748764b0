use chrono::{Datelike, NaiveDate, Weekday};

use super::{fit_normalizer, ForecastError, Normalizer, DOW_WIDTH, N_FEATURES};
use crate::metrics::{moving_average, DailySummary, MetricsError};

/// One training example: `window_len` input rows and the next day's normalised features.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vec<f64>>,
    pub target: [f64; N_FEATURES],
}

/// Monday..Saturday one-hot; Sunday encodes as all zeros.
pub fn encode_day_of_week(date: NaiveDate) -> [f64; DOW_WIDTH] {
    let mut out = [0.0; DOW_WIDTH];
    if date.weekday() != Weekday::Sun {
        out[date.weekday().num_days_from_monday() as usize] = 1.0;
    }
    out
}

/// Number of leading rows used for training: the first 80%, rounded up so the
/// boundary day is trained on.
pub fn split_point(n: usize) -> usize {
    (4 * n).div_ceil(5)
}

/// Sliding windows: sample i reads rows i..i+L and predicts the first eight
/// columns of row i+L.
pub fn make_windows(rows: &[Vec<f64>], window_len: usize) -> Result<Vec<Sample>, ForecastError> {
    if window_len == 0 || rows.len() <= window_len {
        return Err(ForecastError::SeriesTooShort { len: rows.len(), window: window_len });
    }
    Ok((0..rows.len() - window_len)
        .map(|i| Sample { inputs: rows[i..i + window_len].to_vec(), target: target_of(&rows[i + window_len]) })
        .collect())
}

fn target_of(row: &[f64]) -> [f64; N_FEATURES] {
    std::array::from_fn(|j| row[j])
}

/// Dated feature rows in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<[f64; N_FEATURES]>,
}

impl FeatureSeries {
    /// Rows in date order; the caller selects the scope.
    pub fn from_summaries(summaries: &[DailySummary]) -> Self {
        let mut rows: Vec<&DailySummary> = summaries.iter().collect();
        rows.sort_by_key(|s| s.date);
        FeatureSeries {
            dates: rows.iter().map(|s| s.date).collect(),
            values: rows.iter().map(|s| s.features()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Each feature replaced by its trailing moving average.
    pub fn smoothed(&self, window: usize) -> Result<FeatureSeries, MetricsError> {
        let mut values = vec![[0.0; N_FEATURES]; self.len()];
        for j in 0..N_FEATURES {
            let column: Vec<f64> = self.values.iter().map(|r| r[j]).collect();
            for (row, v) in values.iter_mut().zip(moving_average(&column, window)?) {
                row[j] = v;
            }
        }
        Ok(FeatureSeries { dates: self.dates.clone(), values })
    }

    /// Normalised features, followed by the day-of-week one-hot when requested.
    pub fn input_rows(&self, normalizer: &Normalizer, use_dow: bool) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .zip(&self.dates)
            .map(|(v, d)| {
                let mut row = normalizer.normalize(v).to_vec();
                if use_dow {
                    row.extend(encode_day_of_week(*d));
                }
                row
            })
            .collect()
    }
}

/// A series split into normalised train and test samples.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub normalizer: Normalizer,
    pub train: Vec<Sample>,
    /// One sample per test day; inputs may reach back into the training range.
    pub test: Vec<Sample>,
    pub n_train_days: usize,
    pub window_len: usize,
    pub use_dow: bool,
}

/// Split at [`split_point`], fit the normaliser on the training days and window both parts.
pub fn prepare(series: &FeatureSeries, window_len: usize, use_dow: bool) -> Result<PreparedData, ForecastError> {
    let n = series.len();
    let n_train = split_point(n);
    if window_len == 0 || n_train <= window_len {
        return Err(ForecastError::SeriesTooShort { len: n, window: window_len });
    }
    if n_train == n {
        return Err(ForecastError::EmptyTest);
    }
    let normalizer = fit_normalizer(&series.values[..n_train])?;
    let rows = series.input_rows(&normalizer, use_dow);
    let train = make_windows(&rows[..n_train], window_len)?;
    let test = (n_train..n)
        .map(|t| Sample { inputs: rows[t - window_len..t].to_vec(), target: target_of(&rows[t]) })
        .collect();
    Ok(PreparedData { normalizer, train, test, n_train_days: n_train, window_len, use_dow })
}

/// Test RMSE per feature, in original units, of predicting each day by the day before.
pub fn persistence_rmse(series: &FeatureSeries) -> [f64; N_FEATURES] {
    let n = series.len();
    let start = split_point(n).max(1);
    let days = (n - start.min(n)) as f64;
    std::array::from_fn(|j| {
        if days == 0.0 {
            return 0.0;
        }
        let sse: f64 = (start..n).map(|t| (series.values[t][j] - series.values[t - 1][j]).powi(2)).sum();
        (sse / days).sqrt()
    })
}
