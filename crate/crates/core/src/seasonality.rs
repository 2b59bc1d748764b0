//! Periodograms of daily series and dominant-period detection.
//!
//! The periodogram is the raw squared DFT magnitude of the mean-removed
//! series, without tapering. A direct O(N²) transform is used; daily series
//! are at most a few thousand points long.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeasonalityError {
    #[error("series of length {0} is too short for a periodogram (need at least 4)")]
    SeriesTooShort(usize),
    #[error("series contains a non-finite value at index {0}")]
    NonFiniteInput(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodogramPoint {
    /// Cycles per day.
    pub frequency: f64,
    /// Days per cycle.
    pub period: f64,
    pub power: f64,
}

/// Power at frequencies k/N for k = 1..=N/2, with power |X_k|²/N.
pub fn periodogram(series: &[f64]) -> Result<Vec<PeriodogramPoint>, SeasonalityError> {
    let n = series.len();
    if n < 4 {
        return Err(SeasonalityError::SeriesTooShort(n));
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(SeasonalityError::NonFiniteInput(i));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    // cos/sin of 2πm/N for m in 0..N; k·t is reduced mod N to keep phases exact.
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|m| {
            let angle = TAU * m as f64 / n as f64;
            (angle.cos(), angle.sin())
        })
        .unzip();

    Ok((1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in centered.iter().enumerate() {
                let m = (k * t) % n;
                re += x * cos[m];
                im -= x * sin[m];
            }
            let frequency = k as f64 / n as f64;
            PeriodogramPoint { frequency, period: n as f64 / k as f64, power: (re * re + im * im) / n as f64 }
        })
        .collect())
}

/// Sum of power over all N DFT bins, reconstructed from the one-sided output.
/// Equals Σ(xᵢ − mean)² by Parseval's identity.
pub fn total_power(pg: &[PeriodogramPoint], n: usize) -> f64 {
    pg.iter()
        .enumerate()
        .map(|(i, p)| {
            let k = i + 1;
            if n.is_multiple_of(2) && k == n / 2 {
                p.power
            } else {
                2.0 * p.power
            }
        })
        .sum()
}

/// The `k` strongest bins, by descending power then ascending period.
pub fn detect_peaks(pg: &[PeriodogramPoint], k: usize) -> Vec<PeriodogramPoint> {
    let mut sorted = pg.to_vec();
    sorted.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.period.total_cmp(&b.period)));
    sorted.truncate(k);
    sorted
}
