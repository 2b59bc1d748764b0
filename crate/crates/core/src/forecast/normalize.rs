use serde::{Deserialize, Serialize};

use super::{ForecastError, N_FEATURES};

/// Per-feature z-score transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; N_FEATURES],
    /// Population standard deviation; a zero spread is stored as 1.
    pub std: [f64; N_FEATURES],
}

impl Normalizer {
    pub fn normalize(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }

    pub fn denormalize(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| z[j] * self.std[j] + self.mean[j])
    }
}

/// Fit means and population standard deviations on training rows only.
pub fn fit_normalizer(train: &[[f64; N_FEATURES]]) -> Result<Normalizer, ForecastError> {
    if train.is_empty() {
        return Err(ForecastError::EmptyTrain);
    }
    let n = train.len() as f64;
    let mean: [f64; N_FEATURES] = std::array::from_fn(|j| train.iter().map(|r| r[j]).sum::<f64>() / n);
    let std = std::array::from_fn(|j| {
        let var = train.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            sd
        } else {
            1.0
        }
    });
    Ok(Normalizer { mean, std })
}
