//! Next-day forecasting of the eight daily cache features with an LSTM.
//!
//! Pipeline: daily summaries → feature rows → z-score normalisation (fitted
//! on the training range) → optional day-of-week one-hot → sliding windows →
//! LSTM (one or two layers) with a dense head, trained by backpropagation
//! through time on an RMSE loss with Adam.

mod data;
mod eval;
mod grid;
mod lstm;
mod normalize;
mod snapshot;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{
    encode_day_of_week, make_windows, persistence_rmse, prepare, split_point, FeatureSeries, PreparedData, Sample,
};
pub use eval::{accuracy_within_band, evaluate_model, rmse, EvalReport, FeatureEval};
pub use grid::{grid_search, grid_search_configs, Grid, GridMode, GridOutcome, LeaderboardEntry};
pub use lstm::{lstm_forward, Network, GATES};
pub use normalize::{fit_normalizer, Normalizer};
pub use snapshot::{ModelSnapshot, Tensor, SNAPSHOT_FORMAT_VERSION};
pub use train::{gradient_check, loss_and_gradient, train_model};

/// Number of forecast features per day.
pub const N_FEATURES: usize = 8;
/// Width of the day-of-week one-hot (Monday..Saturday; Sunday is all zeros).
pub const DOW_WIDTH: usize = 6;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "access_count",
    "access_size",
    "hit_count",
    "hit_size",
    "miss_count",
    "miss_size",
    "reuse_count",
    "reuse_size",
];

/// Indices of the count-valued features.
pub const COUNT_FEATURES: [usize; 4] = [0, 2, 4, 6];

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("test set is empty")]
    EmptyTest,
    #[error("series of {len} rows is too short for window length {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no training samples")]
    NoSamples,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
    #[error("every grid configuration failed")]
    AllConfigsFailed,
    #[error("model snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation `{other}` (expected tanh or relu)")),
        }
    }
}

/// Model shape and training settings. `units2 == 0` means a single LSTM layer.
///
/// The activation of each layer is used for the candidate cell input and for
/// squashing the cell state into the hidden output; gates are always sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub units1: usize,
    pub units2: usize,
    pub act1: Activation,
    pub act2: Activation,
    pub dropout: f64,
    pub epochs: usize,
    pub window_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    /// The selected daily configuration: 128 units, tanh, dropout 0.04, 50 epochs.
    fn default() -> Self {
        HyperParams {
            units1: 128,
            units2: 0,
            act1: Activation::Tanh,
            act2: Activation::Tanh,
            dropout: 0.04,
            epochs: 50,
            window_len: 7,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// The selected configuration for moving-average smoothed data: no dropout, 100 epochs.
    pub fn moving_average_default() -> Self {
        HyperParams { dropout: 0.0, epochs: 100, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidHyperParams(m.to_string()));
        if self.units1 == 0 {
            return bad("units1 must be positive");
        }
        if self.window_len == 0 {
            return bad("window_len must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        Ok(())
    }

    pub fn layer_units(&self) -> Vec<(usize, Activation)> {
        let mut v = vec![(self.units1, self.act1)];
        if self.units2 > 0 {
            v.push((self.units2, self.act2));
        }
        v
    }
}

/// A trained network with everything needed to forecast in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub hyperparams: HyperParams,
    pub use_dow: bool,
    pub normalizer: Normalizer,
    pub network: Network,
    /// Mean minibatch loss per epoch.
    pub loss_history: Vec<f64>,
}

impl ForecastModel {
    pub fn input_width(&self) -> usize {
        self.network.input_width()
    }

    /// Normalised prediction for one window.
    pub fn predict_normalized(&self, window: &[Vec<f64>]) -> Result<[f64; N_FEATURES], ForecastError> {
        lstm_forward(self, window)
    }

    /// Next-day features in original units from the most recent days of `series`.
    pub fn forecast_next(&self, series: &FeatureSeries) -> Result<[f64; N_FEATURES], ForecastError> {
        let l = self.hyperparams.window_len;
        if series.len() < l {
            return Err(ForecastError::SeriesTooShort { len: series.len(), window: l });
        }
        let rows = series.input_rows(&self.normalizer, self.use_dow);
        let pred = self.predict_normalized(&rows[rows.len() - l..])?;
        Ok(self.normalizer.denormalize(&pred))
    }

    pub fn n_params(&self) -> usize {
        self.network.n_params()
    }
}
