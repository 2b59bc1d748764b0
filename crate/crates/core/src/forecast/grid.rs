use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_model, train_model, Activation, EvalReport, ForecastError, ForecastModel, HyperParams, PreparedData};
use crate::OutputFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Reduced,
    Full,
}

impl FromStr for GridMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reduced" => Ok(GridMode::Reduced),
            "full" => Ok(GridMode::Full),
            other => Err(format!("unknown grid mode `{other}` (expected reduced or full)")),
        }
    }
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridMode::Reduced => "reduced",
            GridMode::Full => "full",
        })
    }
}

/// Value lists whose Cartesian product is searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub units1: Vec<usize>,
    pub units2: Vec<usize>,
    pub act1: Vec<Activation>,
    pub act2: Vec<Activation>,
    pub dropout: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Grid {
    /// All 5·6·2·2·4·7 = 3360 combinations.
    pub fn full() -> Grid {
        use Activation::*;
        Grid {
            units1: vec![16, 32, 64, 128, 256],
            units2: vec![0, 16, 32, 64, 128, 256],
            act1: vec![Tanh, Relu],
            act2: vec![Tanh, Relu],
            dropout: vec![0.0, 0.04, 0.1, 0.15],
            epochs: vec![5, 10, 15, 25, 50, 75, 100],
        }
    }

    /// 24 combinations that bracket the selected configuration:
    /// units1 {64,128} × units2 {0,32} × act1 {tanh,relu} × dropout {0,0.04,0.15}, 50 epochs.
    pub fn reduced() -> Grid {
        use Activation::*;
        Grid {
            units1: vec![64, 128],
            units2: vec![0, 32],
            act1: vec![Tanh, Relu],
            act2: vec![Tanh],
            dropout: vec![0.0, 0.04, 0.15],
            epochs: vec![50],
        }
    }

    pub fn for_mode(mode: GridMode) -> Grid {
        match mode {
            GridMode::Reduced => Grid::reduced(),
            GridMode::Full => Grid::full(),
        }
    }

    pub fn len(&self) -> usize {
        self.units1.len() * self.units2.len() * self.act1.len() * self.act2.len() * self.dropout.len() * self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, with the remaining fields taken from `base` and
    /// seed `base.seed ^ index`.
    pub fn configs(&self, base: &HyperParams) -> Vec<HyperParams> {
        let mut out = Vec::with_capacity(self.len());
        for &units1 in &self.units1 {
            for &units2 in &self.units2 {
                for &act1 in &self.act1 {
                    for &act2 in &self.act2 {
                        for &dropout in &self.dropout {
                            for &epochs in &self.epochs {
                                let seed = base.seed ^ out.len() as u64;
                                out.push(HyperParams { units1, units2, act1, act2, dropout, epochs, seed, ..base.clone() });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// 1-based; `None` when training failed.
    pub rank: Option<usize>,
    /// Position in the configuration list.
    pub index: usize,
    pub hyperparams: HyperParams,
    pub n_params: usize,
    pub test_rmse: Option<f64>,
    pub overall_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: ForecastModel,
    pub best_report: EvalReport,
    /// Ranked successes followed by failures in configuration order.
    pub leaderboard: Vec<LeaderboardEntry>,
}

impl GridOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &LeaderboardEntry> {
        self.leaderboard.iter().filter(|e| e.error.is_some())
    }

    pub fn write_leaderboard<W: Write>(&self, mut w: W, format: OutputFormat) -> std::io::Result<()> {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, &self.leaderboard)?;
                writeln!(w)
            }
            OutputFormat::Csv => {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record([
                    "rank", "index", "units1", "units2", "act1", "act2", "dropout", "epochs", "seed", "n_params", "test_rmse",
                    "overall_accuracy", "error",
                ])?;
                for e in &self.leaderboard {
                    let h = &e.hyperparams;
                    csv.serialize((
                        e.rank,
                        e.index,
                        h.units1,
                        h.units2,
                        h.act1,
                        h.act2,
                        h.dropout,
                        h.epochs,
                        h.seed,
                        e.n_params,
                        e.test_rmse,
                        e.overall_accuracy,
                        e.error.as_deref().unwrap_or(""),
                    ))?;
                }
                csv.flush()
            }
        }
    }
}

fn n_params_of(hp: &HyperParams, input_width: usize) -> usize {
    let mut width = input_width;
    let mut n = 0;
    for (units, _) in hp.layer_units() {
        n += 4 * units * (width + units) + 4 * units;
        width = units;
    }
    n + 8 * width + 8
}

fn fit_and_score(data: &PreparedData, hp: &HyperParams) -> Result<(ForecastModel, EvalReport), ForecastError> {
    if hp.window_len != data.window_len {
        return Err(ForecastError::InvalidHyperParams(format!(
            "window_len {} differs from the prepared data's {}",
            hp.window_len, data.window_len
        )));
    }
    let model = train_model(&data.train, hp, data.normalizer.clone(), data.use_dow)?;
    let report = evaluate_model(&model, &data.train, &data.test)?;
    Ok((model, report))
}

/// Train and score every configuration in parallel; rank by normalised test
/// RMSE, then fewer parameters, then fewer epochs.
///
/// Failed configurations are kept in the leaderboard with their error. Only
/// scores are kept during the search; the winner is retrained afterwards,
/// which reproduces it exactly because training is deterministic.
pub fn grid_search_configs(data: &PreparedData, configs: &[HyperParams]) -> Result<GridOutcome, ForecastError> {
    if configs.is_empty() {
        return Err(ForecastError::InvalidHyperParams("empty grid".into()));
    }
    let width = data.train.first().and_then(|s| s.inputs.first()).map_or(0, Vec::len);
    let mut entries: Vec<LeaderboardEntry> = configs
        .par_iter()
        .enumerate()
        .map(|(index, hp)| {
            let result = fit_and_score(data, hp);
            let n_params = n_params_of(hp, width);
            match result {
                Ok((_, report)) => {
                    log::info!("config {index}: test rmse {:.5}", report.test_rmse_normalized);
                    LeaderboardEntry {
                        rank: None,
                        index,
                        hyperparams: hp.clone(),
                        n_params,
                        test_rmse: Some(report.test_rmse_normalized),
                        overall_accuracy: Some(report.overall_accuracy),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("config {index} failed: {e}");
                    LeaderboardEntry {
                        rank: None,
                        index,
                        hyperparams: hp.clone(),
                        n_params,
                        test_rmse: None,
                        overall_accuracy: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    entries.sort_by(|a, b| match (a.test_rmse, b.test_rmse) {
        (Some(x), Some(y)) => x
            .total_cmp(&y)
            .then(a.n_params.cmp(&b.n_params))
            .then(a.hyperparams.epochs.cmp(&b.hyperparams.epochs))
            .then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    let mut rank = 0;
    for e in entries.iter_mut().filter(|e| e.error.is_none()) {
        rank += 1;
        e.rank = Some(rank);
    }
    let winner = entries.first().filter(|e| e.error.is_none()).ok_or(ForecastError::AllConfigsFailed)?;
    let (best, best_report) = fit_and_score(data, &configs[winner.index])?;
    Ok(GridOutcome { best, best_report, leaderboard: entries })
}

/// Search `grid` with the non-grid settings (window, learning rate, batch size, seed) of `base`.
pub fn grid_search(data: &PreparedData, grid: &Grid, base: &HyperParams) -> Result<GridOutcome, ForecastError> {
    grid_search_configs(data, &grid.configs(base))
}
