use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ForecastError, ForecastModel, Sample, FEATURE_NAMES, N_FEATURES};
use crate::OutputFormat;

/// Root mean squared error of two equally long series.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64, ForecastError> {
    if predicted.len() != actual.len() {
        return Err(ForecastError::ShapeMismatch(format!("{} predictions for {} targets", predicted.len(), actual.len())));
    }
    if predicted.is_empty() {
        return Err(ForecastError::EmptyTest);
    }
    let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Fraction of actual values within `half_width` of the prediction (inclusive).
pub fn accuracy_within_band(predicted: &[f64], actual: &[f64], half_width: f64) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    let inside = predicted.iter().zip(actual).filter(|(p, a)| (*p - *a).abs() <= half_width).count();
    inside as f64 / actual.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEval {
    pub feature: String,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub accuracy: f64,
    /// Half-width of the band, in original units.
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub features: Vec<FeatureEval>,
    pub overall_accuracy: f64,
    /// RMSE over every test element on the normalised scale.
    pub test_rmse_normalized: f64,
}

impl EvalReport {
    pub fn test_rmse(&self) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| self.features[j].test_rmse)
    }

    pub fn write<W: Write>(&self, mut w: W, format: OutputFormat) -> std::io::Result<()> {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, self)?;
                writeln!(w)
            }
            OutputFormat::Csv => {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["feature", "train_rmse", "test_rmse", "accuracy", "band"])?;
                for f in &self.features {
                    csv.serialize((&f.feature, f.train_rmse, f.test_rmse, f.accuracy, f.band))?;
                }
                csv.serialize(("overall", "", "", self.overall_accuracy, ""))?;
                csv.flush()
            }
        }
    }
}

fn columns(rows: &[[f64; N_FEATURES]]) -> Vec<Vec<f64>> {
    (0..N_FEATURES).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Per-feature RMSE and band accuracy in original units.
///
/// The band half-width of a feature is twice the population standard
/// deviation of the model's training-set predictions, scaled back to original
/// units.
pub fn evaluate_model(model: &ForecastModel, train: &[Sample], test: &[Sample]) -> Result<EvalReport, ForecastError> {
    if test.is_empty() {
        return Err(ForecastError::EmptyTest);
    }
    if train.is_empty() {
        return Err(ForecastError::EmptyTrain);
    }
    let predict = |s: &[Sample]| s.iter().map(|x| model.predict_normalized(&x.inputs)).collect::<Result<Vec<_>, _>>();
    let train_pred = predict(train)?;
    let test_pred = predict(test)?;

    let norm = &model.normalizer;
    let denorm = |rows: &[[f64; N_FEATURES]]| columns(&rows.iter().map(|r| norm.denormalize(r)).collect::<Vec<_>>());
    let targets = |s: &[Sample]| s.iter().map(|x| x.target).collect::<Vec<_>>();

    let train_p = denorm(&train_pred);
    let train_t = denorm(&targets(train));
    let test_p = denorm(&test_pred);
    let test_t = denorm(&targets(test));
    let train_pred_cols = columns(&train_pred);

    let mut features = Vec::with_capacity(N_FEATURES);
    for j in 0..N_FEATURES {
        let col = &train_pred_cols[j];
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        let band = 2.0 * sd * norm.std[j];
        features.push(FeatureEval {
            feature: FEATURE_NAMES[j].to_string(),
            train_rmse: rmse(&train_p[j], &train_t[j])?,
            test_rmse: rmse(&test_p[j], &test_t[j])?,
            accuracy: accuracy_within_band(&test_p[j], &test_t[j], band),
            band,
        });
    }
    let overall_accuracy = features.iter().map(|f| f.accuracy).sum::<f64>() / N_FEATURES as f64;
    let flat_p: Vec<f64> = test_pred.iter().flatten().copied().collect();
    let flat_t: Vec<f64> = targets(test).iter().flatten().copied().collect();
    Ok(EvalReport { features, overall_accuracy, test_rmse_normalized: rmse(&flat_p, &flat_t)? })
}
