//! Python bindings: records, the federation simulator, summaries and metrics,
//! seasonality, and training/forecasting with the LSTM model.
//!
//! Dates cross the boundary as ISO `YYYY-MM-DD` strings, and configs as JSON
//! text in the same schema the command line reads.

use cachescope::federation::{FederationConfig, Simulation as CoreSimulation};
use cachescope::forecast::{
    evaluate_model, prepare, train_model, FeatureSeries, ForecastModel as CoreModel, HyperParams, FEATURE_NAMES,
};
use cachescope::metrics::{self, DailySummary as CoreSummary, Period, Scope};
use cachescope::trace::{self, AccessRecord as CoreRecord, FileRequest, TraceFormat, WorkloadConfig};
use cachescope::seasonality;
use chrono::NaiveDate;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| value_err(format!("bad date `{s}`: {e}")))
}

#[pyclass(name = "AccessRecord", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyAccessRecord(CoreRecord);

#[pymethods]
impl PyAccessRecord {
    #[getter]
    fn ts_start(&self) -> i64 {
        self.0.ts_start
    }
    #[getter]
    fn ts_end(&self) -> i64 {
        self.0.ts_end
    }
    #[getter]
    fn user_id(&self) -> &str {
        &self.0.user_id
    }
    #[getter]
    fn file_id(&self) -> &str {
        &self.0.file_id
    }
    #[getter]
    fn file_path(&self) -> &str {
        &self.0.file_path
    }
    #[getter]
    fn file_size(&self) -> u64 {
        self.0.file_size
    }
    #[getter]
    fn transfer_size(&self) -> u64 {
        self.0.transfer_size
    }
    /// `"hit"` or `"miss"`.
    #[getter]
    fn kind(&self) -> String {
        self.0.kind.to_string()
    }
    #[getter]
    fn node_id(&self) -> &str {
        &self.0.node_id
    }
    #[getter]
    fn success(&self) -> bool {
        self.0.success
    }

    fn to_line(&self, format: &str) -> PyResult<String> {
        Ok(trace::serialize_record(&self.0, format.parse().map_err(value_err)?))
    }

    fn __repr__(&self) -> String {
        format!("AccessRecord({} {} {} on {})", self.0.ts_start, self.0.kind, self.0.file_id, self.0.node_id)
    }
}

#[pyfunction]
#[pyo3(signature = (line, format = "csv"))]
fn parse_record(line: &str, format: &str) -> PyResult<PyAccessRecord> {
    let format: TraceFormat = format.parse().map_err(value_err)?;
    trace::parse_record(line, format).map(PyAccessRecord).map_err(value_err)
}

#[pyclass(name = "DailySummary", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDailySummary(CoreSummary);

#[pymethods]
impl PyDailySummary {
    #[getter]
    fn date(&self) -> String {
        self.0.date.to_string()
    }
    #[getter]
    fn scope(&self) -> String {
        self.0.scope.to_string()
    }
    #[getter]
    fn access_count(&self) -> u64 {
        self.0.access_count
    }
    #[getter]
    fn access_size(&self) -> u64 {
        self.0.access_size
    }
    #[getter]
    fn hit_count(&self) -> u64 {
        self.0.hit_count
    }
    #[getter]
    fn hit_size(&self) -> u64 {
        self.0.hit_size
    }
    #[getter]
    fn miss_count(&self) -> u64 {
        self.0.miss_count
    }
    #[getter]
    fn miss_size(&self) -> u64 {
        self.0.miss_size
    }
    #[getter]
    fn reuse_count(&self) -> u64 {
        self.0.reuse_count
    }
    #[getter]
    fn reuse_size(&self) -> u64 {
        self.0.reuse_size
    }
    #[getter]
    fn unique_reused_files(&self) -> u64 {
        self.0.unique_reused_files
    }

    /// The eight forecast features in their fixed order.
    fn features(&self) -> Vec<f64> {
        self.0.features().to_vec()
    }

    fn net_traffic_reduction(&self) -> f64 {
        metrics::net_traffic_reduction(&self.0)
    }

    /// `inf` when there were hits but no misses, `nan` for an empty day.
    fn traffic_demand_reduction_rate(&self) -> f64 {
        metrics::traffic_demand_reduction_rate(&self.0).as_f64()
    }

    fn __repr__(&self) -> String {
        format!("DailySummary({} {} accesses={})", self.0.date, self.0.scope, self.0.access_count)
    }
}

fn summaries(items: &[PyRef<'_, PyDailySummary>]) -> Vec<CoreSummary> {
    items.iter().map(|s| s.0.clone()).collect()
}

fn records(items: &[PyRef<'_, PyAccessRecord>]) -> Vec<CoreRecord> {
    items.iter().map(|r| r.0.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (records, period = "day", scope = "ALL"))]
fn aggregate(records: Vec<PyRef<'_, PyAccessRecord>>, period: &str, scope: &str) -> PyResult<Vec<PyDailySummary>> {
    let period: Period = period.parse().map_err(value_err)?;
    let scope: Scope = scope.parse().expect("infallible");
    Ok(metrics::aggregate(&self::records(&records), period, &scope).into_iter().map(PyDailySummary).collect())
}

/// Same-day reuse over records that all fall on one UTC day.
#[pyfunction]
#[pyo3(signature = (records, scope = "ALL"))]
fn reuse_metrics(records: Vec<PyRef<'_, PyAccessRecord>>, scope: &str) -> PyResult<(u64, u64, u64, f64)> {
    let scope: Scope = scope.parse().expect("infallible");
    let s = metrics::reuse_metrics(&self::records(&records), &scope).map_err(value_err)?;
    Ok((s.reuse_count, s.reuse_size, s.unique_reused_files, s.reuse_rate))
}

#[pyfunction]
fn moving_average(series: Vec<f64>, window: usize) -> PyResult<Vec<f64>> {
    metrics::moving_average(&series, window).map_err(value_err)
}

/// Reduction rate over trailing windows of daily summaries.
#[pyfunction]
fn windowed_reduction_rate(summaries: Vec<PyRef<'_, PyDailySummary>>, window: usize) -> PyResult<Vec<f64>> {
    let rates = metrics::windowed_reduction_rate(&self::summaries(&summaries), window).map_err(value_err)?;
    Ok(rates.into_iter().map(|r| r.as_f64()).collect())
}

/// `(frequency, period, power)` triples for k = 1..=N/2.
#[pyfunction]
fn periodogram(series: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let pg = seasonality::periodogram(&series).map_err(value_err)?;
    Ok(pg.iter().map(|p| (p.frequency, p.period, p.power)).collect())
}

/// The `k` strongest periodogram bins of `series`, strongest first.
#[pyfunction]
fn detect_peaks(series: Vec<f64>, k: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let pg = seasonality::periodogram(&series).map_err(value_err)?;
    Ok(seasonality::detect_peaks(&pg, k).iter().map(|p| (p.frequency, p.period, p.power)).collect())
}

#[pyfunction]
fn encode_day_of_week(date: &str) -> PyResult<Vec<f64>> {
    Ok(cachescope::forecast::encode_day_of_week(parse_date(date)?).to_vec())
}

#[pyfunction]
#[pyo3(signature = (start, days, noise = 0.1, seed = 0))]
fn synthetic_daily_series(start: &str, days: usize, noise: f64, seed: u64) -> PyResult<Vec<PyDailySummary>> {
    Ok(trace::synthetic_daily_series(parse_date(start)?, days, noise, seed).into_iter().map(PyDailySummary).collect())
}

#[pyclass(name = "Simulation", unsendable)]
pub struct PySimulation(CoreSimulation);

#[pymethods]
impl PySimulation {
    /// Either a named preset or a federation config as JSON text.
    #[new]
    #[pyo3(signature = (preset = Some("socal"), config_json = None))]
    fn new(preset: Option<&str>, config_json: Option<&str>) -> PyResult<Self> {
        let cfg = match (config_json, preset) {
            (Some(json), _) => serde_json::from_str::<FederationConfig>(json).map_err(value_err)?,
            (None, Some(name)) => {
                FederationConfig::preset(name).ok_or_else(|| value_err(format!("unknown preset `{name}`")))?
            }
            (None, None) => return Err(value_err("need a preset or a config")),
        };
        CoreSimulation::from_config(&cfg).map(PySimulation).map_err(value_err)
    }

    #[pyo3(signature = (time, user_id, file_id, file_size, request_size, namespace = "miniaod".to_string()))]
    fn step(
        &mut self,
        time: i64,
        user_id: String,
        file_id: String,
        file_size: u64,
        request_size: u64,
        namespace: String,
    ) -> PyResult<PyAccessRecord> {
        let req = FileRequest { time, user_id, file_id, file_size, request_size, namespace };
        self.0.step(&req).map(PyAccessRecord).map_err(value_err)
    }

    /// Generate a synthetic workload (JSON config) and replay it.
    fn run_workload(&mut self, workload_json: &str) -> PyResult<Vec<PyAccessRecord>> {
        let cfg: WorkloadConfig = serde_json::from_str(workload_json).map_err(value_err)?;
        let requests = trace::generate_workload(&cfg).map_err(value_err)?;
        requests.iter().map(|r| self.0.step(r).map(PyAccessRecord).map_err(value_err)).collect()
    }

    fn within_capacity(&self) -> bool {
        self.0.state().within_capacity()
    }

    /// `(node_id, used_bytes, capacity_bytes)` for every node that has joined.
    fn node_usage(&self) -> Vec<(String, u64, u64)> {
        self.0.state().nodes().iter().map(|n| (n.spec.node_id.clone(), n.used(), n.spec.capacity)).collect()
    }
}

#[pyclass(name = "ForecastModel", frozen, skip_from_py_object)]
pub struct PyForecastModel(CoreModel);

#[pymethods]
impl PyForecastModel {
    #[getter]
    fn n_params(&self) -> usize {
        self.0.n_params()
    }
    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.0.loss_history.clone()
    }
    #[getter]
    fn window_len(&self) -> usize {
        self.0.hyperparams.window_len
    }
    #[getter]
    fn use_dow(&self) -> bool {
        self.0.use_dow
    }

    /// Next-day features in original units from the last days of `summaries`.
    fn predict(&self, summaries: Vec<PyRef<'_, PyDailySummary>>) -> PyResult<Vec<f64>> {
        let series = FeatureSeries::from_summaries(&self::summaries(&summaries));
        Ok(self.0.forecast_next(&series).map_err(value_err)?.to_vec())
    }

    /// Per feature `(name, train_rmse, test_rmse, accuracy)` on the 80/20 split of `summaries`.
    fn evaluate(&self, summaries: Vec<PyRef<'_, PyDailySummary>>) -> PyResult<Vec<(String, f64, f64, f64)>> {
        let series = FeatureSeries::from_summaries(&self::summaries(&summaries));
        let data = prepare(&series, self.0.hyperparams.window_len, self.0.use_dow).map_err(value_err)?;
        let report = evaluate_model(&self.0, &data.train, &data.test).map_err(value_err)?;
        Ok(report.features.iter().map(|f| (f.feature.clone(), f.train_rmse, f.test_rmse, f.accuracy)).collect())
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.save_json(&mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreModel::load_json(text.as_bytes()).map(PyForecastModel).map_err(value_err)
    }
}

/// Train on the first 80% of `summaries`. Unset settings take the defaults
/// of the selected daily configuration.
#[pyfunction]
#[pyo3(signature = (
    summaries, *, use_dow = false, window_len = 7, units1 = 128, units2 = 0, act1 = "tanh", act2 = "tanh",
    dropout = 0.04, epochs = 50, learning_rate = 1e-3, batch_size = 32, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    summaries: Vec<PyRef<'_, PyDailySummary>>,
    use_dow: bool,
    window_len: usize,
    units1: usize,
    units2: usize,
    act1: &str,
    act2: &str,
    dropout: f64,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<PyForecastModel> {
    let hp = HyperParams {
        units1,
        units2,
        act1: act1.parse().map_err(value_err)?,
        act2: act2.parse().map_err(value_err)?,
        dropout,
        epochs,
        window_len,
        learning_rate,
        batch_size,
        seed,
    };
    let series = FeatureSeries::from_summaries(&self::summaries(&summaries));
    let data = prepare(&series, window_len, use_dow).map_err(value_err)?;
    let model = py.detach(|| train_model(&data.train, &hp, data.normalizer.clone(), use_dow)).map_err(value_err)?;
    Ok(PyForecastModel(model))
}

#[pymodule]
fn cachescope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAccessRecord>()?;
    m.add_class::<PyDailySummary>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyForecastModel>()?;
    m.add_function(wrap_pyfunction!(parse_record, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(reuse_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(moving_average, m)?)?;
    m.add_function(wrap_pyfunction!(windowed_reduction_rate, m)?)?;
    m.add_function(wrap_pyfunction!(periodogram, m)?)?;
    m.add_function(wrap_pyfunction!(detect_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(encode_day_of_week, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_daily_series, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    Ok(())
}
