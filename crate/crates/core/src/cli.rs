//! The `cachescope` command line.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors (bad or
//! missing input, failed training). `CACHESCOPE_LOG` sets the log level.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::federation::{run_simulation, FederationConfig};
use crate::forecast::{
    evaluate_model, grid_search, prepare, train_model, FeatureSeries, Grid, GridMode, HyperParams, Activation, FEATURE_NAMES,
};
use crate::metrics::{
    aggregate, aggregate_all_scopes, moving_average, moving_average_masked, read_summaries, windowed_reduction_rate,
    write_summaries, DailySummary, Period, Scope,
};
use crate::report::{combined_report, emit_report, table1};
use crate::seasonality::{detect_peaks, periodogram};
use crate::trace::{generate_workload, read_trace, write_trace, TraceFormat, WorkloadConfig};
use crate::OutputFormat;

#[derive(Debug, Parser)]
#[command(name = "cachescope", version, about = "Federated cache simulator, analytics and forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output encoding; inferred from the output extension when omitted.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Output path (stdout when omitted).
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

impl Common {
    fn format(&self) -> OutputFormat {
        self.format.unwrap_or_else(|| self.output.as_deref().map(OutputFormat::from_path).unwrap_or_default())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a generated workload through a federation and write the access trace.
    Simulate {
        /// Built-in federation (`socal`).
        #[arg(long, conflicts_with = "federation", required_unless_present = "federation")]
        preset: Option<String>,
        /// Federation config JSON.
        #[arg(long)]
        federation: Option<PathBuf>,
        /// Workload config JSON.
        #[arg(long)]
        workload: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate a trace into daily or weekly summaries with derived metrics.
    Summarize {
        trace: PathBuf,
        #[arg(long, default_value = "day")]
        period: Period,
        /// `ALL` or a node id.
        #[arg(long, default_value = "ALL", conflicts_with = "by_node")]
        scope: Scope,
        /// One block per node plus `ALL`.
        #[arg(long)]
        by_node: bool,
        /// Also write trailing moving averages over this many periods to `--ma-output`.
        #[arg(long, requires = "ma_output")]
        ma: Option<usize>,
        #[arg(long, requires = "ma")]
        ma_output: Option<PathBuf>,
        /// Leave gap periods out of moving-average denominators.
        #[arg(long)]
        skip_gaps: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train one forecaster and write its snapshot.
    Train {
        summaries: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Evaluation report path (CSV or JSON by extension).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Search a hyper-parameter grid; writes the leaderboard.
    Gridsearch {
        summaries: PathBuf,
        #[arg(long, default_value = "reduced")]
        grid_mode: GridMode,
        /// Add the day-of-week one-hot to the inputs.
        #[arg(long)]
        dow: bool,
        #[arg(long, default_value_t = 7)]
        window: usize,
        #[arg(long)]
        scope: Option<Scope>,
        /// Snapshot path for the winning model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Evaluation report of the winning model.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Strongest periodogram bins of every feature.
    Periodogram {
        summaries: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        scope: Option<Scope>,
        #[command(flatten)]
        common: Common,
    },
    /// Monthly table, 7-day reduction rate and seasonality peaks in one file.
    Report {
        summaries: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        scope: Option<Scope>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    units: Option<usize>,
    /// Second-layer units; 0 for a single layer.
    #[arg(long)]
    units2: Option<usize>,
    #[arg(long)]
    act: Option<Activation>,
    #[arg(long)]
    act2: Option<Activation>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dow: bool,
    /// Train on trailing moving averages of this window (defaults switch to the smoothed-data configuration).
    #[arg(long)]
    ma: Option<usize>,
    #[arg(long)]
    scope: Option<Scope>,
}

impl ModelArgs {
    fn hyperparams(&self, seed: Option<u64>) -> HyperParams {
        let base = if self.ma.is_some() { HyperParams::moving_average_default() } else { HyperParams::default() };
        HyperParams {
            units1: self.units.unwrap_or(base.units1),
            units2: self.units2.unwrap_or(base.units2),
            act1: self.act.unwrap_or(base.act1),
            act2: self.act2.unwrap_or(base.act2),
            dropout: self.dropout.unwrap_or(base.dropout),
            epochs: self.epochs.unwrap_or(base.epochs),
            window_len: self.window.unwrap_or(base.window_len),
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            seed: seed.unwrap_or(base.seed),
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

type CliResult<T> = Result<T, CliError>;

fn data_err(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{context}: {e}"))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| data_err(path.display(), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_reader(open(path)?).map_err(|e| data_err(path.display(), e))
}

/// Write to `path`, or to stdout when it is `None`.
fn with_output<F>(path: Option<&Path>, f: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let context = path.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    let result = match path {
        Some(p) => File::create(p).and_then(|file| {
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()
        }),
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).and_then(|_| w.flush())
        }
    };
    result.map_err(|e| data_err(context, e))
}

fn io_err(e: impl std::fmt::Display) -> io::Error {
    io::Error::other(e.to_string())
}

fn load_summaries(path: &Path, scope: Option<&Scope>) -> CliResult<Vec<DailySummary>> {
    let rows = read_summaries(open(path)?, OutputFormat::from_path(path)).map_err(|e| data_err(path.display(), e))?;
    let scope = scope.cloned().unwrap_or(Scope::All);
    let rows: Vec<DailySummary> = rows.into_iter().filter(|r| r.scope == scope).collect();
    if rows.is_empty() {
        return Err(data_err(path.display(), format!("no summaries for scope {scope}")));
    }
    Ok(rows)
}

fn simulate(preset: Option<String>, federation: Option<PathBuf>, workload: PathBuf, common: Common) -> CliResult<()> {
    let fed = match (preset, federation) {
        (Some(name), _) => {
            FederationConfig::preset(&name).ok_or_else(|| CliError::Usage(format!("unknown preset `{name}` (available: socal)")))?
        }
        (None, Some(path)) => read_json(&path)?,
        (None, None) => return Err(CliError::Usage("one of --preset or --federation is required".into())),
    };
    let mut cfg: WorkloadConfig = read_json(&workload)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let requests = generate_workload(&cfg).map_err(|e| data_err(workload.display(), e))?;
    log::info!("generated {} requests", requests.len());
    let trace = run_simulation(fed.nodes, fed.events, &requests).map_err(|e| data_err("simulation", e))?;
    let format = match (common.format, common.output.as_deref()) {
        (Some(OutputFormat::Json), _) => TraceFormat::Jsonl,
        (Some(OutputFormat::Csv), _) => TraceFormat::Csv,
        (None, Some(p)) => TraceFormat::from_path(p),
        (None, None) => TraceFormat::Csv,
    };
    with_output(common.output.as_deref(), |w| write_trace(w, &trace, format))
}

#[derive(serde::Serialize)]
struct MaRow {
    date: chrono::NaiveDate,
    scope: String,
    #[serde(flatten)]
    features: std::collections::BTreeMap<&'static str, f64>,
    reduction_rate: Option<f64>,
}

fn moving_average_rows(summaries: &[DailySummary], window: usize, skip_gaps: bool) -> CliResult<Vec<(usize, Vec<f64>)>> {
    let present: Vec<bool> = summaries.iter().map(|s| !s.is_gap()).collect();
    let mut columns = Vec::with_capacity(FEATURE_NAMES.len());
    for j in 0..FEATURE_NAMES.len() {
        let col: Vec<f64> = summaries.iter().map(|s| s.features()[j]).collect();
        let ma = if skip_gaps { moving_average_masked(&col, &present, window) } else { moving_average(&col, window) };
        columns.push(ma.map_err(|e| CliError::Usage(e.to_string()))?);
    }
    Ok((0..summaries.len()).map(|i| (i, columns.iter().map(|c| c[i]).collect())).collect())
}

fn write_moving_averages(path: &Path, summaries: &[DailySummary], window: usize, skip_gaps: bool, format: OutputFormat) -> CliResult<()> {
    let mut rows = Vec::new();
    // Each scope block is smoothed on its own.
    let mut start = 0;
    while start < summaries.len() {
        let scope = &summaries[start].scope;
        let end = start + summaries[start..].iter().take_while(|s| &s.scope == scope).count();
        let block = &summaries[start..end];
        let rates = windowed_reduction_rate(block, window).map_err(|e| CliError::Usage(e.to_string()))?;
        for ((i, values), rate) in moving_average_rows(block, window, skip_gaps)?.into_iter().zip(rates) {
            rows.push(MaRow {
                date: block[i].date,
                scope: scope.to_string(),
                features: FEATURE_NAMES.iter().copied().zip(values).collect(),
                reduction_rate: rate.finite(),
            });
        }
        start = end;
    }
    with_output(Some(path), |w| match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *w, &rows).map_err(io_err)?;
            writeln!(w)
        }
        OutputFormat::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["date", "scope"];
            header.extend(FEATURE_NAMES.iter().copied());
            header.push("reduction_rate");
            csv.write_record(&header)?;
            for r in &rows {
                let mut rec = vec![r.date.to_string(), r.scope.clone()];
                rec.extend(FEATURE_NAMES.iter().map(|n| r.features[n].to_string()));
                rec.push(r.reduction_rate.map(|v| v.to_string()).unwrap_or_default());
                csv.write_record(&rec)?;
            }
            csv.flush()
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    trace_path: PathBuf,
    period: Period,
    scope: Scope,
    by_node: bool,
    ma: Option<usize>,
    ma_output: Option<PathBuf>,
    skip_gaps: bool,
    common: Common,
) -> CliResult<()> {
    let format = if trace_path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        TraceFormat::Jsonl
    } else {
        TraceFormat::Csv
    };
    let trace = read_trace(open(&trace_path)?, format).map_err(|e| data_err(trace_path.display(), e))?;
    let summaries = if by_node { aggregate_all_scopes(&trace, period) } else { aggregate(&trace, period, &scope) };
    if summaries.is_empty() {
        return Err(data_err(trace_path.display(), "no successful accesses in trace"));
    }
    let out_format = common.format();
    with_output(common.output.as_deref(), |w| write_summaries(w, &summaries, out_format).map_err(io_err))?;
    if let (Some(window), Some(path)) = (ma, ma_output) {
        if window == 0 {
            return Err(CliError::Usage("--ma must be at least 1".into()));
        }
        write_moving_averages(&path, &summaries, window, skip_gaps, common.format.unwrap_or(OutputFormat::from_path(&path)))?;
    }
    Ok(())
}

fn train(summaries: PathBuf, model: ModelArgs, report: Option<PathBuf>, common: Common) -> CliResult<()> {
    let hp = model.hyperparams(common.seed);
    hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = load_summaries(&summaries, model.scope.as_ref())?;
    let mut series = FeatureSeries::from_summaries(&rows);
    if let Some(w) = model.ma {
        series = series.smoothed(w).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = summaries.display();
    let data = prepare(&series, hp.window_len, model.dow).map_err(|e| data_err(&ctx, e))?;
    log::info!("training on {} windows, testing on {}", data.train.len(), data.test.len());
    let trained = train_model(&data.train, &hp, data.normalizer.clone(), model.dow).map_err(|e| data_err(&ctx, e))?;
    with_output(common.output.as_deref(), |w| trained.save_json(w))?;
    if let Some(path) = report {
        let eval = evaluate_model(&trained, &data.train, &data.test).map_err(|e| data_err(&ctx, e))?;
        with_output(Some(&path), |w| eval.write(w, OutputFormat::from_path(&path)))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gridsearch(
    summaries: PathBuf,
    grid_mode: GridMode,
    dow: bool,
    window: usize,
    scope: Option<Scope>,
    model: Option<PathBuf>,
    report: Option<PathBuf>,
    common: Common,
) -> CliResult<()> {
    let rows = load_summaries(&summaries, scope.as_ref())?;
    let series = FeatureSeries::from_summaries(&rows);
    let ctx = summaries.display();
    let data = prepare(&series, window, dow).map_err(|e| data_err(&ctx, e))?;
    let base = HyperParams { window_len: window, seed: common.seed.unwrap_or(0), ..HyperParams::default() };
    let grid = Grid::for_mode(grid_mode);
    log::info!("searching {} configurations", grid.len());
    let outcome = grid_search(&data, &grid, &base).map_err(|e| data_err(&ctx, e))?;
    for f in outcome.failures() {
        log::warn!("configuration {} failed: {}", f.index, f.error.as_deref().unwrap_or(""));
    }
    let format = common.format();
    with_output(common.output.as_deref(), |w| outcome.write_leaderboard(w, format))?;
    if let Some(path) = model {
        with_output(Some(&path), |w| outcome.best.save_json(w))?;
    }
    if let Some(path) = report {
        with_output(Some(&path), |w| outcome.best_report.write(w, OutputFormat::from_path(&path)))?;
    }
    Ok(())
}

fn periodogram_cmd(summaries: PathBuf, top: usize, scope: Option<Scope>, common: Common) -> CliResult<()> {
    if top == 0 {
        return Err(CliError::Usage("--top must be at least 1".into()));
    }
    let rows = load_summaries(&summaries, scope.as_ref())?;
    let series = FeatureSeries::from_summaries(&rows);
    let mut out = Vec::new();
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let column: Vec<f64> = series.values.iter().map(|r| r[j]).collect();
        let pg = periodogram(&column).map_err(|e| data_err(summaries.display(), e))?;
        out.extend(detect_peaks(&pg, top).into_iter().map(|p| (*name, p)));
    }
    let format = common.format();
    with_output(common.output.as_deref(), |w| match format {
        OutputFormat::Json => {
            let rows: Vec<_> = out
                .iter()
                .map(|(f, p)| serde_json::json!({"feature": f, "period_days": p.period, "frequency": p.frequency, "power": p.power}))
                .collect();
            serde_json::to_writer_pretty(&mut *w, &rows).map_err(io_err)?;
            writeln!(w)
        }
        OutputFormat::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["feature", "period_days", "frequency", "power"])?;
            for (f, p) in &out {
                csv.serialize((f, p.period, p.frequency, p.power))?;
            }
            csv.flush()
        }
    })
}

fn report_cmd(summaries: PathBuf, top: usize, scope: Option<Scope>, common: Common) -> CliResult<()> {
    let rows = load_summaries(&summaries, scope.as_ref())?;
    let ctx = summaries.display();
    // The combined report is JSON unless CSV is asked for, which yields the monthly table alone.
    let format = common.format.unwrap_or(match common.output.as_deref() {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => OutputFormat::Csv,
        _ => OutputFormat::Json,
    });
    match format {
        OutputFormat::Csv => {
            let t = table1(&rows).map_err(|e| data_err(&ctx, e))?;
            with_output(common.output.as_deref(), |w| emit_report(&t, w, OutputFormat::Csv).map_err(io_err))
        }
        OutputFormat::Json => {
            let r = combined_report(&rows, top).map_err(|e| data_err(&ctx, e))?;
            with_output(common.output.as_deref(), |w| {
                serde_json::to_writer_pretty(&mut *w, &r).map_err(io_err)?;
                writeln!(w)
            })
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("CACHESCOPE_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parse `argv` (including the program name), run the command and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Simulate { preset, federation, workload, common } => simulate(preset, federation, workload, common),
        Command::Summarize { trace, period, scope, by_node, ma, ma_output, skip_gaps, common } => {
            summarize(trace, period, scope, by_node, ma, ma_output, skip_gaps, common)
        }
        Command::Train { summaries, model, report, common } => train(summaries, model, report, common),
        Command::Gridsearch { summaries, grid_mode, dow, window, scope, model, report, common } => {
            gridsearch(summaries, grid_mode, dow, window, scope, model, report, common)
        }
        Command::Periodogram { summaries, top, scope, common } => periodogram_cmd(summaries, top, scope, common),
        Command::Report { summaries, top, scope, common } => report_cmd(summaries, top, scope, common),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
