//! End-to-end acceptance checks. Runs without the libtest harness so that one
//! PASS/FAIL line per check is always printed; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use cachescope::federation::{FederationConfig, Simulation};
use cachescope::forecast::{
    evaluate_model, gradient_check, persistence_rmse, prepare, rmse, train_model, FeatureSeries, Grid, HyperParams,
    Network, Sample, COUNT_FEATURES,
};
use cachescope::forecast::{grid_search, Activation};
use cachescope::metrics::{
    aggregate, moving_average, net_traffic_reduction, reuse_metrics, traffic_demand_reduction_rate,
    windowed_reduction_rate, DailySummary, Period, Scope,
};
use cachescope::report::Table1Row;
use cachescope::seasonality::{detect_peaks, periodogram, total_power};
use cachescope::trace::{
    generate_workload, synthetic_daily_series, AccessKind, AccessRecord, FileRequest, FileSizeDistribution, RegimeShift,
    WorkloadConfig,
};
use cachescope::{day_start, utc_date};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn within(limit: Duration, started: Instant, detail: String) -> Outcome {
    let took = started.elapsed();
    check(took < limit, format!("{detail}; {:.1}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
}

fn table1_arithmetic() -> Outcome {
    // (label, accesses, transfer TB, shared TB, published %)
    let rows = [
        ("Jul 2021", 1_182_717.0, 385.78, 519.25, 57.37),
        ("Aug 2021", 1_078_340.0, 206.94, 313.46, 60.23),
        ("Sep 2021", 1_089_292.0, 206.96, 257.18, 55.41),
        ("Oct 2021", 1_058_071.0, 412.18, 141.91, 25.61),
        ("Nov 2021", 878_703.0, 649.30, 82.67, 11.29),
        ("Dec 2021", 983_723.0, 1257.89, 130.03, 9.37),
        ("Jan 2022", 1_207_332.0, 2238.59, 148.26, 6.21),
        ("Total", 7_478_178.0, 5357.67, 1592.79, 22.91),
        ("Daily Average", 35_441.60, 25.51, 7.55, 22.83),
    ];
    let mut worst: (f64, &str) = (0.0, "");
    for (label, accesses, transfer, shared, published) in rows {
        let got = Table1Row::from_tb(label, accesses, transfer, shared).net_reduction_pct;
        let diff = (got - published).abs();
        if diff > worst.0 {
            worst = (diff, label);
        }
    }
    check(worst.0 <= 0.01, format!("9 rows, max deviation {:.4} pp ({})", worst.0, worst.1))
}

fn random_summary(rng: &mut ChaCha8Rng) -> DailySummary {
    let hit_size = rng.random_range(0..=1_000_000_000_000_000u64);
    let miss_size = rng.random_range(1..=1_000_000_000_000_000u64);
    let hit_count = rng.random_range(0..100_000);
    let miss_count = rng.random_range(1..100_000);
    DailySummary {
        access_count: hit_count + miss_count,
        access_size: hit_size + miss_size,
        hit_count,
        hit_size,
        miss_count,
        miss_size,
        ..DailySummary::empty(date(2021, 7, 1), Scope::All)
    }
}

fn reduction_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = random_summary(&mut rng);
        let rate = traffic_demand_reduction_rate(&s).finite().ok_or("non-finite rate with misses")?;
        let via_ntr = 1.0 / (1.0 - net_traffic_reduction(&s));
        worst = worst.max((rate - via_ntr).abs() / rate);
    }
    check(worst <= 1e-12, format!("1000 summaries, max relative difference {worst:.2e}"))
}

/// Random requests against the SoCal preset, including its node-addition events.
/// The catalog (about 5 PB) is larger than the federation, so evictions happen.
fn random_requests(n: usize, seed: u64) -> Vec<FileRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog: Vec<(u64, &str)> = (0..200_000)
        .map(|_| {
            // log-normal, median about 16 GB
            let z: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
            let size = (23.5 + z).exp() as u64;
            (size.max(1), if rng.random::<f64>() < 0.3 { "nanoaod" } else { "miniaod" })
        })
        .collect();
    let start = day_start(date(2021, 7, 1));
    let span = day_start(date(2022, 2, 1)) - start;
    let mut times: Vec<i64> = (0..n).map(|_| start + rng.random_range(0..span)).collect();
    times.sort_unstable();
    times
        .into_iter()
        .map(|time| {
            // Skewed towards low file ids so that hits happen.
            let f = (catalog.len() as f64 * rng.random::<f64>().powi(3)) as usize;
            let (file_size, ns) = catalog[f];
            FileRequest {
                time,
                user_id: format!("u{}", rng.random_range(0..50)),
                file_id: format!("f{f}"),
                file_size,
                request_size: rng.random_range(1..=file_size),
                namespace: ns.to_string(),
            }
        })
        .collect()
}

fn simulator_conservation() -> Outcome {
    let started = Instant::now();
    let requests = random_requests(100_000, 3);
    let mut sim = Simulation::from_config(&FederationConfig::socal()).map_err(|e| e.to_string())?;
    let mut trace = Vec::with_capacity(requests.len());
    let mut evictions_seen = false;
    for (i, r) in requests.iter().enumerate() {
        let before: usize = sim.state().nodes().iter().map(|n| n.resident_count()).sum();
        trace.push(sim.step(r).map_err(|e| format!("request {i}: {e}"))?);
        let after: usize = sim.state().nodes().iter().map(|n| n.resident_count()).sum();
        evictions_seen |= after < before;
        if !sim.state().within_capacity() {
            return Err(format!("capacity exceeded after request {i}"));
        }
    }
    sim.state().check_invariants()?;
    let daily = aggregate(&trace, Period::Day, &Scope::All);
    for d in &daily {
        if d.access_count != d.hit_count + d.miss_count || d.access_size != d.hit_size + d.miss_size {
            return Err(format!("{}: access != hit + miss", d.date));
        }
    }
    let total: u64 = daily.iter().map(|d| d.access_count).sum();
    if total != 100_000 {
        return Err(format!("summaries hold {total} accesses"));
    }
    if !evictions_seen {
        return Err("no eviction happened; capacity was never exercised".into());
    }
    within(Duration::from_secs(10), started, format!("{} days, 1e5 requests, evictions exercised", daily.len()))
}

fn regime_shift() -> Outcome {
    let started = Instant::now();
    let shift = date(2021, 9, 1);
    let cfg = WorkloadConfig {
        n_files: 5_000,
        n_users: 40,
        zipf_alpha: 1.1,
        mean_requests_per_day: 1_000.0,
        file_size_distribution: FileSizeDistribution { mu: 21.5, sigma: 1.0 },
        start_date: date(2021, 7, 1),
        end_date: date(2021, 9, 30),
        regime_shift: Some(RegimeShift { date: shift, streaming_fraction: 0.9 }),
        seed: 11,
        nanoaod_fraction: 0.0,
    };
    let requests = generate_workload(&cfg).map_err(|e| e.to_string())?;
    let mut sim = Simulation::from_config(&FederationConfig::socal()).map_err(|e| e.to_string())?;
    let trace: Vec<AccessRecord> = requests.iter().map(|r| sim.step(r)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let daily = aggregate(&trace, Period::Day, &Scope::All);
    let rates = windowed_reduction_rate(&daily, 7).map_err(|e| e.to_string())?;
    let idx = |d: NaiveDate| daily.iter().position(|s| s.date == d).expect("day present");
    let before = rates[idx(shift) - 1].as_f64();
    let drop_day = (idx(shift)..idx(shift) + 14).find(|&i| rates[i].as_f64() < 1.3);
    let detail = format!(
        "7-day rate {before:.2} on the eve of the shift; below 1.3 after {} days",
        drop_day.map_or("more than 14".into(), |i| (i - idx(shift) + 1).to_string())
    );
    if !(before >= 2.0 && drop_day.is_some()) {
        return Err(detail);
    }
    within(Duration::from_secs(30), started, detail)
}

fn new_node_policy() -> Outcome {
    let cfg = FederationConfig::socal();
    let event = &cfg.events[0];
    let new_ids: Vec<&str> = event.add_nodes.iter().map(|n| n.node_id.as_str()).collect();
    let workload = WorkloadConfig {
        n_files: 200_000,
        n_users: 40,
        zipf_alpha: 0.6,
        mean_requests_per_day: 2_000.0,
        file_size_distribution: FileSizeDistribution { mu: 23.0, sigma: 1.0 },
        start_date: date(2021, 8, 1),
        end_date: date(2021, 9, 29),
        regime_shift: None,
        seed: 5,
        nanoaod_fraction: 0.0,
    };
    let requests = generate_workload(&workload).map_err(|e| e.to_string())?;
    // The initial nodes and the 7-node addition only; no later events.
    let mut sim = Simulation::new(cfg.nodes.clone(), vec![event.clone()]).map_err(|e| e.to_string())?;
    let (mut eligible_misses, mut on_new) = (0u64, 0u64);
    for r in &requests {
        let space_left = r.time >= event.time
            && sim.state().nodes().iter().any(|n| new_ids.contains(&n.spec.node_id.as_str()) && n.free() >= r.file_size);
        let rec = sim.step(r).map_err(|e| e.to_string())?;
        if space_left && rec.kind == AccessKind::Miss {
            eligible_misses += 1;
            on_new += u64::from(new_ids.contains(&rec.node_id.as_str()));
        }
    }
    let share = on_new as f64 / eligible_misses.max(1) as f64;
    check(
        eligible_misses > 1000 && share >= 0.9,
        format!("{on_new}/{eligible_misses} misses on the 7 new nodes ({:.1}%)", 100.0 * share),
    )
}

// Naive re-implementations for the oracle check.

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<AccessRecord> {
    let base = day_start(date(2021, 7, 1));
    let days = [0i64, 1, 2, 4, 5]; // day 3 is a gap
    (0..n)
        .map(|_| {
            let day = days[rng.random_range(0..days.len())];
            // Coarse times so that ties occur.
            let ts_start = base + day * 86_400 + rng.random_range(0..200) * 400;
            let file_size = rng.random_range(1..5_000_000u64);
            AccessRecord {
                ts_start,
                ts_end: ts_start + rng.random_range(0..3),
                user_id: format!("u{}", rng.random_range(0..5)),
                file_id: format!("f{}", rng.random_range(0..25)),
                file_path: "/store/x".into(),
                file_size,
                transfer_size: rng.random_range(0..=file_size),
                kind: if rng.random::<f64>() < 0.6 { AccessKind::Hit } else { AccessKind::Miss },
                node_id: format!("n{}", rng.random_range(0..3)),
                success: rng.random::<f64>() < 0.9,
            }
        })
        .collect()
}

/// A hit is a reuse event when the previous access to the same file that
/// day (in (start, end, position) order, within scope) was also a hit.
fn naive_reuse(records: &[AccessRecord], keep: &dyn Fn(&AccessRecord) -> bool) -> (u64, u64, u64) {
    let (mut count, mut size) = (0, 0);
    let mut files = std::collections::BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        if !keep(r) || r.kind != AccessKind::Hit {
            continue;
        }
        let key = |j: usize, x: &AccessRecord| (x.ts_start, x.ts_end, j);
        let prev = records
            .iter()
            .enumerate()
            .filter(|(j, x)| keep(x) && x.file_id == r.file_id && key(*j, x) < key(i, r))
            .max_by_key(|(j, x)| key(*j, x));
        if let Some((_, p)) = prev {
            if p.kind == AccessKind::Hit {
                count += 1;
                size += r.transfer_size;
                files.insert(r.file_id.clone());
            }
        }
    }
    (count, size, files.len() as u64)
}

fn naive_aggregate(records: &[AccessRecord], scope: &Scope) -> Vec<DailySummary> {
    let ok: Vec<&AccessRecord> = records.iter().filter(|r| r.success).collect();
    let first = ok.iter().map(|r| utc_date(r.ts_start)).min().unwrap();
    let last = ok.iter().map(|r| utc_date(r.ts_start)).max().unwrap();
    let mut out = Vec::new();
    let mut d = first;
    while d <= last {
        let mut s = DailySummary::empty(d, scope.clone());
        let keep = |r: &AccessRecord| r.success && utc_date(r.ts_start) == d && scope.matches(r);
        for r in records.iter().filter(|r| keep(r)) {
            s.access_count += 1;
            s.access_size += r.transfer_size;
            match r.kind {
                AccessKind::Hit => {
                    s.hit_count += 1;
                    s.hit_size += r.transfer_size;
                }
                AccessKind::Miss => {
                    s.miss_count += 1;
                    s.miss_size += r.transfer_size;
                }
            }
        }
        (s.reuse_count, s.reuse_size, s.unique_reused_files) = naive_reuse(records, &keep);
        out.push(s);
        d = d.succ_opt().unwrap();
    }
    out
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let records = random_records(&mut rng, 1000);
    for scope in [Scope::All, Scope::Node("n1".into())] {
        let got = aggregate(&records, Period::Day, &scope);
        let want = naive_aggregate(&records, &scope);
        if got != want {
            return Err(format!("aggregate differs for scope {scope}"));
        }
        let day2 = date(2021, 7, 3);
        let one_day: Vec<AccessRecord> = records.iter().filter(|r| utc_date(r.ts_start) == day2).cloned().collect();
        let stats = reuse_metrics(&one_day, &scope).map_err(|e| e.to_string())?;
        let (c, s, f) = naive_reuse(&one_day, &|r: &AccessRecord| r.success && scope.matches(r));
        if (stats.reuse_count, stats.reuse_size, stats.unique_reused_files) != (c, s, f) {
            return Err(format!("reuse_metrics differs for scope {scope}"));
        }
        if f > 0 && (stats.reuse_rate - c as f64 / f as f64).abs() > 1e-9 {
            return Err("reuse_rate differs".into());
        }
    }

    let series: Vec<f64> = (0..1000).map(|_| rng.random_range(-1e6..1e6)).collect();
    let mut worst_ma = 0.0f64;
    for w in [1usize, 2, 7, 30, 999, 1000, 5000] {
        let got = moving_average(&series, w).map_err(|e| e.to_string())?;
        for i in 0..series.len() {
            let lo = (i + 1).saturating_sub(w);
            let want = series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            worst_ma = worst_ma.max((got[i] - want).abs() / want.abs().max(1.0));
        }
    }

    let pred: Vec<f64> = (0..1000).map(|_| rng.random_range(-100.0..100.0)).collect();
    let actual: Vec<f64> = (0..1000).map(|_| rng.random_range(-100.0..100.0)).collect();
    let mut sse = 0.0;
    for i in 0..1000 {
        sse += (pred[i] - actual[i]) * (pred[i] - actual[i]);
    }
    let want = (sse / 1000.0).sqrt();
    let rmse_err = (rmse(&pred, &actual).map_err(|e| e.to_string())? - want).abs() / want;

    check(
        worst_ma <= 1e-9 && rmse_err <= 1e-9,
        format!("aggregate and reuse exact; moving average rel err {worst_ma:.1e}; rmse rel err {rmse_err:.1e}"),
    )
}

fn gradient_check_criterion() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for restart in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + restart);
        let net = Network::new(8, &[(4, Activation::Tanh)], &mut rng);
        let sample = Sample {
            inputs: (0..3).map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
            target: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        };
        worst = worst.max(gradient_check(&net, &[sample], 1e-5).map_err(|e| e.to_string())?);
    }
    if worst >= 1e-4 {
        return Err(format!("20 restarts, max relative error {worst:.2e}"));
    }
    within(Duration::from_secs(5), started, format!("20 restarts, max relative error {worst:.2e}"))
}

fn mean_count_rmse(series: &FeatureSeries, window: usize, dow: bool) -> Result<(f64, [f64; 8]), String> {
    let data = prepare(series, window, dow).map_err(|e| e.to_string())?;
    let hp = HyperParams { window_len: window, ..HyperParams::default() };
    let model = train_model(&data.train, &hp, data.normalizer.clone(), dow).map_err(|e| e.to_string())?;
    let report = evaluate_model(&model, &data.train, &data.test).map_err(|e| e.to_string())?;
    let test = report.test_rmse();
    Ok((COUNT_FEATURES.iter().map(|&j| test[j]).sum::<f64>() / COUNT_FEATURES.len() as f64, test))
}

fn forecast_skill() -> Outcome {
    let started = Instant::now();
    let series = FeatureSeries::from_summaries(&synthetic_daily_series(date(2021, 7, 1), 365, 0.1, 1));
    let baseline = persistence_rmse(&series);
    let (_, test) = mean_count_rmse(&series, 7, false)?;
    let wins = (0..8).filter(|&j| test[j] < baseline[j]).count();
    // Day-of-week inputs compared in the one-day framing, where the window itself carries no weekday.
    let (plain1, _) = mean_count_rmse(&series, 1, false)?;
    let (dow1, _) = mean_count_rmse(&series, 1, true)?;
    // Reported for reference: with a 7-day window the weekday is already implicit.
    let (plain7, _) = mean_count_rmse(&series, 7, false)?;
    let (dow7, _) = mean_count_rmse(&series, 7, true)?;
    let detail = format!(
        "beats persistence on {wins}/8; mean count RMSE L=1 {plain1:.0} -> {dow1:.0} with weekday \
         (L=7, informational: {plain7:.0} -> {dow7:.0})"
    );
    if !(wins >= 6 && dow1 <= plain1) {
        return Err(detail);
    }
    within(Duration::from_secs(120), started, detail)
}

fn grid_cardinality() -> Outcome {
    let full = Grid::full();
    if full.len() != 3360 || full.configs(&HyperParams::default()).len() != 3360 {
        return Err(format!("full grid has {} combinations", full.len()));
    }
    let started = Instant::now();
    // One study period: July through January.
    let series = FeatureSeries::from_summaries(&synthetic_daily_series(date(2021, 7, 1), 215, 0.1, 9));
    let data = prepare(&series, 7, false).map_err(|e| e.to_string())?;
    let outcome = grid_search(&data, &Grid::reduced(), &HyperParams::default()).map_err(|e| e.to_string())?;
    let ok = outcome.leaderboard.iter().filter(|e| e.error.is_none()).count();
    let best = &outcome.best.hyperparams;
    let detail = format!(
        "full grid 3360; reduced grid {ok}/24 trained, best {}u/{}u {} dropout {}",
        best.units1, best.units2, best.act1, best.dropout
    );
    if ok != 24 {
        return Err(detail);
    }
    within(Duration::from_secs(600), started, detail)
}

fn periodogram_criterion() -> Outcome {
    let (n, a) = (210usize, 2.5);
    let tone: Vec<f64> = (0..n).map(|t| a * (std::f64::consts::TAU * t as f64 / 7.0).sin()).collect();
    let pg = periodogram(&tone).map_err(|e| e.to_string())?;
    let top = detect_peaks(&pg, 1)[0];
    let expected = n as f64 * a * a / 4.0;
    let power_err = (top.power - expected).abs() / expected;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noisy: Vec<f64> = tone.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
    let mean = noisy.iter().sum::<f64>() / n as f64;
    let energy: f64 = noisy.iter().map(|x| (x - mean).powi(2)).sum();
    let parseval = (total_power(&periodogram(&noisy).map_err(|e| e.to_string())?, n) - energy).abs() / energy;
    check(
        (top.period - 7.0).abs() < 1e-9 && power_err < 0.01 && parseval < 1e-9,
        format!("top period {:.3}, power error {power_err:.1e}, Parseval error {parseval:.1e}", top.period),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut argv = vec!["cachescope"];
    argv.extend_from_slice(args);
    match cachescope::cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let (x, y) = (std::fs::read(a).map_err(|e| e.to_string())?, std::fs::read(b).map_err(|e| e.to_string())?);
    if x.is_empty() || x != y {
        return Err(format!("{} and {} differ", a.display(), b.display()));
    }
    Ok(())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let workload = WorkloadConfig {
        n_files: 3_000,
        n_users: 20,
        zipf_alpha: 1.1,
        mean_requests_per_day: 400.0,
        file_size_distribution: FileSizeDistribution { mu: 21.0, sigma: 1.0 },
        start_date: date(2021, 7, 1),
        end_date: date(2021, 8, 30),
        regime_shift: None,
        seed: 0,
        nanoaod_fraction: 0.2,
    };
    std::fs::write(p("w.json"), serde_json::to_string(&workload).unwrap()).map_err(|e| e.to_string())?;

    for run in ["a", "b"] {
        let trace = p(&format!("trace_{run}.csv"));
        run_cli(&["simulate", "--preset", "socal", "--workload", &p("w.json"), "--seed", "7", "-o", &trace])?;
        run_cli(&["summarize", &trace, "-o", &p(&format!("daily_{run}.csv"))])?;
        let daily = p("daily_a.csv");
        run_cli(&[
            "train", &daily, "--units", "128", "--act", "tanh", "--dropout", "0.04", "--epochs", "50", "--seed", "3", "-o",
            &p(&format!("model_{run}.json")), "--report", &p(&format!("eval_{run}.csv")),
        ])?;
        run_cli(&[
            "gridsearch", &daily, "--grid-mode", "reduced", "--seed", "3", "-o", &p(&format!("board_{run}.csv")), "--model",
            &p(&format!("best_{run}.json")),
        ])?;
    }
    for f in ["trace_{}.csv", "daily_{}.csv", "model_{}.json", "eval_{}.csv", "board_{}.csv", "best_{}.json"] {
        same_bytes(Path::new(&p(&f.replace("{}", "a"))), Path::new(&p(&f.replace("{}", "b"))))?;
    }
    Ok("simulate, summarize, train and gridsearch outputs byte-identical across reruns".into())
}

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("monthly table arithmetic", table1_arithmetic),
        ("reduction-rate identity", reduction_identity),
        ("simulator conservation", simulator_conservation),
        ("regime shift", regime_shift),
        ("new-node placement", new_node_policy),
        ("oracle equivalence", oracle_equivalence),
        ("gradient check", gradient_check_criterion),
        ("forecast skill", forecast_skill),
        ("grid cardinality", grid_cardinality),
        ("periodogram", periodogram_criterion),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
