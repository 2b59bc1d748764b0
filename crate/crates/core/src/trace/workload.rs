use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FileRequest;
use crate::metrics::{DailySummary, Scope};
use crate::SECONDS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSizeDistribution {
    /// Mean of ln(bytes).
    pub mu: f64,
    /// Standard deviation of ln(bytes).
    pub sigma: f64,
}

/// Switch to a streaming access pattern from `date` onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub date: NaiveDate,
    /// Fraction of post-shift requests that read a never-before-seen file.
    pub streaming_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub n_files: usize,
    pub n_users: usize,
    pub zipf_alpha: f64,
    pub mean_requests_per_day: f64,
    pub file_size_distribution: FileSizeDistribution,
    pub start_date: NaiveDate,
    /// Exclusive.
    pub end_date: NaiveDate,
    #[serde(default)]
    pub regime_shift: Option<RegimeShift>,
    #[serde(default)]
    pub seed: u64,
    /// Share of catalog files tagged with the `nanoaod` namespace; the rest are `miniaod`.
    #[serde(default)]
    pub nanoaod_fraction: f64,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: &str| Err(WorkloadError::InvalidConfig(msg.to_string()));
        if self.start_date >= self.end_date {
            return bad("start_date must precede end_date");
        }
        if self.n_files == 0 {
            return bad("n_files must be positive");
        }
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if !(self.zipf_alpha >= 0.0 && self.zipf_alpha.is_finite()) {
            return bad("zipf_alpha must be finite and non-negative");
        }
        if !(self.mean_requests_per_day >= 0.0 && self.mean_requests_per_day.is_finite()) {
            return bad("mean_requests_per_day must be finite and non-negative");
        }
        let d = &self.file_size_distribution;
        if !(d.mu.is_finite() && d.sigma.is_finite() && d.sigma >= 0.0) {
            return bad("file_size_distribution needs finite mu and sigma >= 0");
        }
        if !(0.0..=1.0).contains(&self.nanoaod_fraction) {
            return bad("nanoaod_fraction must lie in [0, 1]");
        }
        if let Some(shift) = &self.regime_shift {
            if !(0.0..=1.0).contains(&shift.streaming_fraction) {
                return bad("streaming_fraction must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
}

enum FilePicker {
    Uniform(usize),
    Zipf(Zipf<f64>),
}

impl FilePicker {
    fn new(n: usize, alpha: f64) -> Self {
        if alpha == 0.0 {
            FilePicker::Uniform(n)
        } else {
            FilePicker::Zipf(Zipf::new(n as f64, alpha).expect("validated zipf parameters"))
        }
    }

    /// Zero-based popularity rank.
    fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        match self {
            FilePicker::Uniform(n) => rng.random_range(0..*n),
            FilePicker::Zipf(z) => z.sample(rng) as usize - 1,
        }
    }
}

fn sample_size<R: Rng>(dist: &LogNormal<f64>, rng: &mut R) -> u64 {
    dist.sample(rng).round().max(1.0) as u64
}

/// Time-ordered synthetic request stream. A pure function of `cfg`.
///
/// Catalog files are `f<rank>` with rank 0 the most popular. Streaming reads
/// after a regime shift go to fresh `s<n>` files that are never requested again.
pub fn generate_workload(cfg: &WorkloadConfig) -> Result<Vec<FileRequest>, WorkloadError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = LogNormal::new(cfg.file_size_distribution.mu, cfg.file_size_distribution.sigma)
        .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;

    let catalog: Vec<(u64, &'static str)> = (0..cfg.n_files)
        .map(|_| {
            let size = sample_size(&sizes, &mut rng);
            let ns = if rng.random::<f64>() < cfg.nanoaod_fraction { "nanoaod" } else { "miniaod" };
            (size, ns)
        })
        .collect();
    let picker = FilePicker::new(cfg.n_files, cfg.zipf_alpha);
    let daily = if cfg.mean_requests_per_day > 0.0 {
        Some(Poisson::new(cfg.mean_requests_per_day).map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let mut out = Vec::new();
    let mut fresh = 0u64;
    for day in cfg.start_date.iter_days().take_while(|d| *d < cfg.end_date) {
        let day_start = crate::day_start(day);
        let count = daily.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let mut times: Vec<i64> = (0..count)
            .map(|_| day_start + rng.random_range(0..SECONDS_PER_DAY))
            .collect();
        times.sort_unstable();
        let streaming = cfg
            .regime_shift
            .as_ref()
            .filter(|s| day >= s.date)
            .map_or(0.0, |s| s.streaming_fraction);
        for time in times {
            let user_id = format!("u{}", rng.random_range(0..cfg.n_users));
            let stream_read = streaming > 0.0 && rng.random::<f64>() < streaming;
            let (file_id, file_size, namespace) = if stream_read {
                fresh += 1;
                (format!("s{fresh}"), sample_size(&sizes, &mut rng), "miniaod")
            } else {
                let rank = picker.pick(&mut rng);
                let (size, ns) = catalog[rank];
                (format!("f{rank}"), size, ns)
            };
            out.push(FileRequest {
                time,
                user_id,
                file_id,
                file_size,
                request_size: file_size,
                namespace: namespace.to_string(),
            });
        }
    }
    Ok(out)
}

/// Daily summaries with a weekday/weekend cycle and multiplicative noise.
///
/// Used to exercise the forecaster where no real trace is at hand. Each row
/// satisfies the summary invariants (access = hit + miss, reuse <= hit).
pub fn synthetic_daily_series(start: NaiveDate, days: usize, noise: f64, seed: u64) -> Vec<DailySummary> {
    // Monday..Sunday
    const WEEKLY: [f64; 7] = [1.10, 1.18, 1.12, 1.05, 0.95, 0.55, 0.50];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let jitter = |rng: &mut ChaCha8Rng| (1.0 + gauss.sample(rng)).max(0.05);

    start
        .iter_days()
        .take(days)
        .map(|date| {
            let w = WEEKLY[date.weekday().num_days_from_monday() as usize];
            let hit_count = (18_000.0 * w * jitter(&mut rng)).round() as u64;
            let miss_count = (12_000.0 * w * jitter(&mut rng)).round() as u64;
            let hit_size = (hit_count as f64 * 6.0e8 * jitter(&mut rng)).round() as u64;
            let miss_size = (miss_count as f64 * 1.0e9 * jitter(&mut rng)).round() as u64;
            let reuse_count = ((hit_count as f64 * 0.6 * jitter(&mut rng)).round() as u64).min(hit_count);
            let reuse_size = ((hit_size as f64 * 0.5 * jitter(&mut rng)).round() as u64).min(hit_size);
            let unique_reused_files = if reuse_count == 0 { 0 } else { (reuse_count / 3).max(1) };
            DailySummary {
                date,
                scope: Scope::All,
                access_count: hit_count + miss_count,
                access_size: hit_size + miss_size,
                hit_count,
                hit_size,
                miss_count,
                miss_size,
                reuse_count,
                reuse_size,
                unique_reused_files,
            }
        })
        .collect()
}
