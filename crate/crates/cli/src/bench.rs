//! `bench`: per-minibatch latency of one sampler across buffer sizes.

use std::time::{Duration, Instant};

use rand::Rng;
use rr_replay::{RingBuffer, SamplerKind, SamplerUnit, SimRng, Stream};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub sizes: Vec<usize>,
    pub sampler: SamplerKind,
    pub batch: usize,
    /// Measurement time per size.
    pub secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Latency {
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p90_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeResult {
    pub size: usize,
    pub minibatches: usize,
    pub draws_per_sec: f64,
    pub latency: Latency,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub sampler: String,
    pub batch: usize,
    pub results: Vec<SizeResult>,
    /// Least-squares slope of log mean latency against log size.
    pub loglog_slope: Option<f64>,
    /// Mean latency at the largest size over that at the smallest.
    pub latency_ratio: Option<f64>,
}

/// Parses `1e3,1e4,5000` style size lists.
pub fn parse_sizes(list: &str) -> Result<Vec<usize>, CliError> {
    list.split(',')
        .map(|s| {
            let s = s.trim();
            let value: f64 = s
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid size '{s}'")))?;
            if !(value >= 1.0 && value.fract() == 0.0 && value <= 1e12) {
                return Err(CliError::Usage(format!("invalid size '{s}'")));
            }
            Ok(value as usize)
        })
        .collect()
}

fn percentile(sorted: &[u64], q: f64) -> u64 {
    let rank = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn bench_size(args: &BenchArgs, size: usize) -> Result<SizeResult, CliError> {
    let mut setup = SimRng::stream(size as u64, Stream::Setup);
    let mut buffer = RingBuffer::new(size)?;
    let mut unit = SamplerUnit::new(args.sampler, size)?;
    for _ in 0..size {
        let priority = setup.random_range(0.1..1.0);
        buffer.insert((), priority)?;
        let slot = buffer.len() - 1;
        unit.on_insert(slot, priority, false)?;
    }

    let mut shuffle_rng = SimRng::stream(0, Stream::Shuffle);
    let mut prefix_rng = SimRng::stream(0, Stream::Prefix);
    let budget = Duration::from_secs_f64(args.secs);
    let mut latencies = Vec::new();
    let start = Instant::now();
    while latencies.is_empty() || start.elapsed() < budget {
        let t = Instant::now();
        let drawn = unit.sample(&buffer, args.batch, &mut shuffle_rng, &mut prefix_rng)?;
        unit.maintain();
        latencies.push(t.elapsed().as_nanos() as u64);
        std::hint::black_box(drawn);
    }
    let total: u64 = latencies.iter().sum();
    latencies.sort_unstable();
    let n = latencies.len();
    Ok(SizeResult {
        size,
        minibatches: n,
        draws_per_sec: (n * args.batch) as f64 / (total.max(1) as f64 * 1e-9),
        latency: Latency {
            mean_ns: total as f64 / n as f64,
            p50_ns: percentile(&latencies, 0.5),
            p90_ns: percentile(&latencies, 0.9),
            p99_ns: percentile(&latencies, 0.99),
            max_ns: latencies[n - 1],
        },
    })
}

fn loglog_slope(results: &[SizeResult]) -> Option<f64> {
    if results.len() < 2 {
        return None;
    }
    let points: Vec<(f64, f64)> = results
        .iter()
        .map(|r| ((r.size as f64).ln(), r.latency.mean_ns.max(1.0).ln()))
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    if args.batch == 0 {
        return Err(CliError::Usage("batch must be positive".into()));
    }
    if args.sizes.is_empty() {
        return Err(CliError::Usage("no sizes given".into()));
    }
    if let Some(&size) = args.sizes.iter().find(|&&s| s < args.batch) {
        return Err(CliError::Usage(format!(
            "size {size} is smaller than batch {}",
            args.batch
        )));
    }
    if !(args.secs.is_finite() && args.secs > 0.0) {
        return Err(CliError::Usage("secs must be positive".into()));
    }
    let mut sizes = args.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let results = sizes
        .iter()
        .map(|&size| bench_size(args, size))
        .collect::<Result<Vec<_>, _>>()?;
    let latency_ratio = match (results.first(), results.last()) {
        (Some(a), Some(b)) if results.len() > 1 => Some(b.latency.mean_ns / a.latency.mean_ns),
        _ => None,
    };
    Ok(BenchReport {
        sampler: args.sampler.to_string(),
        batch: args.batch,
        loglog_slope: loglog_slope(&results),
        latency_ratio,
        results,
    })
}
