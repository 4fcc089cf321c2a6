//! `simulate`: run an ensemble and write its statistics.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rr_replay::sim::run_ensemble;
use rr_replay::stats::{
    aggregate, compare, uer_oracle_values, ComparisonReport, OracleValue, Tolerance,
};
use rr_replay::{SampleCountMatrix, SamplerKind, SimConfig};
use serde::Serialize;

use crate::config::{self, ConfigBuilder};
use crate::output;
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub sampler: Option<SamplerKind>,
    pub seeds: Option<usize>,
    pub raw: bool,
    pub out: PathBuf,
}

/// Resolution order: fig3 defaults, then `--preset`, then the config file,
/// then `--sampler` / `--seeds`.
pub fn resolve(args: &SimulateArgs) -> Result<SimConfig, CliError> {
    let mut builder = match &args.preset {
        Some(name) => ConfigBuilder::from_preset(name).map_err(CliError::Usage)?,
        None => ConfigBuilder::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(CliError::io(format!("reading {}", path.display())))?;
        builder.apply_text(&text)?;
    }
    if let Some(sampler) = args.sampler {
        builder.sampler(sampler);
    }
    if let Some(seeds) = args.seeds {
        builder.seeds(seeds);
    }
    builder.build()
}

#[derive(Debug, Clone, Serialize)]
pub struct Conservation {
    pub expected: u64,
    pub min: u64,
    pub max: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub checked: usize,
    pub passed: usize,
    pub failed: usize,
    pub mean_failures: usize,
    pub variance_checked: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub sampler: String,
    pub seeds: usize,
    pub ids: usize,
    pub max_count: u32,
    pub conservation: Conservation,
    pub oracle: Option<OracleSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub tool_version: &'static str,
    pub duration_secs: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub config: SimConfig,
    pub summary: Summary,
    pub manifest: RunManifest,
}

/// The with-replacement oracle applies to the uniform samplers. Its mean
/// holds for all three; its variance only for `wr`.
fn oracle_for(config: &SimConfig) -> Option<(Vec<OracleValue>, Tolerance)> {
    let var_se = match config.sampler {
        SamplerKind::Wr => 3.0,
        SamplerKind::Wor | SamplerKind::Rrc => f64::INFINITY,
        _ => return None,
    };
    if config.seeds < 2 {
        return None;
    }
    let values = uer_oracle_values(
        config.capacity,
        config.batch,
        config.timesteps,
        config.steady_state_ids(),
    )
    .ok()?;
    Some((
        values,
        Tolerance {
            mean_se: 3.0,
            var_se,
        },
    ))
}

fn conservation(config: &SimConfig, matrix: &SampleCountMatrix) -> Conservation {
    let totals: Vec<u64> = matrix
        .rows
        .iter()
        .map(|r| r.iter().map(|&c| u64::from(c)).sum())
        .collect();
    let expected = config.total_draws();
    let min = totals.iter().copied().min().unwrap_or(0);
    let max = totals.iter().copied().max().unwrap_or(0);
    Conservation {
        expected,
        min,
        max,
        ok: min == expected && max == expected,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(format!("writing {}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateOutcome, CliError> {
    let config = resolve(args)?;
    let start = Instant::now();
    let matrix = run_ensemble(&config)?;
    let stats = aggregate(&matrix)?;

    let (oracle, report) = match oracle_for(&config) {
        Some((values, tolerance)) => {
            let report = compare(&stats, &values, tolerance)?;
            (values, Some((report, tolerance)))
        }
        None => (Vec::new(), None),
    };
    let verdicts = report
        .as_ref()
        .map(|(r, _)| r.verdicts.as_slice())
        .unwrap_or(&[]);
    let oracle_summary = report
        .as_ref()
        .map(|(r, t): &(ComparisonReport, Tolerance)| {
            let failed = r.failures().len();
            OracleSummary {
                checked: r.verdicts.len(),
                passed: r.verdicts.len() - failed,
                failed,
                mean_failures: r.mean_failures(),
                variance_checked: t.var_se.is_finite(),
            }
        });

    fs::create_dir_all(&args.out)
        .map_err(CliError::io(format!("creating {}", args.out.display())))?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, contents: &str| -> Result<(), CliError> {
        let path = args.out.join(name);
        write(&path, contents)?;
        outputs.push(path.display().to_string());
        Ok(())
    };

    emit("stats.csv", &output::stats_csv(&stats, &oracle, verdicts))?;
    if args.raw {
        emit("raw.csv", &output::raw_csv(&matrix))?;
    }
    let summary = Summary {
        sampler: config.sampler.to_string(),
        seeds: config.seeds,
        ids: matrix.ids(),
        max_count: matrix.max(),
        conservation: conservation(&config, &matrix),
        oracle: oracle_summary,
    };
    emit("summary.json", &json(&summary))?;

    let manifest_path = args.out.join("manifest.json");
    outputs.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        config_digest: config::digest(&config),
        tool_version: env!("CARGO_PKG_VERSION"),
        duration_secs: start.elapsed().as_secs_f64(),
        outputs,
    };
    write(&manifest_path, &json(&manifest))?;

    Ok(SimulateOutcome {
        config,
        summary,
        manifest,
    })
}
