//! Named verification suites for the bias and variance properties of the
//! reshuffling samplers. Each suite returns a [`CheckReport`] with the
//! observed and expected quantities and a pass/fail verdict.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{ReplayError, Result};
use crate::exact::{self, TinyRun};
use crate::rng::{SimRng, Stream};
use crate::rrm::RrmSampler;
use crate::sim::{run_ensemble, SampleCountMatrix, SamplerKind, SimConfig};
use crate::stats::{aggregate, compare, uer_oracle_values, Tolerance};
use crate::sumtree::SumTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    RrcBiasExample,
    RrcUnbiased,
    RrcVariance,
    WrOracle,
    RrmBiasExample,
    RrmTable3,
    RrmDeviation,
    RrmVarianceBound,
    SumtreeLaw,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::RrcBiasExample,
        Suite::RrcUnbiased,
        Suite::RrcVariance,
        Suite::WrOracle,
        Suite::RrmBiasExample,
        Suite::RrmTable3,
        Suite::RrmDeviation,
        Suite::RrmVarianceBound,
        Suite::SumtreeLaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::RrcBiasExample => "rrc-bias-example",
            Suite::RrcUnbiased => "rrc-unbiased",
            Suite::RrcVariance => "rrc-variance",
            Suite::WrOracle => "wr-oracle",
            Suite::RrmBiasExample => "rrm-bias-example",
            Suite::RrmTable3 => "rrm-table3",
            Suite::RrmDeviation => "rrm-deviation",
            Suite::RrmVarianceBound => "rrm-variance-bound",
            Suite::SumtreeLaw => "sumtree-law",
        }
    }

    /// Seed count used when none is given.
    pub fn default_seeds(self) -> usize {
        match self {
            Suite::RrcBiasExample => 1,
            Suite::RrcUnbiased | Suite::RrcVariance | Suite::WrOracle => 1000,
            Suite::RrmBiasExample => 100_000,
            Suite::RrmTable3 | Suite::RrmDeviation | Suite::RrmVarianceBound => 100,
            Suite::SumtreeLaw => 1,
        }
    }

    pub fn run(self, seeds: Option<usize>) -> Result<CheckReport> {
        let seeds = seeds.unwrap_or(self.default_seeds());
        if seeds == 0 {
            return Err(ReplayError::InvalidConfig("seeds must be positive".into()));
        }
        match self {
            Suite::RrcBiasExample => rrc_bias_example(),
            Suite::RrcUnbiased => rrc_unbiased(seeds),
            Suite::RrcVariance => rrc_variance(seeds),
            Suite::WrOracle => wr_oracle(seeds),
            Suite::RrmBiasExample => rrm_bias_example(seeds),
            Suite::RrmTable3 => rrm_table3(seeds),
            Suite::RrmDeviation => rrm_deviation(seeds, SIMPLIFIED_STEPS),
            Suite::RrmVarianceBound => rrm_variance_bound(seeds, SIMPLIFIED_STEPS),
            Suite::SumtreeLaw => sumtree_law(1_000_000, 100_000),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = ReplayError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| ReplayError::InvalidConfig(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suite: Suite,
    pub passed: bool,
    /// Named observed and expected quantities.
    pub metrics: BTreeMap<&'static str, f64>,
    /// Human-readable detail, one line each.
    pub lines: Vec<String>,
}

impl CheckReport {
    fn new(suite: Suite) -> Self {
        CheckReport {
            suite,
            passed: true,
            metrics: BTreeMap::new(),
            lines: Vec::new(),
        }
    }

    fn metric(&mut self, name: &'static str, value: f64) {
        self.metrics.insert(name, value);
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines
            .push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    pub fn get(&self, name: &str) -> f64 {
        self.metrics.get(name).copied().unwrap_or(f64::NAN)
    }
}

/// Minibatch draws of the simplified setting: a full buffer, no insertions, batch 1.
pub const SIMPLIFIED_STEPS: usize = 10_000;
pub const SIMPLIFIED_CAPACITY: usize = 20;

fn fig3(sampler: SamplerKind, seeds: usize) -> SimConfig {
    SimConfig::preset("fig3")
        .expect("fig3 preset")
        .with_sampler(sampler)
        .with_seeds(seeds)
}

/// Exact expectations at B = R = 1, C = 2 for transition 0 up to timestep 1.
pub fn rrc_bias_example() -> Result<CheckReport> {
    let run = TinyRun {
        capacity: 2,
        replay_start: 1,
        batch: 1,
        timesteps: 2,
    };
    let rrc = exact::rrc_mean_count(run, 0)?;
    let uer = exact::uer_mean_count(run, 0)?;
    let mut r = CheckReport::new(Suite::RrcBiasExample);
    r.metric("rrc", rrc);
    r.metric("uer", uer);
    r.check(
        rrc == 1.25,
        format!("E[X_0,1] under RR-C = {rrc} (expected 1.25)"),
    );
    r.check(
        uer == 1.5,
        format!("E[X_0,1] under WR = {uer} (expected 1.5)"),
    );
    Ok(r)
}

/// fig3 RR-C means against the with-replacement mean for steady-state ids.
pub fn rrc_unbiased(seeds: usize) -> Result<CheckReport> {
    let config = fig3(SamplerKind::Rrc, seeds);
    let stats = aggregate(&run_ensemble(&config)?)?;
    let oracle = uer_oracle_values(
        config.capacity,
        config.batch,
        config.timesteps,
        config.steady_state_ids(),
    )?;
    let report = compare(&stats, &oracle, Tolerance::default())?;
    let mut r = CheckReport::new(Suite::RrcUnbiased);
    let worst = report
        .verdicts
        .iter()
        .map(|v| v.mean_error.abs())
        .fold(0.0, f64::max);
    r.metric("ids", oracle.len() as f64);
    r.metric("mean_failures", report.mean_failures() as f64);
    r.metric("max_abs_mean_error", worst);
    for v in report.verdicts.iter().filter(|v| !v.mean_ok) {
        let s = &stats.per_id[v.id];
        r.check(
            false,
            format!(
                "id {}: mean {:.4} vs {:.4}, 3 SE = {:.4}",
                v.id,
                s.mean,
                s.mean - v.mean_error,
                3.0 * s.mean_se(stats.seeds).unwrap_or(0.0)
            ),
        );
    }
    r.check(
        report.mean_failures() == 0,
        format!(
            "{} of {} steady-state ids within 3 SE of {} (max |error| {worst:.4})",
            oracle.len() - report.mean_failures(),
            oracle.len(),
            oracle[0].mean
        ),
    );
    Ok(r)
}

/// fig3: RR-C variance never exceeds with-replacement variance beyond a 3-SE band.
pub fn rrc_variance(seeds: usize) -> Result<CheckReport> {
    let rrc_config = fig3(SamplerKind::Rrc, seeds);
    let rrc = aggregate(&run_ensemble(&rrc_config)?)?;
    let wr = aggregate(&run_ensemble(&fig3(SamplerKind::Wr, seeds))?)?;
    let mut r = CheckReport::new(Suite::RrcVariance);
    let mut violations = 0;
    let (mut max_rrc, mut min_wr) = (0.0f64, f64::INFINITY);
    for id in rrc_config.steady_state_ids() {
        let (a, b) = (&rrc.per_id[id], &wr.per_id[id]);
        let (va, vb) = (a.var().unwrap_or(0.0), b.var().unwrap_or(0.0));
        let band = 3.0 * (a.var_se.unwrap_or(0.0).powi(2) + b.var_se.unwrap_or(0.0).powi(2)).sqrt();
        max_rrc = max_rrc.max(va);
        min_wr = min_wr.min(vb);
        if va > vb + band {
            violations += 1;
            r.check(
                false,
                format!("id {id}: Var RR-C {va:.4} > Var WR {vb:.4} + {band:.4}"),
            );
        }
    }
    r.metric("violations", violations as f64);
    r.metric("max_var_rrc", max_rrc);
    r.metric("min_var_wr", min_wr);
    r.check(
        violations == 0,
        format!("steady-state variance: RR-C max {max_rrc:.4}, WR min {min_wr:.4}"),
    );
    Ok(r)
}

/// fig3 with-replacement ensemble against the closed-form mean and variance.
pub fn wr_oracle(seeds: usize) -> Result<CheckReport> {
    let config = fig3(SamplerKind::Wr, seeds);
    let stats = aggregate(&run_ensemble(&config)?)?;
    let oracle = uer_oracle_values(
        config.capacity,
        config.batch,
        config.timesteps,
        config.steady_state_ids(),
    )?;
    let report = compare(&stats, &oracle, Tolerance::default())?;
    let mut r = CheckReport::new(Suite::WrOracle);
    let mean_failures = report.mean_failures();
    let var_failures = report.verdicts.iter().filter(|v| !v.var_ok).count();
    r.metric("mean_failures", mean_failures as f64);
    r.metric("var_failures", var_failures as f64);
    let avg_var = oracle
        .iter()
        .map(|o| stats.per_id[o.id].var().unwrap_or(0.0))
        .sum::<f64>()
        / oracle.len() as f64;
    r.metric("avg_var", avg_var);
    for v in report.failures() {
        let s = &stats.per_id[v.id];
        r.check(
            false,
            format!(
                "id {}: mean {:.4} var {:.4} (mean ok: {}, var ok: {})",
                v.id,
                s.mean,
                s.var().unwrap_or(0.0),
                v.mean_ok,
                v.var_ok
            ),
        );
    }
    r.check(
        mean_failures == 0 && var_failures == 0,
        format!(
            "{} ids: mean {} and variance {} matched within 3 SE (average variance {avg_var:.4})",
            oracle.len(),
            oracle[0].mean,
            oracle[0].var
        ),
    );
    Ok(r)
}

fn rrm_counterexample_count(seed: u64) -> Result<u32> {
    let priorities = [0.6, 0.4, 0.0];
    let mut rrm = RrmSampler::new(3)?;
    let mut rng = SimRng::stream(seed, Stream::Prefix);
    let mut count = 0;
    for (t, &p) in priorities.iter().enumerate() {
        rrm.on_insert(t, p, false)?;
        if t + 1 >= 2 && rrm.sample(1, &mut rng)? == [0] {
            count += 1;
        }
    }
    Ok(count)
}

/// B = 1, R = 2, C = 3, p = [0.6, 0.4, 0]: RR-M samples transition 0 once in
/// expectation, prioritized with-replacement sampling 1.2 times.
pub fn rrm_bias_example(seeds: usize) -> Result<CheckReport> {
    let run = TinyRun {
        capacity: 3,
        replay_start: 2,
        batch: 1,
        timesteps: 3,
    };
    let priorities = [0.6, 0.4, 0.0];
    let exact_rrm = exact::rrm_mean_count(run, &priorities, 0)?;
    let exact_per = exact::per_mean_count(run, &priorities, 0)?;
    let counts = (0..seeds as u64)
        .into_par_iter()
        .map(rrm_counterexample_count)
        .collect::<Result<Vec<_>>>()?;
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = if counts.len() > 1 {
        counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();

    let mut r = CheckReport::new(Suite::RrmBiasExample);
    r.metric("mc_mean", mean);
    r.metric("mc_se", se);
    r.metric("exact_rrm", exact_rrm);
    r.metric("exact_per", exact_per);
    r.check(
        (mean - 1.0).abs() <= 3.0 * se,
        format!(
            "Monte Carlo E[X_0,2] under RR-M = {mean} ± {se:.2e} over {seeds} seeds (expected 1.0)"
        ),
    );
    r.check(
        (exact_rrm - 1.0).abs() < 1e-6,
        format!("enumerated E[X_0,2] under RR-M = {exact_rrm:.12} (1.0 up to the 1e-8 mask tail)"),
    );
    r.check(
        (exact_per - 1.2).abs() < 1e-12,
        format!("E[X_0,2] under prioritized WR = {exact_per} (expected 1.2)"),
    );
    Ok(r)
}

/// Priorities [1, 0.5, 2], seven single draws: every seed ends at [2, 1, 4].
pub fn rrm_table3(seeds: usize) -> Result<CheckReport> {
    let finals = (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let mut rrm = RrmSampler::with_priorities(&[1.0, 0.5, 2.0])?;
            let mut rng = SimRng::stream(seed, Stream::Prefix);
            for _ in 0..7 {
                rrm.sample(1, &mut rng)?;
            }
            Ok(rrm.ledger().actual().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let mismatches = finals.iter().filter(|c| c.as_slice() != [2, 1, 4]).count();
    let mut r = CheckReport::new(Suite::RrmTable3);
    r.metric("mismatches", mismatches as f64);
    r.check(
        mismatches == 0,
        format!(
            "{} of {seeds} seeds ended with counts [2, 1, 4]",
            seeds - mismatches
        ),
    );
    Ok(r)
}

/// Outcome of the simplified-setting runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedOutcome {
    pub priorities: Vec<f64>,
    pub min_deviation: f64,
    pub max_deviation: f64,
    pub final_counts: SampleCountMatrix,
}

/// Fixed priorities, drawn once in `[0.1, 1)` from the setup stream of seed 0.
pub fn simplified_priorities(capacity: usize) -> Vec<f64> {
    let mut rng = SimRng::stream(0, Stream::Setup);
    (0..capacity).map(|_| rng.random_range(0.1..1.0)).collect()
}

/// Full buffer of `capacity` transitions with fixed priorities, no further
/// insertions, `steps` single-sample RR-M draws per seed. Tracks the extreme
/// `actual - expected` over every slot after every draw.
pub fn rrm_simplified(capacity: usize, steps: usize, seeds: usize) -> Result<SimplifiedOutcome> {
    let priorities = simplified_priorities(capacity);
    let per_seed = (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let mut rrm = RrmSampler::with_priorities(&priorities)?;
            let mut rng = SimRng::stream(seed, Stream::Prefix);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for _ in 0..steps {
                rrm.sample(1, &mut rng)?;
                rrm.rebuild_if_due(crate::sim::REBUILD_INTERVAL);
                for slot in 0..capacity {
                    let d = rrm.ledger().deviation(slot)?;
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            let counts = rrm.ledger().actual().iter().map(|&a| a as u32).collect();
            Ok((lo, hi, counts))
        })
        .collect::<Result<Vec<(f64, f64, Vec<u32>)>>>()?;
    let min_deviation = per_seed.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_deviation = per_seed
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let rows = per_seed.into_iter().map(|s| s.2).collect();
    Ok(SimplifiedOutcome {
        priorities,
        min_deviation,
        max_deviation,
        final_counts: SampleCountMatrix::from_rows(rows)?,
    })
}

/// Every deviation stays strictly inside (1 - C, 1).
pub fn rrm_deviation(seeds: usize, steps: usize) -> Result<CheckReport> {
    let c = SIMPLIFIED_CAPACITY;
    let out = rrm_simplified(c, steps, seeds)?;
    let (lo, hi) = (1.0 - c as f64, 1.0);
    let mut r = CheckReport::new(Suite::RrmDeviation);
    r.metric("min_deviation", out.min_deviation);
    r.metric("max_deviation", out.max_deviation);
    r.check(
        out.min_deviation > lo && out.max_deviation < hi,
        format!(
            "actual - expected ranged over [{:.4}, {:.4}] (bound ({lo}, {hi})) across {seeds} seeds × {steps} draws",
            out.min_deviation, out.max_deviation
        ),
    );
    Ok(r)
}

/// Sample variance of final counts across seeds stays below C² / 4.
pub fn rrm_variance_bound(seeds: usize, steps: usize) -> Result<CheckReport> {
    let c = SIMPLIFIED_CAPACITY;
    let out = rrm_simplified(c, steps, seeds)?;
    let stats = aggregate(&out.final_counts)?;
    let max_var = stats
        .per_id
        .iter()
        .map(|s| s.var().unwrap_or(0.0))
        .fold(0.0, f64::max);
    let bound = (c * c) as f64 / 4.0;
    let mut r = CheckReport::new(Suite::RrmVarianceBound);
    r.metric("max_var", max_var);
    r.metric("bound", bound);
    // prioritized with-replacement variance of the same slots, for reference
    let total: f64 = out.priorities.iter().sum();
    let min_per_var = out
        .priorities
        .iter()
        .map(|p| crate::stats::per_var_oracle(p / total, 0, steps - 1))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    r.metric("min_per_var", min_per_var);
    r.check(
        max_var < bound,
        format!(
            "largest per-slot variance {max_var:.4} < {bound} (prioritized WR would give at least {min_per_var:.1})"
        ),
    );
    Ok(r)
}

/// Prefix-sampling frequencies and tree consistency.
pub fn sumtree_law(draws: usize, updates: usize) -> Result<CheckReport> {
    let tree = SumTree::from_priorities(&[1.0, 0.5, 2.0])?;
    let mut rng = SimRng::stream(0, Stream::Prefix);
    let mut hits = [0u64; 3];
    for _ in 0..draws {
        hits[tree.draw(&mut rng)?] += 1;
    }
    let mut r = CheckReport::new(Suite::SumtreeLaw);
    let n = draws as f64;
    for (slot, p) in [2.0 / 7.0, 1.0 / 7.0, 4.0 / 7.0].into_iter().enumerate() {
        let freq = hits[slot] as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        r.check(
            (freq - p).abs() <= 3.0 * sigma,
            format!(
                "slot {slot}: frequency {freq:.6} vs {p:.6} (3σ = {:.6})",
                3.0 * sigma
            ),
        );
        r.metric(["freq0", "freq1", "freq2"][slot], freq);
    }

    let capacity = 1000;
    let mut tree = SumTree::new(capacity)?;
    let mut leaves = vec![0.0; capacity];
    let mut setup = SimRng::stream(0, Stream::Setup);
    for _ in 0..updates {
        let slot = setup.random_range(0..capacity);
        let p = setup.random_range(0.0..100.0);
        tree.set(slot, p)?;
        leaves[slot] = p;
    }
    let inconsistency = tree.max_relative_inconsistency();
    let direct: f64 = leaves.iter().sum();
    let root_error = (tree.total() - direct).abs() / direct;
    r.metric("inconsistency", inconsistency);
    r.metric("root_error", root_error);
    r.check(
        inconsistency <= 1e-9 && root_error <= 1e-9,
        format!(
            "after {updates} updates: node inconsistency {inconsistency:.2e}, root vs direct sum {root_error:.2e}"
        ),
    );
    Ok(r)
}
