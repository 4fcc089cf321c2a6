//! Seeded replay simulations: insert one transition per timestep, draw a
//! minibatch once the buffer holds `replay_start` transitions, and record how
//! often every transition was sampled.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::buffer::RingBuffer;
use crate::error::{ReplayError, Result};
use crate::rng::{SimRng, Stream};
use crate::rrm::RrmSampler;
use crate::sumtree::SumTree;
use crate::uniform::{sample_rrc, sample_wor, sample_wr, EpochShuffler};

/// Sum trees are rebuilt from their leaves after this many leaf writes.
pub const REBUILD_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    /// Uniform, with replacement.
    Wr,
    /// Uniform, without replacement within a minibatch.
    Wor,
    /// Prioritized, one prefix query per equal-mass stratum.
    Stratified,
    /// Uniform random reshuffling over circular-buffer slots.
    Rrc,
    /// Prioritized random reshuffling by masking.
    Rrm,
    /// Prioritized, with replacement.
    PerWr,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::Wr,
        SamplerKind::Wor,
        SamplerKind::Stratified,
        SamplerKind::Rrc,
        SamplerKind::Rrm,
        SamplerKind::PerWr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Wr => "wr",
            SamplerKind::Wor => "wor",
            SamplerKind::Stratified => "stratified",
            SamplerKind::Rrc => "rrc",
            SamplerKind::Rrm => "rrm",
            SamplerKind::PerWr => "per-wr",
        }
    }

    pub fn is_prioritized(self) -> bool {
        matches!(
            self,
            SamplerKind::Stratified | SamplerKind::Rrm | SamplerKind::PerWr
        )
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = ReplayError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                ReplayError::InvalidConfig(format!(
                    "unknown sampler '{s}' (expected one of wr, wor, stratified, rrc, rrm, per-wr)"
                ))
            })
    }
}

/// How priorities are assigned at insertion and how they change when sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorityScheme {
    /// Every transition has priority 1 forever.
    Uniform,
    /// `p_t = (t mod modulus) + offset`, multiplied by `decay` per appearance in a minibatch.
    Modular {
        modulus: u64,
        offset: f64,
        decay: f64,
    },
    /// `p_t = priorities[t]`, multiplied by `decay` per appearance in a minibatch.
    Listed { priorities: Vec<f64>, decay: f64 },
}

impl PriorityScheme {
    pub fn initial(&self, t: u64) -> f64 {
        match self {
            PriorityScheme::Uniform => 1.0,
            PriorityScheme::Modular {
                modulus, offset, ..
            } => (t % modulus) as f64 + offset,
            PriorityScheme::Listed { priorities, .. } => priorities[t as usize],
        }
    }

    pub fn decay(&self) -> f64 {
        match self {
            PriorityScheme::Uniform => 1.0,
            PriorityScheme::Modular { decay, .. } | PriorityScheme::Listed { decay, .. } => *decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub timesteps: usize,
    pub capacity: usize,
    pub replay_start: usize,
    pub batch: usize,
    pub sampler: SamplerKind,
    pub priority: PriorityScheme,
    pub seeds: usize,
    pub base_seed: u64,
}

impl SimConfig {
    pub const PRESETS: [&'static str; 4] = ["fig3", "fig5", "fig6", "fig7"];

    /// Named experiment configurations. All use 1000 seeds, base seed 0,
    /// priority decay 0.8 and the with-replacement sampler.
    pub fn preset(name: &str) -> Option<SimConfig> {
        let (timesteps, capacity, replay_start, batch, modulus, offset) = match name {
            "fig3" => (100, 20, 10, 4, 25, 5.0),
            "fig5" => (100, 20, 10, 8, 25, 5.0),
            "fig6" => (1000, 200, 100, 4, 250, 50.0),
            "fig7" => (1000, 200, 100, 8, 250, 50.0),
            _ => return None,
        };
        Some(SimConfig {
            timesteps,
            capacity,
            replay_start,
            batch,
            sampler: SamplerKind::Wr,
            priority: PriorityScheme::Modular {
                modulus,
                offset,
                decay: 0.8,
            },
            seeds: 1000,
            base_seed: 0,
        })
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_seeds(mut self, seeds: usize) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ReplayError::InvalidConfig(msg));
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if !(self.batch <= self.replay_start
            && self.replay_start <= self.capacity
            && self.capacity <= self.timesteps)
        {
            return bad(format!(
                "need batch <= replay_start <= capacity <= timesteps, got {} <= {} <= {} <= {}",
                self.batch, self.replay_start, self.capacity, self.timesteps
            ));
        }
        if self.seeds == 0 {
            return bad("seeds must be positive".into());
        }
        let decay = self.priority.decay();
        if !(decay > 0.0 && decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {decay}"));
        }
        match &self.priority {
            PriorityScheme::Uniform => {}
            PriorityScheme::Modular {
                modulus, offset, ..
            } => {
                if *modulus == 0 {
                    return bad("modulus must be positive".into());
                }
                if !(offset.is_finite() && *offset >= 0.0) {
                    return bad(format!("offset must be finite and >= 0, got {offset}"));
                }
            }
            PriorityScheme::Listed { priorities, .. } => {
                if priorities.len() < self.timesteps {
                    return bad(format!(
                        "{} listed priorities for {} timesteps",
                        priorities.len(),
                        self.timesteps
                    ));
                }
                if let Some(p) = priorities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return bad(format!(
                        "listed priority {p} is not a finite non-negative number"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Total number of slot draws in one run.
    pub fn total_draws(&self) -> u64 {
        (self.batch * (self.timesteps + 1 - self.replay_start)) as u64
    }

    /// Ids inserted into a full buffer and evicted before the run ends:
    /// `capacity .. timesteps - capacity`.
    pub fn steady_state_ids(&self) -> std::ops::Range<usize> {
        self.capacity..self.timesteps.saturating_sub(self.capacity)
    }
}

/// Final sample counts, one row per seed and one column per transition id.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCountMatrix {
    pub seeds: Vec<u64>,
    pub rows: Vec<Vec<u32>>,
}

impl SampleCountMatrix {
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self> {
        let seeds = (0..rows.len() as u64).collect();
        let m = SampleCountMatrix { seeds, rows };
        m.check()?;
        Ok(m)
    }

    pub fn ids(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn column(&self, id: usize) -> impl Iterator<Item = u32> + '_ {
        self.rows.iter().map(move |r| r[id])
    }

    pub fn max(&self) -> u32 {
        self.rows.iter().flatten().copied().max().unwrap_or(0)
    }

    fn check(&self) -> Result<()> {
        let ids = self.ids();
        if self.rows.iter().any(|r| r.len() != ids) {
            return Err(ReplayError::InvalidConfig("ragged count matrix".into()));
        }
        if self.seeds.len() != self.rows.len() {
            return Err(ReplayError::InvalidConfig(
                "seed labels do not match rows".into(),
            ));
        }
        Ok(())
    }
}

/// Sampler state for one buffer: whatever the configured sampler keeps
/// between minibatches.
pub enum SamplerUnit {
    Wr,
    Wor,
    Rrc(EpochShuffler),
    PerWr(SumTree),
    Stratified(SumTree),
    Rrm(RrmSampler),
}

impl SamplerUnit {
    pub fn new(kind: SamplerKind, capacity: usize) -> Result<Self> {
        Ok(match kind {
            SamplerKind::Wr => SamplerUnit::Wr,
            SamplerKind::Wor => SamplerUnit::Wor,
            SamplerKind::Rrc => SamplerUnit::Rrc(EpochShuffler::new(capacity)?),
            SamplerKind::PerWr => SamplerUnit::PerWr(SumTree::new(capacity)?),
            SamplerKind::Stratified => SamplerUnit::Stratified(SumTree::new(capacity)?),
            SamplerKind::Rrm => SamplerUnit::Rrm(RrmSampler::new(capacity)?),
        })
    }

    /// Registers the transition just written to `slot`.
    pub fn on_insert(&mut self, slot: usize, priority: f64, evicted: bool) -> Result<()> {
        match self {
            SamplerUnit::Wr | SamplerUnit::Wor | SamplerUnit::Rrc(_) => Ok(()),
            SamplerUnit::PerWr(tree) | SamplerUnit::Stratified(tree) => tree.set(slot, priority),
            SamplerUnit::Rrm(rrm) => rrm.on_insert(slot, priority, evicted),
        }
    }

    pub fn set_priority(&mut self, slot: usize, priority: f64) -> Result<()> {
        match self {
            SamplerUnit::Wr | SamplerUnit::Wor | SamplerUnit::Rrc(_) => Ok(()),
            SamplerUnit::PerWr(tree) | SamplerUnit::Stratified(tree) => tree.set(slot, priority),
            SamplerUnit::Rrm(rrm) => rrm.set_priority(slot, priority),
        }
    }

    pub fn sample<P>(
        &mut self,
        buffer: &RingBuffer<P>,
        batch: usize,
        shuffle_rng: &mut SimRng,
        prefix_rng: &mut SimRng,
    ) -> Result<Vec<usize>> {
        match self {
            SamplerUnit::Wr => sample_wr(buffer, batch, prefix_rng),
            SamplerUnit::Wor => sample_wor(buffer, batch, prefix_rng),
            SamplerUnit::Rrc(shuffler) => sample_rrc(buffer, batch, shuffler, shuffle_rng),
            SamplerUnit::PerWr(tree) => tree.sample_wr(batch, prefix_rng),
            SamplerUnit::Stratified(tree) => tree.sample_stratified(batch, prefix_rng),
            SamplerUnit::Rrm(rrm) => rrm.sample(batch, prefix_rng),
        }
    }

    /// Periodic sum-tree rebuild.
    pub fn maintain(&mut self) {
        match self {
            SamplerUnit::PerWr(tree) | SamplerUnit::Stratified(tree) => {
                if tree.writes_since_rebuild() >= REBUILD_INTERVAL {
                    tree.rebuild();
                }
            }
            SamplerUnit::Rrm(rrm) => {
                rrm.rebuild_if_due(REBUILD_INTERVAL);
            }
            _ => {}
        }
    }
}

/// One simulation; returns the final sample count of every transition id.
pub fn run_sim(config: &SimConfig, seed: u64) -> Result<Vec<u32>> {
    config.validate()?;
    let mut buffer = RingBuffer::new(config.capacity)?;
    let mut unit = SamplerUnit::new(config.sampler, config.capacity)?;
    let mut shuffle_rng = SimRng::stream(seed, Stream::Shuffle);
    let mut prefix_rng = SimRng::stream(seed, Stream::Prefix);
    let decay = config.priority.decay();
    let decays = config.sampler.is_prioritized() && decay != 1.0;
    let mut counts = vec![0u32; config.timesteps];

    for t in 0..config.timesteps as u64 {
        let priority = config.priority.initial(t);
        let evicted = buffer.insert((), priority)?;
        let slot = buffer.slot_of(t);
        unit.on_insert(slot, priority, evicted.is_some())?;

        if buffer.len() < config.replay_start {
            continue;
        }
        let drawn = unit.sample(&buffer, config.batch, &mut shuffle_rng, &mut prefix_rng)?;
        for slot in drawn {
            let transition = buffer.get(slot)?.ok_or(ReplayError::UnoccupiedSlot(slot))?;
            counts[transition.id as usize] += 1;
            if decays {
                let p = transition.priority * decay;
                buffer.set_priority(slot, p)?;
                unit.set_priority(slot, p)?;
            }
        }
        unit.maintain();
    }
    Ok(counts)
}

/// Runs seeds `base_seed .. base_seed + seeds` in parallel. Rows come back in
/// seed order, so the matrix does not depend on scheduling.
pub fn run_ensemble(config: &SimConfig) -> Result<SampleCountMatrix> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.seeds as u64)
        .map(|i| config.base_seed.wrapping_add(i))
        .collect();
    let rows = seeds
        .par_iter()
        .map(|&seed| run_sim(config, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleCountMatrix { seeds, rows })
}
