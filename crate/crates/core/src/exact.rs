//! Exact expected sample counts for tiny configurations, by enumerating every
//! random outcome of the samplers themselves.
//!
//! These are exponential in the run length and only meant for hand-checkable
//! cases with a few slots and timesteps.

use crate::buffer::RingBuffer;
use crate::error::{ReplayError, Result};
use crate::rrm::RrmSampler;
use crate::sumtree::SumTree;
use crate::uniform::{sample_rrc, EpochShuffler, PermutationSource};

/// Shape of a tiny replay run. Transition `t` is inserted at timestep `t`
/// and a minibatch is drawn whenever the buffer holds `replay_start` items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyRun {
    pub capacity: usize,
    pub replay_start: usize,
    pub batch: usize,
    pub timesteps: usize,
}

impl TinyRun {
    fn check(&self, id: usize) -> Result<()> {
        if self.capacity == 0 || self.capacity > 6 {
            return Err(ReplayError::OracleDomain(
                "exact enumeration supports capacities 1..=6".into(),
            ));
        }
        if self.batch == 0 || self.batch > self.replay_start || self.replay_start > self.capacity {
            return Err(ReplayError::InvalidConfig(format!("{self:?}")));
        }
        if id >= self.timesteps {
            return Err(ReplayError::OracleDomain(format!(
                "id {id} is never inserted"
            )));
        }
        Ok(())
    }

    fn sampling_len(&self, t: usize) -> Option<usize> {
        let len = (t + 1).min(self.capacity);
        (len >= self.replay_start).then_some(len)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Hands out a fixed list of permutations, then reports exhaustion.
struct Scripted<'a> {
    perms: &'a [Vec<usize>],
    script: &'a [usize],
    used: usize,
    exhausted: bool,
}

impl PermutationSource for Scripted<'_> {
    fn permute(&mut self, indices: &mut [usize]) {
        match self.script.get(self.used) {
            Some(&j) => indices.copy_from_slice(&self.perms[j]),
            None => self.exhausted = true,
        }
        self.used += 1;
    }
}

/// `E[X_{id, T-1}]` under RR-C. Branches over every permutation each time the
/// shuffler regenerates; a completed script of `L` permutations has
/// probability `(1 / C!)^L`.
pub fn rrc_mean_count(run: TinyRun, id: usize) -> Result<f64> {
    run.check(id)?;
    let perms = permutations(run.capacity);
    let weight = 1.0 / perms.len() as f64;
    let mut expectation = 0.0;
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(script) = stack.pop() {
        let mut source = Scripted {
            perms: &perms,
            script: &script,
            used: 0,
            exhausted: false,
        };
        let mut buffer = RingBuffer::new(run.capacity)?;
        let mut shuffler = EpochShuffler::new(run.capacity)?;
        let mut count = 0u64;
        for t in 0..run.timesteps {
            buffer.insert((), 1.0)?;
            if run.sampling_len(t).is_none() {
                continue;
            }
            for slot in sample_rrc(&buffer, run.batch, &mut shuffler, &mut source)? {
                if buffer.get(slot)?.map(|tr| tr.id) == Some(id as u64) {
                    count += 1;
                }
            }
            if source.exhausted {
                break;
            }
        }
        if source.exhausted {
            for j in 0..perms.len() {
                let mut longer = script.clone();
                longer.push(j);
                stack.push(longer);
            }
        } else {
            expectation += count as f64 * weight.powi(script.len() as i32);
        }
    }
    Ok(expectation)
}

/// `E[X_{id, T-1}]` under uniform with-replacement sampling, by enumerating
/// every index tuple of every minibatch.
pub fn uer_mean_count(run: TinyRun, id: usize) -> Result<f64> {
    run.check(id)?;
    fn go(run: &TinyRun, id: usize, t: usize) -> f64 {
        if t == run.timesteps {
            return 0.0;
        }
        let rest = go(run, id, t + 1);
        let Some(len) = run.sampling_len(t) else {
            return rest;
        };
        // slots 0..len hold ids t+1-len ..= t
        let oldest = t + 1 - len;
        let tuples = len.pow(run.batch as u32);
        let mut hits = 0u64;
        for mut code in 0..tuples {
            for _ in 0..run.batch {
                if oldest + code % len == id {
                    hits += 1;
                }
                code /= len;
            }
        }
        hits as f64 / tuples as f64 + rest
    }
    Ok(go(&run, id, 0))
}

/// `E[X_{id, T-1}]` under RR-M with batch size 1 and fixed priorities
/// (`priorities[t]` for transition `t`), weighting every branch by its masked
/// probability.
pub fn rrm_mean_count(run: TinyRun, priorities: &[f64], id: usize) -> Result<f64> {
    run.check(id)?;
    if run.batch != 1 {
        return Err(ReplayError::OracleDomain(
            "RR-M enumeration needs batch 1".into(),
        ));
    }
    if priorities.len() < run.timesteps {
        return Err(ReplayError::InvalidConfig("too few priorities".into()));
    }
    fn go(run: &TinyRun, priorities: &[f64], id: usize, t: usize, rrm: RrmSampler) -> Result<f64> {
        if t == run.timesteps {
            return Ok(0.0);
        }
        let mut rrm = rrm;
        let slot = t % run.capacity;
        rrm.on_insert(slot, priorities[t], t >= run.capacity)?;
        if run.sampling_len(t).is_none() {
            return go(run, priorities, id, t + 1, rrm);
        }
        rrm.prepare_mask()?;
        let probabilities = rrm.store().masked_probabilities()?;
        let target = (id <= t && t < id + run.capacity).then_some(id % run.capacity);
        let mut expectation = 0.0;
        for (s, &p) in probabilities.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut branch = rrm.clone();
            branch.record(&[s], 1)?;
            let hit = if target == Some(s) { 1.0 } else { 0.0 };
            expectation += p * (hit + go(run, priorities, id, t + 1, branch)?);
        }
        Ok(expectation)
    }
    go(&run, priorities, id, 0, RrmSampler::new(run.capacity)?)
}

/// `E[X_{id, T-1}]` under prioritized with-replacement sampling, batch size 1,
/// fixed priorities.
pub fn per_mean_count(run: TinyRun, priorities: &[f64], id: usize) -> Result<f64> {
    run.check(id)?;
    if run.batch != 1 {
        return Err(ReplayError::OracleDomain(
            "PER enumeration needs batch 1".into(),
        ));
    }
    if priorities.len() < run.timesteps {
        return Err(ReplayError::InvalidConfig("too few priorities".into()));
    }
    let mut tree = SumTree::new(run.capacity)?;
    let mut expectation = 0.0;
    for (t, &p) in priorities.iter().enumerate().take(run.timesteps) {
        tree.set(t % run.capacity, p)?;
        if run.sampling_len(t).is_some() && id <= t && t < id + run.capacity {
            expectation += tree.probabilities()?[id % run.capacity];
        }
    }
    Ok(expectation)
}
