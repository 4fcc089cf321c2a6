//! RR-M: random reshuffling by masking.
//!
//! Each slot carries an actual sample count and an expected one (the running
//! sum of its sampling probability times the batch size). Before every
//! minibatch, slots whose actual count exceeds the expected count are masked in
//! the priority store, and the minibatch is drawn without replacement from the
//! masked priorities.

use rand::Rng;

use crate::error::{ReplayError, Result};
use crate::sumtree::MaskedPriorityStore;

/// Upper bound on resampling passes while filling one minibatch.
pub const MAX_RESAMPLE_PASSES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CountLedger {
    actual: Vec<u64>,
    expected: Vec<f64>,
    occupied: Vec<bool>,
}

impl CountLedger {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            actual: vec![0; capacity],
            expected: vec![0.0; capacity],
            occupied: vec![false; capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.actual.len()
    }

    pub fn actual(&self) -> &[u64] {
        &self.actual
    }

    pub fn expected(&self) -> &[f64] {
        &self.expected
    }

    pub fn is_occupied(&self, slot: usize) -> bool {
        self.occupied.get(slot).copied().unwrap_or(false)
    }

    pub fn actual_sum(&self) -> f64 {
        self.actual.iter().map(|&a| a as f64).sum()
    }

    pub fn expected_sum(&self) -> f64 {
        self.expected.iter().sum()
    }

    /// `actual > expected`, elementwise. Unoccupied slots are never oversampled.
    pub fn is_oversampled(&self, slot: usize) -> bool {
        self.actual[slot] as f64 > self.expected[slot]
    }

    /// Marks a freshly written slot; its counts start at zero.
    pub fn on_insert(&mut self, slot: usize) -> Result<()> {
        self.check_slot(slot)?;
        self.actual[slot] = 0;
        self.expected[slot] = 0.0;
        self.occupied[slot] = true;
        Ok(())
    }

    /// Forgets the counts of an overwritten slot, then rescales the remaining
    /// expected counts so that their sum equals the sum of actual counts.
    pub fn on_evict(&mut self, slot: usize) -> Result<()> {
        self.check_slot(slot)?;
        self.actual[slot] = 0;
        self.expected[slot] = 0.0;
        self.occupied[slot] = false;
        let expected_sum = self.expected_sum();
        if expected_sum > 0.0 {
            let scale = self.actual_sum() / expected_sum;
            for e in &mut self.expected {
                *e *= scale;
            }
        }
        Ok(())
    }

    /// Adds one to the actual count of every drawn slot and `batch × p_i` to the
    /// expected count of every slot.
    pub fn record(&mut self, drawn: &[usize], probabilities: &[f64], batch: usize) -> Result<()> {
        if probabilities.len() != self.capacity() {
            return Err(ReplayError::LengthMismatch {
                expected: self.capacity(),
                got: probabilities.len(),
            });
        }
        for &slot in drawn {
            self.check_slot(slot)?;
            self.actual[slot] += 1;
        }
        let b = batch as f64;
        for (e, p) in self.expected.iter_mut().zip(probabilities) {
            *e += p * b;
        }
        Ok(())
    }

    /// `actual - expected` for an occupied slot.
    pub fn deviation(&self, slot: usize) -> Result<f64> {
        self.check_slot(slot)?;
        if !self.occupied[slot] {
            return Err(ReplayError::UnoccupiedSlot(slot));
        }
        Ok(self.actual[slot] as f64 - self.expected[slot])
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.capacity() {
            Ok(())
        } else {
            Err(ReplayError::SlotOutOfRange {
                slot,
                capacity: self.capacity(),
            })
        }
    }
}

/// Priority store and count ledger for one replay buffer, kept in lockstep.
#[derive(Debug, Clone)]
pub struct RrmSampler {
    store: MaskedPriorityStore,
    ledger: CountLedger,
    scratch: Vec<bool>,
}

impl RrmSampler {
    pub fn new(capacity: usize) -> Result<Self> {
        Ok(Self {
            store: MaskedPriorityStore::new(capacity)?,
            ledger: CountLedger::new(capacity)?,
            scratch: vec![false; capacity],
        })
    }

    /// A sampler over a full, fixed buffer with the given priorities.
    pub fn with_priorities(priorities: &[f64]) -> Result<Self> {
        let mut sampler = Self::new(priorities.len())?;
        for (slot, &p) in priorities.iter().enumerate() {
            sampler.on_insert(slot, p, false)?;
        }
        Ok(sampler)
    }

    pub fn capacity(&self) -> usize {
        self.ledger.capacity()
    }

    pub fn store(&self) -> &MaskedPriorityStore {
        &self.store
    }

    pub fn ledger(&self) -> &CountLedger {
        &self.ledger
    }

    /// Registers a transition written to `slot`. `evicted` says whether it
    /// overwrote an older transition.
    pub fn on_insert(&mut self, slot: usize, priority: f64, evicted: bool) -> Result<()> {
        if evicted {
            self.ledger.on_evict(slot)?;
        }
        self.store.set_mask(slot, false)?;
        self.store.set_priority(slot, priority)?;
        self.ledger.on_insert(slot)
    }

    pub fn set_priority(&mut self, slot: usize, priority: f64) -> Result<()> {
        self.store.set_priority(slot, priority)
    }

    pub fn rebuild_if_due(&mut self, threshold: u64) -> bool {
        self.store.rebuild_if_due(threshold)
    }

    /// Masks exactly the oversampled slots. Returns the number of occupied
    /// slots with positive priority.
    pub fn prepare_mask(&mut self) -> Result<usize> {
        let leaves = self.store.base().leaves();
        let mut eligible = 0;
        for (slot, &p) in leaves.iter().enumerate().take(self.capacity()) {
            self.scratch[slot] = self.ledger.is_oversampled(slot);
            if self.ledger.occupied[slot] && p > 0.0 {
                eligible += 1;
            }
        }
        self.store.update_mask(&self.scratch)?;
        Ok(eligible)
    }

    /// Draws `batch` distinct slots by masked priority: query the masked tree
    /// for the shortfall, drop duplicates, exclude what was drawn, repeat.
    pub fn draw_distinct<R: Rng + ?Sized>(
        &mut self,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let mut chosen: Vec<usize> = Vec::with_capacity(batch);
        let result = self.fill(&mut chosen, batch, rng);
        for &slot in &chosen {
            self.store.release(slot)?;
        }
        result.map(|()| chosen)
    }

    fn fill<R: Rng + ?Sized>(
        &mut self,
        chosen: &mut Vec<usize>,
        batch: usize,
        rng: &mut R,
    ) -> Result<()> {
        for _ in 0..MAX_RESAMPLE_PASSES {
            let need = batch - chosen.len();
            if need == 0 {
                return Ok(());
            }
            let start = chosen.len();
            for _ in 0..need {
                let slot = self.store.masked().draw(rng)?;
                if !chosen.contains(&slot) {
                    chosen.push(slot);
                }
            }
            for &slot in &chosen[start..] {
                self.store.exclude(slot)?;
            }
        }
        if chosen.len() == batch {
            Ok(())
        } else {
            Err(ReplayError::ResampleExhausted(MAX_RESAMPLE_PASSES))
        }
    }

    /// Credits the drawn slots and accrues `batch × p_i` expectation for every
    /// slot, using the unmasked priorities.
    pub fn record(&mut self, drawn: &[usize], batch: usize) -> Result<()> {
        let probabilities = self.store.probabilities()?;
        self.ledger.record(drawn, &probabilities, batch)
    }

    /// One RR-M minibatch of `batch` distinct slots.
    pub fn sample<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(ReplayError::ZeroBatch);
        }
        let eligible = self.prepare_mask()?;
        if eligible < batch {
            return Err(ReplayError::BatchTooLarge {
                batch,
                available: eligible,
            });
        }
        let drawn = self.draw_distinct(batch, rng)?;
        self.record(&drawn, batch)?;
        Ok(drawn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use proptest::prelude::*;

    const TABLE: [f64; 3] = [1.0, 0.5, 2.0];

    #[test]
    fn seven_draws_hit_expected_counts_exactly() {
        for seed in 0..100 {
            let mut rrm = RrmSampler::with_priorities(&TABLE).unwrap();
            let mut rng = SimRng::new(seed);
            for _ in 0..7 {
                rrm.sample(1, &mut rng).unwrap();
            }
            assert_eq!(rrm.ledger().actual(), &[2, 1, 4], "seed {seed}");
        }
    }

    #[test]
    fn first_iteration_bookkeeping() {
        let seed = (0..)
            .find(|&s| {
                let mut rrm = RrmSampler::with_priorities(&TABLE).unwrap();
                rrm.sample(1, &mut SimRng::new(s)).unwrap() == vec![2]
            })
            .unwrap();
        let mut rrm = RrmSampler::with_priorities(&TABLE).unwrap();
        rrm.sample(1, &mut SimRng::new(seed)).unwrap();
        assert_eq!(rrm.ledger().actual(), &[0, 0, 1]);
        let e = rrm.ledger().expected();
        assert!((e[0] - 2.0 / 7.0).abs() < 1e-12);
        assert!((e[1] - 1.0 / 7.0).abs() < 1e-12);
        assert!((e[2] - 4.0 / 7.0).abs() < 1e-12);
        rrm.prepare_mask().unwrap();
        assert_eq!(rrm.store().mask(), &[false, false, true]);
    }

    /// Replays both printed trajectories and checks the bookkeeping rows at
    /// their printed two-decimal precision.
    #[test]
    fn printed_trajectories() {
        let (t, f) = (true, false);
        let first = [
            ([f, f, f], [0.29, 0.14, 0.57], 2, [0.29, 0.14, 0.57]),
            ([f, f, t], [0.67, 0.33, 0.00], 0, [0.57, 0.29, 1.14]),
            ([t, f, f], [0.00, 0.20, 0.80], 1, [0.86, 0.43, 1.71]),
            ([t, t, f], [0.00, 0.00, 1.00], 2, [1.14, 0.57, 2.29]),
            ([f, t, f], [0.33, 0.00, 0.67], 2, [1.43, 0.71, 2.86]),
            ([f, t, t], [1.00, 0.00, 0.00], 0, [1.71, 0.86, 3.43]),
            ([t, t, f], [0.00, 0.00, 1.00], 2, [2.00, 1.00, 4.00]),
        ];
        let second = [
            ([f, f, f], [0.29, 0.14, 0.57], 2, [0.29, 0.14, 0.57]),
            ([f, f, t], [0.67, 0.33, 0.00], 1, [0.57, 0.29, 1.14]),
            ([f, t, f], [0.33, 0.00, 0.67], 0, [0.86, 0.43, 1.71]),
            ([t, t, f], [0.00, 0.00, 1.00], 2, [1.14, 0.57, 2.29]),
            ([f, t, f], [0.33, 0.00, 0.67], 0, [1.43, 0.71, 2.86]),
            ([t, t, f], [0.00, 0.00, 1.00], 2, [1.71, 0.86, 3.43]),
            ([t, t, f], [0.00, 0.00, 1.00], 2, [2.00, 1.00, 4.00]),
        ];
        for trajectory in [first, second] {
            let mut rrm = RrmSampler::with_priorities(&TABLE).unwrap();
            for (iteration, (mask, masked_p, drawn, expected_after)) in
                trajectory.into_iter().enumerate()
            {
                rrm.prepare_mask().unwrap();
                assert_eq!(rrm.store().mask(), &mask, "iteration {iteration}");
                let p = rrm.store().masked_probabilities().unwrap();
                for (got, want) in p.iter().zip(masked_p) {
                    assert!((got - want).abs() <= 0.005, "iteration {iteration}");
                }
                rrm.record(&[drawn], 1).unwrap();
                for (got, want) in rrm.ledger().expected().iter().zip(expected_after) {
                    assert!((got - want).abs() <= 0.005, "iteration {iteration}");
                }
            }
            assert_eq!(rrm.ledger().actual(), &[2, 1, 4]);
        }
    }

    #[test]
    fn deviation_after_iteration_three() {
        let mut rrm = RrmSampler::with_priorities(&TABLE).unwrap();
        for slot in [2, 0, 1, 2] {
            rrm.prepare_mask().unwrap();
            rrm.record(&[slot], 1).unwrap();
        }
        let d = rrm.ledger().deviation(2).unwrap();
        assert!((d - (2.0 - 16.0 / 7.0)).abs() < 1e-12);
        assert!((d + 0.29).abs() < 0.005);
    }

    #[test]
    fn uniform_priorities_reduce_to_reshuffling() {
        for seed in 0..200 {
            let mut rrm = RrmSampler::with_priorities(&[1.0; 6]).unwrap();
            let mut rng = SimRng::new(seed);
            for _ in 0..10 {
                let mut epoch: Vec<usize> = (0..6)
                    .map(|_| rrm.sample(1, &mut rng).unwrap()[0])
                    .collect();
                epoch.sort();
                assert_eq!(epoch, vec![0, 1, 2, 3, 4, 5], "seed {seed}");
            }
        }
    }

    #[test]
    fn batches_are_distinct() {
        let mut rrm =
            RrmSampler::with_priorities(&[5.0, 1.0, 0.1, 0.1, 3.0, 2.0, 0.5, 0.01]).unwrap();
        let mut rng = SimRng::new(8);
        for _ in 0..2000 {
            let mut got = rrm.sample(8, &mut rng).unwrap();
            got.sort();
            assert_eq!(got, (0..8).collect::<Vec<_>>());
        }
        for _ in 0..2000 {
            let mut got = rrm.sample(5, &mut rng).unwrap();
            got.sort();
            got.dedup();
            assert_eq!(got.len(), 5);
        }
        // exclusions are lifted after every batch
        assert_eq!(
            rrm.store()
                .masked()
                .leaves()
                .iter()
                .filter(|&&p| p == 0.0)
                .count(),
            0
        );
    }

    #[test]
    fn infeasible_batch_is_rejected() {
        let mut rrm = RrmSampler::with_priorities(&[1.0, 0.0, 2.0]).unwrap();
        let mut rng = SimRng::new(0);
        assert_eq!(
            rrm.sample(3, &mut rng),
            Err(ReplayError::BatchTooLarge {
                batch: 3,
                available: 2
            })
        );
        assert_eq!(rrm.sample(0, &mut rng), Err(ReplayError::ZeroBatch));
    }

    #[test]
    fn eviction_rescales_expected() {
        let mut ledger = CountLedger::new(3).unwrap();
        for s in 0..3 {
            ledger.on_insert(s).unwrap();
        }
        ledger.actual = vec![1, 1, 2];
        ledger.expected = vec![0.8, 1.2, 2.0];
        ledger.on_evict(2).unwrap();
        assert_eq!(ledger.actual(), &[1, 1, 0]);
        assert_eq!(ledger.expected(), &[0.8, 1.2, 0.0]);

        // never-sampled slot: the remainder is rescaled to the actual sum
        ledger.actual = vec![2, 1, 0];
        ledger.expected = vec![1.5, 1.0, 0.0];
        ledger.on_evict(2).unwrap();
        assert!((ledger.expected_sum() - ledger.actual_sum()).abs() < 1e-12);
        assert!((ledger.expected()[0] - 1.8).abs() < 1e-12);
        assert!((ledger.expected()[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn evicting_only_slot_clears_ledger() {
        let mut ledger = CountLedger::new(4).unwrap();
        ledger.on_insert(0).unwrap();
        ledger.record(&[0], &[1.0, 0.0, 0.0, 0.0], 1).unwrap();
        ledger.on_evict(0).unwrap();
        assert!(ledger.actual().iter().all(|&a| a == 0));
        assert!(ledger.expected().iter().all(|&e| e == 0.0));
        assert_eq!(ledger.deviation(0), Err(ReplayError::UnoccupiedSlot(0)));
    }

    #[test]
    fn fresh_ledger_deviation_is_zero() {
        let rrm = RrmSampler::with_priorities(&TABLE).unwrap();
        assert_eq!(rrm.ledger().deviation(1).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn counts_are_conserved_through_evictions(
            seed: u64,
            capacity in 2usize..16,
            batch in 1usize..4,
            steps in 1usize..120,
            priorities in prop::collection::vec(0.01f64..5.0, 120),
        ) {
            let batch = batch.min(capacity);
            let mut rrm = RrmSampler::new(capacity).unwrap();
            let mut rng = SimRng::new(seed);
            for (t, &p) in priorities.iter().enumerate().take(steps) {
                let slot = t % capacity;
                rrm.on_insert(slot, p, t >= capacity).unwrap();
                prop_assert!((rrm.ledger().actual_sum() - rrm.ledger().expected_sum()).abs() < 1e-6);
                if t + 1 >= batch {
                    let drawn = rrm.sample(batch, &mut rng).unwrap();
                    let mut d = drawn.clone();
                    d.sort();
                    d.dedup();
                    prop_assert_eq!(d.len(), batch);
                    prop_assert!((rrm.ledger().actual_sum() - rrm.ledger().expected_sum()).abs() < 1e-6);
                }
                for s in 0..capacity {
                    if !rrm.ledger().is_occupied(s) {
                        prop_assert_eq!(rrm.ledger().actual()[s], 0);
                        prop_assert_eq!(rrm.ledger().expected()[s], 0.0);
                    }
                }
            }
        }
    }
}
