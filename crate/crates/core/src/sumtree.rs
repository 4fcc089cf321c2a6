//! Sum-tree priority storage and the dual-tree masked store used by RR-M.

use rand::Rng;

use crate::buffer::check_priority;
use crate::error::{ReplayError, Result};

/// Multiplier applied to the priority of an oversampled slot. Never zero, so
/// sampling still works if every slot ends up masked.
pub const MASK_FACTOR: f64 = 1e-8;

/// Complete binary tree over `leaf_count` (a power of two) leaves. Node 1 is
/// the root, node `n` has children `2n` and `2n + 1`, and leaf `i` is node
/// `leaf_count + i`. Leaves past `capacity` stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    leaf_count: usize,
    nodes: Vec<f64>,
    touches: u64,
    writes: u64,
}

impl SumTree {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        let leaf_count = capacity.next_power_of_two();
        Ok(Self {
            capacity,
            leaf_count,
            nodes: vec![0.0; 2 * leaf_count],
            touches: 0,
            writes: 0,
        })
    }

    pub fn from_priorities(priorities: &[f64]) -> Result<Self> {
        let mut tree = Self::new(priorities.len())?;
        for (slot, &p) in priorities.iter().enumerate() {
            check_priority(p)?;
            tree.nodes[tree.leaf_count + slot] = p;
        }
        tree.rebuild();
        Ok(tree)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, slot: usize) -> Result<f64> {
        self.check_slot(slot)?;
        Ok(self.nodes[self.leaf_count + slot])
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.leaf_count..self.leaf_count + self.capacity]
    }

    /// Number of node writes performed by `set` since construction.
    pub fn touches(&self) -> u64 {
        self.touches
    }

    /// Number of `set` calls since the last rebuild.
    pub fn writes_since_rebuild(&self) -> u64 {
        self.writes
    }

    pub fn set(&mut self, slot: usize, p: f64) -> Result<()> {
        check_priority(p)?;
        self.check_slot(slot)?;
        let mut node = self.leaf_count + slot;
        self.nodes[node] = p;
        self.touches += 1;
        self.writes += 1;
        // Recompute from children rather than adding a delta: internal nodes stay
        // a pure function of the leaves, so reverting a leaf restores every node
        // bit for bit.
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            self.touches += 1;
        }
        Ok(())
    }

    /// Recomputes every internal node from the leaves.
    pub fn rebuild(&mut self) {
        for node in (1..self.leaf_count).rev() {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
        self.writes = 0;
    }

    /// Largest relative gap between an internal node and the sum of its children.
    pub fn max_relative_inconsistency(&self) -> f64 {
        (1..self.leaf_count)
            .map(|node| {
                let sum = self.nodes[2 * node] + self.nodes[2 * node + 1];
                let scale = sum.abs().max(self.nodes[node].abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (self.nodes[node] - sum).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    /// Leaf `i` with `cumsum(0..i) <= u < cumsum(0..=i)`. Ties on a boundary go
    /// right, and empty subtrees are never entered, so a zero-priority leaf is
    /// unreachable.
    pub fn sample_prefix(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if total <= 0.0 {
            return Err(ReplayError::ZeroTotalPriority);
        }
        if !(0.0..total).contains(&u) {
            return Err(ReplayError::QueryOutOfRange { u, total });
        }
        let mut node = 1;
        let mut u = u;
        while node < self.leaf_count {
            let left = self.nodes[2 * node];
            let right = self.nodes[2 * node + 1];
            if (u < left || right <= 0.0) && left > 0.0 {
                node *= 2;
            } else {
                u -= left;
                node = 2 * node + 1;
            }
        }
        Ok(node - self.leaf_count)
    }

    /// One prefix query with `u` uniform in `[0, total)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let total = self.total();
        if total <= 0.0 {
            return Err(ReplayError::ZeroTotalPriority);
        }
        self.sample_prefix(below(rng.random::<f64>() * total, total))
    }

    /// Independent prefix draws; duplicates allowed.
    pub fn sample_wr<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(ReplayError::ZeroBatch);
        }
        (0..batch).map(|_| self.draw(rng)).collect()
    }

    /// Splits `[0, total)` into `batch` equal strata and resolves one uniform
    /// query inside each. Duplicates across strata are kept.
    pub fn sample_stratified<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(ReplayError::ZeroBatch);
        }
        let total = self.total();
        if total <= 0.0 {
            return Err(ReplayError::ZeroTotalPriority);
        }
        let width = total / batch as f64;
        (0..batch)
            .map(|j| {
                let u = (j as f64 + rng.random::<f64>()) * width;
                self.sample_prefix(below(u, total))
            })
            .collect()
    }

    /// `p_i / total` for every slot.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let total = self.total();
        if total <= 0.0 {
            return Err(ReplayError::ZeroTotalPriority);
        }
        Ok(self.leaves().iter().map(|p| p / total).collect())
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.capacity {
            Ok(())
        } else {
            Err(ReplayError::SlotOutOfRange {
                slot,
                capacity: self.capacity,
            })
        }
    }
}

fn below(u: f64, total: f64) -> f64 {
    if u < total {
        u
    } else {
        total.next_down()
    }
}

/// Two sum trees over the same slots: `base` holds the original priorities and
/// `masked` the effective ones, `base × MASK_FACTOR` for oversampled slots.
/// Changing a mask bit rewrites one leaf of the masked tree only.
///
/// Slots can additionally be *excluded* while a minibatch is being filled;
/// an excluded slot has effective priority zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPriorityStore {
    base: SumTree,
    masked: SumTree,
    mask: Vec<bool>,
    excluded: Vec<bool>,
}

impl MaskedPriorityStore {
    pub fn new(capacity: usize) -> Result<Self> {
        Ok(Self {
            base: SumTree::new(capacity)?,
            masked: SumTree::new(capacity)?,
            mask: vec![false; capacity],
            excluded: vec![false; capacity],
        })
    }

    pub fn from_priorities(priorities: &[f64]) -> Result<Self> {
        let base = SumTree::from_priorities(priorities)?;
        Ok(Self {
            masked: base.clone(),
            base,
            mask: vec![false; priorities.len()],
            excluded: vec![false; priorities.len()],
        })
    }

    pub fn capacity(&self) -> usize {
        self.base.capacity()
    }

    pub fn base(&self) -> &SumTree {
        &self.base
    }

    pub fn masked(&self) -> &SumTree {
        &self.masked
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn effective(&self, slot: usize) -> f64 {
        if self.excluded[slot] {
            0.0
        } else if self.mask[slot] {
            self.base.leaves()[slot] * MASK_FACTOR
        } else {
            self.base.leaves()[slot]
        }
    }

    fn refresh(&mut self, slot: usize) -> Result<()> {
        let p = self.effective(slot);
        self.masked.set(slot, p)
    }

    pub fn set_priority(&mut self, slot: usize, p: f64) -> Result<()> {
        self.base.set(slot, p)?;
        self.refresh(slot)
    }

    pub fn set_mask(&mut self, slot: usize, oversampled: bool) -> Result<()> {
        self.base.check_slot(slot)?;
        if self.mask[slot] != oversampled {
            self.mask[slot] = oversampled;
            self.refresh(slot)?;
        }
        Ok(())
    }

    /// Applies a new oversample mask, rewriting only the slots whose bit
    /// changed. Returns the number of changed bits.
    pub fn update_mask(&mut self, oversampled: &[bool]) -> Result<usize> {
        if oversampled.len() != self.capacity() {
            return Err(ReplayError::LengthMismatch {
                expected: self.capacity(),
                got: oversampled.len(),
            });
        }
        let mut changed = 0;
        for (slot, &bit) in oversampled.iter().enumerate() {
            if self.mask[slot] != bit {
                self.mask[slot] = bit;
                self.refresh(slot)?;
                changed += 1;
            }
        }
        Ok(changed)
    }

    /// Temporarily removes a slot from the masked tree.
    pub fn exclude(&mut self, slot: usize) -> Result<()> {
        self.base.check_slot(slot)?;
        if !self.excluded[slot] {
            self.excluded[slot] = true;
            self.refresh(slot)?;
        }
        Ok(())
    }

    pub fn release(&mut self, slot: usize) -> Result<()> {
        self.base.check_slot(slot)?;
        if self.excluded[slot] {
            self.excluded[slot] = false;
            self.refresh(slot)?;
        }
        Ok(())
    }

    /// Unmasked probabilities `p_i / Σp` from the base tree.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        self.base.probabilities()
    }

    pub fn masked_probabilities(&self) -> Result<Vec<f64>> {
        self.masked.probabilities()
    }

    pub fn touches(&self) -> u64 {
        self.base.touches() + self.masked.touches()
    }

    pub fn rebuild(&mut self) {
        self.base.rebuild();
        self.masked.rebuild();
    }

    /// Rebuilds both trees once `threshold` leaf writes have accumulated.
    pub fn rebuild_if_due(&mut self, threshold: u64) -> bool {
        if self.base.writes_since_rebuild() + self.masked.writes_since_rebuild() >= threshold {
            self.rebuild();
            true
        } else {
            false
        }
    }
}
