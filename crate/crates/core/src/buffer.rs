//! Fixed-capacity circular transition store.

use crate::error::{ReplayError, Result};

pub(crate) fn check_priority(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(ReplayError::InvalidPriority(p))
    }
}

/// One stored step of experience, identified by the timestep it was inserted at.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<P> {
    pub id: u64,
    pub payload: P,
    /// Current priority; ignored by the uniform samplers.
    pub priority: f64,
}

/// Circular FIFO buffer. The transition with id `t` always lives in slot
/// `t % capacity`, so the occupied slots of a buffer that is not yet full are
/// exactly `0..len`.
#[derive(Debug, Clone)]
pub struct RingBuffer<P> {
    slots: Vec<Option<Transition<P>>>,
    next_id: u64,
    len: usize,
}

impl<P> RingBuffer<P> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            slots: (0..capacity).map(|_| None).collect(),
            next_id: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity()
    }

    /// Id the next inserted transition will receive, i.e. the current timestep.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Slot that the next insertion will write to.
    pub fn write_cursor(&self) -> usize {
        self.slot_of(self.next_id)
    }

    pub fn slot_of(&self, id: u64) -> usize {
        (id % self.capacity() as u64) as usize
    }

    /// Stores a new transition and returns the one it overwrote, if any.
    pub fn insert(&mut self, payload: P, priority: f64) -> Result<Option<Transition<P>>> {
        check_priority(priority)?;
        let id = self.next_id;
        let slot = self.slot_of(id);
        let evicted = self.slots[slot].replace(Transition {
            id,
            payload,
            priority,
        });
        if evicted.is_none() {
            self.len += 1;
        }
        self.next_id += 1;
        Ok(evicted)
    }

    pub fn get(&self, slot: usize) -> Result<Option<&Transition<P>>> {
        self.check_slot(slot)?;
        Ok(self.slots[slot].as_ref())
    }

    pub fn set_priority(&mut self, slot: usize, priority: f64) -> Result<()> {
        check_priority(priority)?;
        self.check_slot(slot)?;
        match self.slots[slot].as_mut() {
            Some(t) => {
                t.priority = priority;
                Ok(())
            }
            None => Err(ReplayError::UnoccupiedSlot(slot)),
        }
    }

    /// Occupied slots with their transitions, in slot order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Transition<P>)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(slot, t)| t.as_ref().map(|t| (slot, t)))
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
