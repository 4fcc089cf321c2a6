//! Random-reshuffling samplers for experience replay.
//!
//! Two samplers extend epoch-style random reshuffling to replay buffers whose
//! contents keep changing:
//!
//! * [`sample_rrc`] reshuffles the *slot indices* of a circular buffer and
//!   consumes them sequentially, skipping slots that were never written.
//! * [`RrmSampler`] tracks actual and expected sample counts per slot and masks
//!   the priority of every slot that has been drawn more often than expected.
//!
//! The usual baselines (with-replacement, within-minibatch without-replacement,
//! stratified and prioritized with-replacement sampling) live alongside them so
//! that the [`sim`] harness can compare sample-count distributions, and
//! [`stats`] / [`verify`] hold the closed-form oracles used to check them.

pub mod buffer;
pub mod error;
pub mod exact;
pub mod rng;
pub mod rrm;
pub mod sim;
pub mod stats;
pub mod sumtree;
pub mod uniform;
pub mod verify;

pub use buffer::{RingBuffer, Transition};
pub use error::{ReplayError, Result};
pub use rng::{SimRng, Stream};
pub use rrm::{CountLedger, RrmSampler};
pub use sim::{PriorityScheme, SampleCountMatrix, SamplerKind, SamplerUnit, SimConfig};
pub use stats::{IdStats, SampleCountStats};
pub use sumtree::{MaskedPriorityStore, SumTree, MASK_FACTOR};
pub use uniform::{sample_rrc, sample_wor, sample_wr, EpochShuffler, PermutationSource};
