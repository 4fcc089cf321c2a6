//! Uniform-replay samplers: with replacement, within-minibatch without
//! replacement, and random reshuffling over circular-buffer slots (RR-C).
//!
//! All samplers return slot indices into the [`RingBuffer`].

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::buffer::RingBuffer;
use crate::error::{ReplayError, Result};

/// Common interface: draw `batch` occupied slot indices from `buffer`.
pub trait UniformSampler {
    fn sample<P, R: Rng + ?Sized>(
        &mut self,
        buffer: &RingBuffer<P>,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>>;
}

/// Produces the permutation for a new epoch. Implemented for every [`Rng`]
/// (uniform Fisher-Yates); exact enumeration plugs in scripted sources.
pub trait PermutationSource {
    /// Reorders `indices`, which holds `0..len` in ascending order on entry.
    fn permute(&mut self, indices: &mut [usize]);
}

impl<R: Rng + ?Sized> PermutationSource for R {
    fn permute(&mut self, indices: &mut [usize]) {
        indices.shuffle(self);
    }
}

fn check_nonempty<P>(buffer: &RingBuffer<P>, batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(ReplayError::ZeroBatch);
    }
    if buffer.is_empty() {
        return Err(ReplayError::EmptyBuffer);
    }
    Ok(())
}

/// Independent uniform draws over the occupied slots; duplicates allowed.
pub fn sample_wr<P, R: Rng + ?Sized>(
    buffer: &RingBuffer<P>,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_nonempty(buffer, batch)?;
    // Occupied slots are always 0..len (ids fill slots in order).
    let len = buffer.len();
    Ok((0..batch).map(|_| rng.random_range(0..len)).collect())
}

/// A uniformly random size-`batch` subset of the occupied slots, in random order.
pub fn sample_wor<P, R: Rng + ?Sized>(
    buffer: &RingBuffer<P>,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_nonempty(buffer, batch)?;
    if batch > buffer.len() {
        return Err(ReplayError::BatchTooLarge {
            batch,
            available: buffer.len(),
        });
    }
    Ok(index::sample(rng, buffer.len(), batch).into_vec())
}

/// The RR-C index buffer: a permutation of `0..capacity` consumed front to back.
#[derive(Debug, Clone)]
pub struct EpochShuffler {
    permutation: Vec<usize>,
    cursor: usize,
    epochs: u64,
}

impl EpochShuffler {
    /// A shuffler with an exhausted permutation; the first draw starts epoch 1.
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            permutation: (0..capacity).collect(),
            cursor: capacity,
            epochs: 0,
        })
    }

    /// A shuffler whose current epoch is the given permutation.
    pub fn with_permutation(permutation: Vec<usize>) -> Result<Self> {
        let capacity = permutation.len();
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        let mut seen = vec![false; capacity];
        for &i in &permutation {
            if i >= capacity || std::mem::replace(&mut seen[i], true) {
                return Err(ReplayError::InvalidConfig(format!(
                    "{permutation:?} is not a permutation of 0..{capacity}"
                )));
            }
        }
        Ok(Self {
            permutation,
            cursor: 0,
            epochs: 1,
        })
    }

    pub fn capacity(&self) -> usize {
        self.permutation.len()
    }

    /// Number of permutations generated or loaded so far.
    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    /// Indices not yet consumed in the current epoch.
    pub fn remaining(&self) -> &[usize] {
        &self.permutation[self.cursor..]
    }

    /// Pops the next index, starting a fresh epoch when the current one is used up.
    pub fn next_index<S: PermutationSource + ?Sized>(&mut self, source: &mut S) -> usize {
        if self.cursor == self.permutation.len() {
            for (slot, v) in self.permutation.iter_mut().enumerate() {
                *v = slot;
            }
            source.permute(&mut self.permutation);
            self.cursor = 0;
            self.epochs += 1;
        }
        let i = self.permutation[self.cursor];
        self.cursor += 1;
        i
    }
}

/// RR-C: consume the epoch permutation, skipping never-written slots, until
/// `batch` occupied slots are collected. A minibatch may straddle an epoch
/// boundary, in which case the same slot can appear twice.
pub fn sample_rrc<P, S: PermutationSource + ?Sized>(
    buffer: &RingBuffer<P>,
    batch: usize,
    shuffler: &mut EpochShuffler,
    source: &mut S,
) -> Result<Vec<usize>> {
    check_nonempty(buffer, batch)?;
    if shuffler.capacity() != buffer.capacity() {
        return Err(ReplayError::LengthMismatch {
            expected: buffer.capacity(),
            got: shuffler.capacity(),
        });
    }
    let mut out = Vec::with_capacity(batch);
    while out.len() < batch {
        let i = shuffler.next_index(source);
        if i < buffer.len() {
            out.push(i);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WithReplacement;

#[derive(Debug, Clone, Copy, Default)]
pub struct WithoutReplacement;

impl UniformSampler for WithReplacement {
    fn sample<P, R: Rng + ?Sized>(
        &mut self,
        buffer: &RingBuffer<P>,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        sample_wr(buffer, batch, rng)
    }
}

impl UniformSampler for WithoutReplacement {
    fn sample<P, R: Rng + ?Sized>(
        &mut self,
        buffer: &RingBuffer<P>,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        sample_wor(buffer, batch, rng)
    }
}

impl UniformSampler for EpochShuffler {
    fn sample<P, R: Rng + ?Sized>(
        &mut self,
        buffer: &RingBuffer<P>,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        sample_rrc(buffer, batch, self, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use proptest::prelude::*;

    fn filled(capacity: usize, n: usize) -> RingBuffer<()> {
        let mut buf = RingBuffer::new(capacity).unwrap();
        for _ in 0..n {
            buf.insert((), 1.0).unwrap();
        }
        buf
    }

    /// |observed - n p| <= 3 sqrt(n p (1 - p))
    fn within_binomial_3sigma(observed: u64, n: u64, p: f64) -> bool {
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        (observed as f64 - mean).abs() <= 3.0 * sd
    }

    #[test]
    fn wr_single_slot() {
        let buf = filled(5, 1);
        let mut rng = SimRng::new(0);
        assert_eq!(sample_wr(&buf, 3, &mut rng).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn wr_frequencies_are_uniform() {
        let buf = filled(20, 20);
        let mut rng = SimRng::new(1);
        let mut hits = [0u64; 20];
        let draws = 1_000_000 / 4;
        for _ in 0..draws {
            for s in sample_wr(&buf, 4, &mut rng).unwrap() {
                hits[s] += 1;
            }
        }
        let total = draws * 4;
        for h in hits {
            assert!(within_binomial_3sigma(h, total, 0.05), "{h}");
        }
        // chi-square with 19 dof; the 0.999 quantile is 43.82
        let expected = total as f64 / 20.0;
        let chi2: f64 = hits
            .iter()
            .map(|&h| (h as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 43.82, "chi2 = {chi2}");
    }

    #[test]
    fn wr_errors() {
        let buf = filled(5, 0);
        let mut rng = SimRng::new(0);
        assert_eq!(sample_wr(&buf, 1, &mut rng), Err(ReplayError::EmptyBuffer));
        let buf = filled(5, 2);
        assert_eq!(sample_wr(&buf, 0, &mut rng), Err(ReplayError::ZeroBatch));
    }

    #[test]
    fn wor_full_batch_is_permutation() {
        let buf = filled(4, 4);
        let mut rng = SimRng::new(2);
        let mut got = sample_wor(&buf, 4, &mut rng).unwrap();
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn wor_symmetry() {
        let buf = filled(2, 2);
        let mut rng = SimRng::new(3);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| sample_wor(&buf, 1, &mut rng).unwrap()[0] == 0)
            .count() as u64;
        assert!(within_binomial_3sigma(zeros, n, 0.5));
    }

    #[test]
    fn wor_never_duplicates() {
        let buf = filled(20, 20);
        let mut rng = SimRng::new(4);
        for _ in 0..10_000 {
            let mut s = sample_wor(&buf, 4, &mut rng).unwrap();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
        }
    }

    #[test]
    fn wor_rejects_oversized_batch() {
        let buf = filled(20, 3);
        let mut rng = SimRng::new(0);
        assert_eq!(
            sample_wor(&buf, 4, &mut rng),
            Err(ReplayError::BatchTooLarge {
                batch: 4,
                available: 3
            })
        );
    }

    #[test]
    fn rrc_consumes_sequentially_across_epochs() {
        let buf = filled(5, 5);
        let mut shuffler = EpochShuffler::with_permutation(vec![3, 0, 4, 1, 2]).unwrap();
        let mut rng = SimRng::new(5);
        assert_eq!(
            sample_rrc(&buf, 2, &mut shuffler, &mut rng).unwrap(),
            vec![3, 0]
        );
        assert_eq!(
            sample_rrc(&buf, 2, &mut shuffler, &mut rng).unwrap(),
            vec![4, 1]
        );
        let third = sample_rrc(&buf, 2, &mut shuffler, &mut rng).unwrap();
        assert_eq!(third[0], 2);
        assert_eq!(shuffler.epochs(), 2);
        // x is the first element of the regenerated permutation
        let fresh_tail = shuffler.remaining().len();
        assert_eq!(fresh_tail, 4);
        assert!(!shuffler.remaining().contains(&third[1]));
    }

    #[test]
    fn rrc_skips_unwritten_slots() {
        let buf = filled(5, 2);
        let mut shuffler = EpochShuffler::with_permutation(vec![4, 1, 3, 0, 2]).unwrap();
        let mut rng = SimRng::new(0);
        assert_eq!(
            sample_rrc(&buf, 2, &mut shuffler, &mut rng).unwrap(),
            vec![1, 0]
        );
        assert_eq!(shuffler.remaining(), &[2]);
    }

    #[test]
    fn rrc_errors() {
        let mut rng = SimRng::new(0);
        let mut shuffler = EpochShuffler::new(5).unwrap();
        let empty = filled(5, 0);
        assert_eq!(
            sample_rrc(&empty, 1, &mut shuffler, &mut rng),
            Err(ReplayError::EmptyBuffer)
        );
        let other = filled(4, 4);
        assert!(sample_rrc(&other, 1, &mut shuffler, &mut rng).is_err());
        assert!(EpochShuffler::with_permutation(vec![0, 0, 1]).is_err());
        assert!(EpochShuffler::with_permutation(vec![0, 3]).is_err());
    }

    #[test]
    fn resident_for_n_epochs_is_sampled_n_times() {
        // Full buffer, no insertions: every window of C pops is one epoch.
        let capacity = 7;
        let buf = filled(capacity, capacity);
        let mut shuffler = EpochShuffler::new(capacity).unwrap();
        let mut rng = SimRng::new(9);
        let mut counts = vec![0u32; capacity];
        for _ in 0..(capacity * 5) {
            for s in sample_rrc(&buf, 1, &mut shuffler, &mut rng).unwrap() {
                counts[s] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == 5));
    }

    proptest! {
        #[test]
        fn every_epoch_emits_each_index_once(capacity in 1usize..50, seed: u64, epochs in 1usize..5) {
            let mut shuffler = EpochShuffler::new(capacity).unwrap();
            let mut rng = SimRng::new(seed);
            for _ in 0..epochs {
                let mut seen: Vec<usize> = (0..capacity).map(|_| shuffler.next_index(&mut rng)).collect();
                seen.sort();
                prop_assert_eq!(seen, (0..capacity).collect::<Vec<_>>());
            }
            prop_assert_eq!(shuffler.epochs(), epochs as u64);
        }

        #[test]
        fn rrc_returns_occupied_slots(capacity in 1usize..30, fill in 1usize..30, batch in 1usize..10, seed: u64) {
            let fill = fill.min(capacity);
            let buf = filled(capacity, fill);
            let mut shuffler = EpochShuffler::new(capacity).unwrap();
            let mut rng = SimRng::new(seed);
            let got = sample_rrc(&buf, batch, &mut shuffler, &mut rng).unwrap();
            prop_assert_eq!(got.len(), batch);
            prop_assert!(got.iter().all(|&s| s < fill));
        }
    }
}
