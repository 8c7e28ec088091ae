//! Seeded batch order as a pure function of the step index.
//!
//! Each epoch is one permutation of the dataset, cut into
//! `max(1, n / batch)` batches; a trailing remainder is dropped. Because
//! the schedule needs no mutable state, resuming at step `k` replays the
//! uninterrupted order exactly.

use rand::seq::SliceRandom;

use crate::data::stream;

pub const PRETRAIN_STREAM: u64 = 100;
pub const SOURCE_STREAM: u64 = 200;
pub const TARGET_STREAM: u64 = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSchedule {
    len: usize,
    batch: usize,
    seed: u64,
    stream: u64,
}

impl BatchSchedule {
    pub fn new(len: usize, batch: usize, seed: u64, stream: u64) -> BatchSchedule {
        assert!(len > 0, "schedule over an empty dataset");
        BatchSchedule {
            len,
            batch: batch.clamp(1, len),
            seed,
            stream,
        }
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len / self.batch
    }

    pub fn epoch_of(&self, step: u64) -> u64 {
        step / self.batches_per_epoch() as u64
    }

    /// Whether `step` is the last batch of its epoch.
    pub fn ends_epoch(&self, step: u64) -> bool {
        (step + 1) % self.batches_per_epoch() as u64 == 0
    }

    fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len).collect();
        idx.shuffle(&mut stream(self.seed, (self.stream << 40) | epoch));
        idx
    }

    pub fn indices(&self, step: u64) -> Vec<usize> {
        let bpe = self.batches_per_epoch() as u64;
        let perm = self.permutation(step / bpe);
        let start = (step % bpe) as usize * self.batch;
        perm[start..start + self.batch].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_cover_each_index_once() {
        let s = BatchSchedule::new(10, 3, 7, SOURCE_STREAM);
        assert_eq!(s.batches_per_epoch(), 3);
        let mut seen: Vec<usize> = (0..3).flat_map(|k| s.indices(k)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        assert!(s.ends_epoch(2) && !s.ends_epoch(3));
    }

    #[test]
    fn order_is_a_pure_function_of_seed_and_step() {
        let a = BatchSchedule::new(50, 8, 1, TARGET_STREAM);
        let b = BatchSchedule::new(50, 8, 1, TARGET_STREAM);
        let c = BatchSchedule::new(50, 8, 2, TARGET_STREAM);
        assert_eq!(a.indices(17), b.indices(17));
        assert_ne!(
            (0..12).map(|k| a.indices(k)).collect::<Vec<_>>(),
            (0..12).map(|k| c.indices(k)).collect::<Vec<_>>()
        );
        // different epochs reshuffle
        assert_ne!(a.indices(0), a.indices(a.batches_per_epoch() as u64));
    }

    #[test]
    fn oversized_batch_is_clamped() {
        let s = BatchSchedule::new(4, 32, 0, PRETRAIN_STREAM);
        assert_eq!(s.indices(0).len(), 4);
    }
}
