//! Batchwise enumeration of all ordered training pairs.
//!
//! Each epoch shuffles the `n(n+1)/2` unordered pairs `i ≤ j` and walks
//! through them; an off-diagonal pair is emitted as `(i, j)` immediately
//! followed by its mirror `(j, i)`, a diagonal pair as the single `(i, i)`.
//! Over one epoch every ordered pair in `[0, n)²` therefore appears exactly
//! once, and every batch is closed under reversal.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Number of ordered pairs (diagonal included) for `n` points.
pub fn epoch_pair_count(n: usize) -> usize {
    n * n
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize)>,
    /// Zero-based epoch the batch belongs to.
    pub epoch: usize,
    /// True for the final batch of its epoch.
    pub ends_epoch: bool,
}

#[derive(Debug, Clone)]
pub struct PairStream {
    n: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<(u32, u32)>,
    cursor: usize,
    epoch: usize,
}

impl PairStream {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract(
                "pair stream over an empty training set".into(),
            ));
        }
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "pair batch size must be even and at least 2, got {batch_size}"
            )));
        }
        if n > u32::MAX as usize {
            return Err(Error::Config(
                "training set too large for pair enumeration".into(),
            ));
        }
        let mut order = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n as u32 {
            for j in i..n as u32 {
                order.push((i, j));
            }
        }
        let mut rng = seed::rng(seed);
        order.shuffle(&mut rng);
        Ok(Self {
            n,
            batch_size,
            rng,
            order,
            cursor: 0,
            epoch: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Next batch of ordered pairs. Batches never straddle an epoch boundary,
    /// so the last one of an epoch may be short; an off-diagonal pair that
    /// would not fit whole is deferred to the next batch.
    pub fn next_batch(&mut self) -> PairBatch {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let mut pairs = Vec::with_capacity(self.batch_size);
        while let Some(&(i, j)) = self.order.get(self.cursor) {
            let (i, j) = (i as usize, j as usize);
            let need = if i == j { 1 } else { 2 };
            if pairs.len() + need > self.batch_size {
                break;
            }
            pairs.push((i, j));
            if i != j {
                pairs.push((j, i));
            }
            self.cursor += 1;
        }
        PairBatch {
            pairs,
            epoch: self.epoch,
            ends_epoch: self.cursor == self.order.len(),
        }
    }

    /// Batches until the end of the current epoch.
    pub fn drain_epoch(&mut self) -> Vec<PairBatch> {
        let mut out = Vec::new();
        loop {
            let b = self.next_batch();
            let end = b.ends_epoch;
            out.push(b);
            if end {
                return out;
            }
        }
    }
}
