//! Shared inputs for the benchmarks.

use score_core::synthlab;
use score_core::EmbeddingBatch;

pub const SEED: u64 = 42;

/// Gaussian batch with labels `i % classes`.
pub fn batch(n: usize, d: usize, classes: usize) -> EmbeddingBatch {
    synthlab::random_batch(n, d, classes, SEED).expect("valid batch shape")
}
