//! Seeded k-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FoldError {
    #[error("bad fold spec: {fold_count} folds over {n} rows (need 2 <= folds <= rows)")]
    BadFoldSpec { n: usize, fold_count: usize },
}

/// Row → fold assignment. Rows are shuffled with the seed and dealt
/// round-robin, so fold sizes differ by at most one and the lower-numbered
/// folds take the remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub n: usize,
    pub fold_count: usize,
    pub assignment: Vec<usize>,
}

pub fn make_folds(n: usize, fold_count: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if fold_count < 2 || n < fold_count {
        return Err(FoldError::BadFoldSpec { n, fold_count });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % fold_count;
    }
    Ok(FoldPlan { seed, n, fold_count, assignment })
}

impl FoldPlan {
    /// Held-out rows of `fold`, ascending.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Training rows for `fold` (every other fold), ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Independent, well-mixed seed for sub-task `index` of a run seeded with
/// `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
