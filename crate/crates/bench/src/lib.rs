//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnh::{pack, LabelSet, PackedCode, TernaryCode, Trit};

pub fn random_codes(n: usize, d: usize, seed: u64) -> Vec<PackedCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let trits = (0..d)
                .map(|_| match rng.random_range(0..3) {
                    0 => Trit::Neg,
                    1 => Trit::Zero,
                    _ => Trit::Pos,
                })
                .collect();
            pack(&TernaryCode::new(trits))
        })
        .collect()
}

pub fn random_labels(n: usize, classes: u32, seed: u64) -> Vec<LabelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| LabelSet::single(rng.random_range(0..classes))).collect()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}
