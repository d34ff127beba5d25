//! Inputs shared by the benchmarks.

use prufer_core::{sample_pair, MutationPair, PruferString, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_string(n: u32, seed: u64) -> PruferString {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<Vertex> = (0..n - 2).map(|_| rng.random_range(1..=n)).collect();
    PruferString::new(n, entries).unwrap()
}

pub fn random_pairs(n: u32, count: usize, seed: u64) -> Vec<MutationPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mu = rng.random_range(1..=n as usize - 2);
            sample_pair(n, mu, &mut rng)
        })
        .collect()
}
