//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tableseq::synth::{generate_sample, random_table, DatasetConfig};
use tableseq::Table;

/// `n` random tables of up to `max x max` slots, fixed seed.
pub fn tables(n: usize, max: usize) -> Vec<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n).map(|_| random_table(&mut rng, 1..=max, 1..=max, 3)).collect()
}

/// Rendered synthetic tables with text boxes.
pub fn rendered(n: usize) -> Vec<Table> {
    let cfg = DatasetConfig { count: n, ..DatasetConfig::default() };
    (0..n).map(|i| generate_sample(&cfg, i).expect("default config renders").rendered.table).collect()
}
