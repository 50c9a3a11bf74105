//! Shared fixtures for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deadend_core::dataset::{collect_random, OfflineDataset};
use deadend_core::lifegate::{GridSpec, LifeGate};
use deadend_core::risk::EmpiricalReturnDistribution;

pub fn bench_env() -> LifeGate {
    LifeGate::new(GridSpec::default_lifegate()).expect("default layout is valid")
}

pub fn bench_dataset(n: usize) -> OfflineDataset {
    collect_random(&bench_env(), n, 42).expect("collection succeeds")
}

pub fn random_particles(k: usize, seed: u64) -> EmpiricalReturnDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..0.0)).collect();
    EmpiricalReturnDistribution::new(samples, -1.0, 0.0).expect("valid particles")
}
