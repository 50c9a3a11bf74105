use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deadend_bench::{bench_dataset, bench_env, random_particles};
use deadend_core::assess::{Method, RiskAssessor};
use deadend_core::dataset::RewardMode;
use deadend_core::eval::{assessor_for, train_pair};
use deadend_core::learner::{train, HeadKind, TrainConfig};
use deadend_core::lifegate::risky_low_policy;
use deadend_core::risk::RiskLevel;

fn risk_benches(c: &mut Criterion) {
    let dist = random_particles(1000, 7);
    let alphas: Vec<RiskLevel> = (1..=50)
        .map(|i| RiskLevel::new(i as f64 / 50.0).unwrap())
        .collect();
    c.bench_function("cvar_spectrum_1000x50", |b| {
        b.iter(|| dist.cvar_spectrum(&alphas).unwrap())
    });
    let a = RiskLevel::new(0.1).unwrap();
    c.bench_function("cvar_alpha_1000", |b| b.iter(|| dist.cvar_alpha(a)));
}

fn training_benches(c: &mut Criterion) {
    let ds = bench_dataset(5_000);
    let base = TrainConfig {
        epochs: 1,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    // One epoch over 5k transitions = 156 optimizer steps.
    group.bench_function("iqn_epoch_5k", |b| {
        b.iter(|| train(&ds, RewardMode::D, &base, HeadKind::Iqn, true).unwrap())
    });
    let ddqn = TrainConfig {
        beta: 0.0,
        ..base.clone()
    };
    group.bench_function("ddqn_epoch_5k", |b| {
        b.iter(|| train(&ds, RewardMode::D, &ddqn, HeadKind::Ddqn, false).unwrap())
    });
    group.finish();
}

fn assessment_benches(c: &mut Criterion) {
    let ds = bench_dataset(5_000);
    let cfg = TrainConfig {
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let pair = train_pair(&ds, &cfg, HeadKind::Iqn, true).unwrap();
    let assessor: RiskAssessor = assessor_for(&pair, Method::DistDed, 0.1, &cfg).unwrap();
    let env = bench_env();
    let state = env.features(5, 2);
    let mut group = c.benchmark_group("assessment");
    group.sample_size(30);
    group.bench_function("assess_state_k1000", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(11),
            |mut rng| assessor.assess_state(&state, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn rollout_benches(c: &mut Criterion) {
    let env = bench_env();
    let policy = risky_low_policy(&env, 0.1).unwrap();
    c.bench_function("rollout_risky_low", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(23),
            |mut rng| env.rollout(&policy, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    risk_benches,
    training_benches,
    assessment_benches,
    rollout_benches
);
criterion_main!(benches);
