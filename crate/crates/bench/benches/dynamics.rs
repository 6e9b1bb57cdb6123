use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fastgate::{expand_to_kick_train, min_repetition_rate, CoulombModel, DynamicsOptions, GateDynamics};
use fastgate_bench::{gpg_sequence, paul_pair};

fn simulate(c: &mut Criterion) {
    let trap = paul_pair();
    let seq = gpg_sequence(&trap, 8, 0.5);
    let full = GateDynamics::new(&trap, CoulombModel::Full, DynamicsOptions::default()).unwrap();
    let train = expand_to_kick_train(&seq, 4.0 * min_repetition_rate(&seq).unwrap()).unwrap();

    let mut group = c.benchmark_group("ode");
    group.bench_function("groups, infinite rate", |b| {
        b.iter(|| full.sequence_infidelity(black_box(&seq), trap.mean_occupation).unwrap())
    });
    group.bench_function("kick train", |b| {
        b.iter(|| full.train_infidelity(black_box(&train), seq.start, seq.end(), trap.mean_occupation).unwrap())
    });
    group.finish();
}

criterion_group!(benches, simulate);
criterion_main!(benches);
