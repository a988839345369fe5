use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use tnh::{ActivationConfig, HashActivation, Network, NetworkConfig};
use tnh_bench::random_matrix;

fn reference_net() -> Network {
    Network::new(NetworkConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        code_dim: 16,
        num_classes: 10,
        activation: ActivationConfig::default(),
        seed: 1,
    })
    .unwrap()
}

fn bench_steps(c: &mut Criterion) {
    let net = reference_net();
    let x = random_matrix(64, 64, 2);
    let labels: Vec<usize> = (0..64).map(|i| i % 10).collect();
    c.bench_function("forward_b64", |b| {
        b.iter(|| net.forward(black_box(x.view()), 7).unwrap())
    });
    c.bench_function("backward_b64", |b| {
        b.iter(|| {
            net.backward(black_box(x.view()), &labels, HashActivation::Smooth(7))
                .unwrap()
        })
    });
}

criterion_group!(benches, bench_steps);
criterion_main!(benches);
