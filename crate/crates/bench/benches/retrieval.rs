use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use tnh::{hamming, mean_ap, query_topk, ApNormalization, Cutoff, RetrievalIndex};
use tnh_bench::{random_codes, random_labels};

fn bench_hamming(c: &mut Criterion) {
    let mut group = c.benchmark_group("hamming");
    for d in [16usize, 32, 64, 128] {
        let codes = random_codes(2, d, d as u64);
        group.bench_with_input(BenchmarkId::from_parameter(d), &codes, |b, codes| {
            b.iter(|| hamming(black_box(&codes[0]), black_box(&codes[1])).unwrap())
        });
    }
    group.finish();
}

fn bench_query(c: &mut Criterion) {
    let mut group = c.benchmark_group("query_topk");
    let n = 59_000;
    for d in [16usize, 128] {
        let codes = random_codes(n + 1, d, 7);
        let index = RetrievalIndex::new(&codes[1..], random_labels(n, 10, 3)).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        for (name, cutoff) in [("all", Cutoff::All), ("top1000", Cutoff::Top(1000))] {
            group.bench_function(BenchmarkId::new(name, d), |b| {
                b.iter(|| query_topk(&index, black_box(&codes[0]), cutoff).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_map(c: &mut Criterion) {
    let d = 32;
    let index_codes = random_codes(4500, d, 11);
    let index = RetrievalIndex::new(&index_codes, random_labels(4500, 10, 12)).unwrap();
    let queries = random_codes(100, d, 13);
    let query_labels = random_labels(100, 10, 14);
    c.bench_function("mean_ap_4500x100_d32", |b| {
        b.iter(|| mean_ap(&index, &queries, &query_labels, Cutoff::All, ApNormalization::default()).unwrap())
    });
}

criterion_group!(benches, bench_hamming, bench_query, bench_map);
criterion_main!(benches);
