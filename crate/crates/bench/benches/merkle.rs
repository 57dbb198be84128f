use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use electanon_bench::leaves;
use electanon_core::crypto::Crypto;
use electanon_core::merkle::{build_tree, verify_proof};

fn merkle_benchmarks(c: &mut Criterion) {
    let crypto = Crypto::default();
    let mut group = c.benchmark_group("merkle");
    for n in [256usize, 4096] {
        let l = leaves(n);
        group.bench_with_input(BenchmarkId::new("build_h20", n), &l, |b, l| {
            b.iter(|| black_box(build_tree(&crypto, l, 20).unwrap().root()))
        });
    }
    let l = leaves(1024);
    let tree = build_tree(&crypto, &l, 20).unwrap();
    let proof = tree.proof(777).unwrap();
    group.bench_function("verify_h20", |b| {
        b.iter(|| black_box(verify_proof(&crypto, &tree.root(), &l[777], &proof)))
    });
    group.finish();
}

criterion_group!(benches, merkle_benchmarks);
criterion_main!(benches);
