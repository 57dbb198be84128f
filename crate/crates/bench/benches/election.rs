use criterion::{criterion_group, criterion_main, Criterion};
use electanon_bench::honest;
use electanon_core::scenario::{run, RunOptions};
use electanon_core::tally::TallyMethod;

fn election_benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("election");
    group.sample_size(10);
    for (name, tally) in [("borda_40x10", TallyMethod::Borda), ("tideman_40x10", TallyMethod::Tideman)] {
        let s = honest(40, 10, tally);
        group.bench_function(name, |b| b.iter(|| run(&s, RunOptions::default()).unwrap().report.winner));
    }
    group.finish();
}

criterion_group!(benches, election_benchmarks);
criterion_main!(benches);
