use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use brace_lstm::lstm::{Architecture, NetworkParams};
use brace_lstm::oracle::{generate_record, BoucWenParams, LoadingProtocol};
use brace_lstm::par::Execution;
use brace_lstm::sweep::prepare;
use brace_lstm::training::batch_gradient;

fn bench(c: &mut Criterion) {
    let record = generate_record(&LoadingProtocol::default(), &BoucWenParams::default()).unwrap();
    let data = prepare(&record, 30).unwrap();
    let net = NetworkParams::init(Architecture::new(1, 40, 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let indices: Vec<usize> = (0..256).collect();

    let mut group = c.benchmark_group("batch_gradient_256x30");
    group.sample_size(20);
    for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| batch_gradient(&net, &data.train, &indices, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
