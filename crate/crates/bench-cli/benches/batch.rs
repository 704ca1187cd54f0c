use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use homeo::batch::{map, map_sequential};
use homeo::gen::corpus;
use homeo::pipeline::{self, RunConfig};
use homeostasis::Mode;

fn pipeline_over_corpus(c: &mut Criterion) {
    let programs: Vec<String> = corpus(11, 8, 150..400).into_iter().map(|p| p.1).collect();
    let cfg = RunConfig::new(Mode::LzUpd);
    let run = |src: &String| pipeline::run(src, &cfg).map(|o| o.report.digest).unwrap();

    let mut g = c.benchmark_group("corpus-lzupd");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("batch", "sequential"), |b| {
        b.iter(|| map_sequential(&programs, run))
    });
    // Same as sequential when built without the `parallel` feature.
    g.bench_function(BenchmarkId::new("batch", "map"), |b| b.iter(|| map(&programs, run)));
    g.finish();
}

criterion_group!(benches, pipeline_over_corpus);
criterion_main!(benches);
