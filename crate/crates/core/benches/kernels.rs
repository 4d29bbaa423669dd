//! Forward, backward and feature kernels. Run once with default features and
//! once with `--no-default-features`; ids carry the mode so the two runs sit
//! side by side in criterion's report.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use disagree_gat::corpus::{CommentPair, Dataset, EntityList, Label};
use disagree_gat::featurize::{build_feature_rows, LexiconProvider, MentionPolicy};
use disagree_gat::gat::{AttnIndex, GatConfig, SentimentGat};
use disagree_gat::graph::class_weights;
use disagree_gat::synthetic::random_graph;
use std::hint::black_box;

const SIZES: [usize; 3] = [100, 400, 1600];

fn mode() -> &'static str {
    if disagree_gat::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("forward/{}", mode()));
    for n in SIZES {
        let graph = random_graph(n, n / 2, 1, true);
        let model = SentimentGat::new(GatConfig::default(), 42).unwrap();
        let index = AttnIndex::new(&graph, true);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| model.forward(black_box(&graph), &index, None).unwrap())
        });
    }
    group.finish();
}

fn loss_and_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("loss_backward/{}", mode()));
    for n in SIZES {
        let graph = random_graph(n, n / 2, 2, true);
        let mut model = SentimentGat::new(GatConfig::default(), 42).unwrap();
        let index = AttnIndex::new(&graph, true);
        let batch: Vec<usize> = (0..n).collect();
        let weights = class_weights(&graph.labels()).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                model.zero_grad();
                model.loss(&graph, &index, &batch, weights.as_slice(), None, true).unwrap()
            })
        });
    }
    group.finish();
}

#[cfg(feature = "parallel")]
fn thread_scaling(c: &mut Criterion) {
    let graph = random_graph(800, 400, 3, true);
    let mut model = SentimentGat::new(GatConfig::default(), 42).unwrap();
    let index = AttnIndex::new(&graph, true);
    let batch: Vec<usize> = (0..graph.n_samples()).collect();
    let weights = class_weights(&graph.labels()).unwrap();
    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut group = c.benchmark_group("loss_backward_threads");
    for threads in (0..).map(|i| 1usize << i).take_while(|&t| t <= max) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, _| {
            pool.install(|| {
                b.iter(|| {
                    model.zero_grad();
                    model.loss(&graph, &index, &batch, weights.as_slice(), None, true).unwrap()
                })
            })
        });
    }
    group.finish();
}

#[cfg(not(feature = "parallel"))]
fn thread_scaling(_: &mut Criterion) {}

fn feature_rows(c: &mut Criterion) {
    let names = ["carbon tax", "solar", "coal", "Greta", "ipcc", "wind power"];
    let entities = EntityList::from_lines(names, "bench").unwrap();
    let provider = LexiconProvider::builtin();
    let mut group = c.benchmark_group(format!("feature_rows/{}", mode()));
    for n in [200, 2000] {
        let pairs = (0..n)
            .map(|i| {
                let (a, b) = (names[i % names.len()], names[(i * 7 + 3) % names.len()]);
                CommentPair::new(
                    format!("p{i}"),
                    format!("a{i}"),
                    format!("b{i}"),
                    format!("I honestly think {a} is a good idea and {b} is a terrible one for the planet"),
                    format!("Not at all, {b} is great and {a} looks bad whatever anyone says about it"),
                    Label::ALL[i % 3],
                )
            })
            .collect();
        let dataset = Dataset::new(pairs, "bench").unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_feature_rows(black_box(&dataset), &entities, &provider, MentionPolicy::Mean).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward, loss_and_backward, thread_scaling, feature_rows);
criterion_main!(benches);
