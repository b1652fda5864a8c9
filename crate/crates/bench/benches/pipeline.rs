use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use yoccoz_core::combinatorics::accumulation_matrix;
use yoccoz_core::{build_tree_with, compare, corpus, extract, GreenField, MapSpec, TreeOptions};

fn spec(name: &str, resolution: usize) -> MapSpec {
    corpus::fixture(name).unwrap().with_resolution(resolution).unwrap()
}

fn green_field(c: &mut Criterion) {
    let s = spec("bh_cubic", 1024);
    c.bench_function("green_field/bh_cubic/1024", |b| {
        b.iter(|| GreenField::compute(black_box(&s.coefficients), s.grid))
    });
}

fn tree(c: &mut Criterion) {
    let mut g = c.benchmark_group("tree");
    g.sample_size(10);
    for name in ["z2", "bh_cubic", "quartic_feed"] {
        let setup = spec(name, 1024).setup().unwrap();
        g.bench_function(format!("{name}/1024/depth8"), |b| {
            b.iter(|| build_tree_with(setup.clone(), 8, TreeOptions::keep()).unwrap())
        });
    }
    g.finish();
}

fn relation_and_compare(c: &mut Criterion) {
    let mut g = c.benchmark_group("combinatorics");
    g.sample_size(10);
    let t = build_tree_with(spec("bh_cubic", 1024).setup().unwrap(), 8, TreeOptions::keep()).unwrap();
    g.bench_function("accumulation/bh_cubic/depth8", |b| b.iter(|| accumulation_matrix(&t, 8, 32).unwrap()));
    let a = extract(&t, 8).unwrap();
    g.bench_function("compare/self/depth8", |b| b.iter(|| compare(&a, &a, 8).unwrap()));
    g.finish();
}

criterion_group!(benches, green_field, tree, relation_and_compare);
criterion_main!(benches);
