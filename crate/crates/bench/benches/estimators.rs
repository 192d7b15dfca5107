use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gibbs_bench::{poly_instance, small_instance};
use gibbs_core::apps::{matching_counts, Graph, MATCHING_LIMIT};
use gibbs_core::integer::pcoef_integer;
use gibbs_core::pratio::{pratio_all, tpa};
use gibbs_core::rng::stream;
use gibbs_core::sampling::{estimate_products, BernoulliSources};
use gibbs_core::schedule::find_covering_schedule;
use gibbs_core::{exact_oracle, ConstantsProfile};

fn ratio_estimators(c: &mut Criterion) {
    let profile = ConstantsProfile::desk();
    let mut g = c.benchmark_group("ratio");
    g.sample_size(10);
    let a = small_instance();
    g.bench_function("tpa k=200 small", |b| b.iter(|| tpa(&mut exact_oracle(&a, 1), black_box(200)).unwrap()));
    for q in [2.0, 8.0] {
        let inst = poly_instance(2, q);
        g.bench_with_input(BenchmarkId::new("pratio_all poly m=2", q), &inst, |b, inst| {
            b.iter(|| pratio_all(&mut exact_oracle(inst, 1), 0.3, 0.25, &profile).unwrap())
        });
    }
    g.finish();
}

fn products(c: &mut Criterion) {
    let profile = ConstantsProfile::desk();
    c.bench_function("estimate_products N=8", |b| {
        b.iter(|| {
            let mut src = BernoulliSources { means: vec![0.5; 8], rng: stream(1, "bench") };
            estimate_products(&mut src, 4.0, 0.2, 0.25, &profile).unwrap()
        })
    });
}

fn counting(c: &mut Criterion) {
    let profile = ConstantsProfile::desk();
    let mut g = c.benchmark_group("counting");
    g.sample_size(10);
    let inst = poly_instance(2, 8.0);
    g.bench_function("covering schedule poly m=2", |b| {
        b.iter(|| find_covering_schedule(&mut exact_oracle(&inst, 1), 0.25, &profile).unwrap())
    });
    g.bench_function("pcoef_integer poly m=2", |b| {
        b.iter(|| pcoef_integer(&mut exact_oracle(&inst, 1), 0.1, 0.4, 0.25, &profile).unwrap())
    });
    let petersen = Graph::petersen();
    g.bench_function("matching counts petersen", |b| b.iter(|| matching_counts(black_box(&petersen), MATCHING_LIMIT).unwrap()));
    g.finish();
}

criterion_group!(benches, ratio_estimators, products, counting);
criterion_main!(benches);
