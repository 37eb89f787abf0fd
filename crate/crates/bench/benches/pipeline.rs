use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use mdi_atten_bench::{reference, scenario, table};
use mdi_atten_core::{
    all_sifted_counts, averaged_key_rate, build_table, optimal_attenuation, secure_key_rate,
    SearchSettings, TransmittanceGrid,
};

fn pointwise(c: &mut Criterion) {
    let (sys, decoy) = reference();
    c.bench_function("sifted_counts_and_key_rate", |b| {
        b.iter(|| {
            let counts = all_sifted_counts(black_box(0.12), black_box(0.05), &sys, &decoy).unwrap();
            secure_key_rate(&counts, &sys, &decoy).unwrap()
        })
    });
    let search = SearchSettings::default();
    c.bench_function("optimal_attenuation", |b| {
        b.iter(|| {
            optimal_attenuation(black_box(0.3), black_box(0.02), &sys, &decoy, &search).unwrap()
        })
    });
}

fn table_build(c: &mut Criterion) {
    let (sys, decoy) = reference();
    let grid = TransmittanceGrid::uniform(0.02).unwrap();
    let search = SearchSettings::default();
    let mut group = c.benchmark_group("table");
    group.sample_size(10);
    group.bench_function("build_50x50", |b| {
        b.iter(|| build_table(&grid, &grid, &sys, &decoy, &search).unwrap())
    });
    group.finish();
}

fn averaging(c: &mut Criterion) {
    let t = Arc::new(table(0.005));
    let mut group = c.benchmark_group("averaged_key_rate");
    group.sample_size(20);
    let baseline = scenario(11.0, 0.8, 0.005, None);
    group.bench_function("baseline_200x200", |b| {
        b.iter(|| averaged_key_rate(&baseline).unwrap())
    });
    let dynamic = scenario(11.0, 0.8, 0.005, Some(t));
    group.bench_function("dynamic_200x200", |b| {
        b.iter(|| averaged_key_rate(&dynamic).unwrap())
    });
    group.finish();
}

criterion_group!(benches, pointwise, table_build, averaging);
criterion_main!(benches);
