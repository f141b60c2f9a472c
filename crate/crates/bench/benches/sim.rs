//! Hot paths under the stopwatch: routing, a full episode, corpus
//! digestion and pack (de)serialization.

use criterion::{criterion_group, criterion_main, Criterion};
use skypack_core::{
    assemble_pack, build_world, cell, generate_corpus, parse_pack, plan_path, promote, Harness,
    Method, MissionConfig, RunOptions,
};
use std::hint::black_box;

fn bench_routing(c: &mut Criterion) {
    let world = build_world(&MissionConfig::default()).unwrap();
    c.bench_function("route_corner_to_corner", |b| {
        b.iter(|| plan_path(&world, black_box(cell(0, 0)), black_box(cell(7, 7)), 0, 0, false))
    });
    c.bench_function("route_timed_through_window", |b| {
        b.iter(|| plan_path(&world, black_box(cell(0, 0)), black_box(cell(7, 7)), 3, 5, true))
    });
}

fn bench_episode(c: &mut Criterion) {
    let h = Harness::new(MissionConfig::default()).unwrap();
    let opts = RunOptions::default();
    c.bench_function("episode_with_k3", |b| {
        b.iter(|| h.run_episode(Method::WithK(3), black_box(7), &opts))
    });
    c.bench_function("episode_no_k", |b| {
        b.iter(|| h.run_episode(Method::NoK, black_box(7), &opts))
    });
}

fn bench_promotion(c: &mut Criterion) {
    let cfg = MissionConfig::default();
    let world = build_world(&cfg).unwrap();
    let corpus = generate_corpus(&world, 20);
    c.bench_function("promote_20_episode_corpus", |b| {
        b.iter(|| promote(black_box(&corpus), &world, &cfg.promotion).unwrap())
    });
}

fn bench_pack(c: &mut Criterion) {
    let cfg = MissionConfig::default();
    let world = build_world(&cfg).unwrap();
    let pack = promote(&generate_corpus(&world, 20), &world, &cfg.promotion).unwrap();
    c.bench_function("assemble_k5", |b| b.iter(|| assemble_pack(black_box(&pack), 5)));
    let wire = assemble_pack(&pack, 5);
    c.bench_function("parse_k5", |b| b.iter(|| parse_pack(black_box(&wire)).unwrap()));
}

criterion_group!(benches, bench_routing, bench_episode, bench_promotion, bench_pack);
criterion_main!(benches);
