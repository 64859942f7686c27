use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nfbt_bench::{desk, scenario, untrained_model};
use nfbt_core::alloc::{allocate_beams, SortedCandidates};
use nfbt_core::baselines::downlink_omp_dictionary;
use nfbt_core::codebook::label_scenario;
use nfbt_core::dataset;
use nfbt_core::experiment::{Evaluator, Models, SweepPoint, TraceOptions};
use nfbt_core::gnn::loss_and_gradients;
use nfbt_core::pilot::{wide_beam_sweep, Scheme};
use nfbt_core::seed;

fn channel_and_codebook(c: &mut Criterion) {
    let cfg = desk();
    let geom = cfg.geometry().unwrap();
    let sc_cfg = cfg.scenario_config(cfg.num_users).unwrap();
    c.bench_function("generate_scenario desk", |b| {
        b.iter(|| nfbt_core::scenario::generate_scenario(&geom, &sc_cfg, black_box(11)).unwrap())
    });

    let cb = cfg.near_field_codebook().unwrap();
    let sc = scenario(&cfg).unwrap();
    c.bench_function("label_scenario desk", |b| b.iter(|| label_scenario(black_box(&sc), &cb)));

    let wide = cfg.wide_codebook().unwrap();
    let pilot = cfg.pilot_config(cfg.p_ul_dbm, cfg.num_users);
    c.bench_function("wide_beam_sweep desk", |b| {
        b.iter(|| wide_beam_sweep(&sc, &wide, &pilot, &mut seed::rng(1, 1)).unwrap())
    });

    let dict = downlink_omp_dictionary(&wide, &cb).unwrap();
    let gains = wide_beam_sweep(&sc, &wide, &pilot, &mut seed::rng(1, 1)).unwrap();
    c.bench_function("omp_estimate desk L=2", |b| b.iter(|| dict.estimate(black_box(&gains[0].data), 2).unwrap()));
}

fn gnn(c: &mut Criterion) {
    let mut cfg = desk();
    cfg.samples = 64;
    let data = dataset::generate(&cfg).unwrap();
    let (train, _) = data.splits(cfg.num_users).unwrap();
    let model = untrained_model(&cfg).unwrap();
    let batch = train.subset(&(0..32).collect::<Vec<_>>());
    let x = &batch.x * model.input_scale;

    c.bench_function("gnn predict one scenario", |b| b.iter(|| model.predict(black_box(&data.samples[0].gains)).unwrap()));
    c.bench_function("gnn loss+gradients batch 32", |b| {
        b.iter(|| loss_and_gradients(&model, &x, &batch.groups, &batch.angle_labels, &batch.dist_labels).unwrap())
    });
}

fn allocation(c: &mut Criterion) {
    let k = 8;
    let sorted: Vec<SortedCandidates> = (0..k)
        .map(|u| SortedCandidates {
            c: (0..k).map(|j| 1 + (u + j) % k).collect(),
            r_sort: (0..k).map(|j| 1.0 - 0.1 * j as f64 - 0.01 * u as f64).collect(),
        })
        .collect();
    c.bench_function("allocate_beams K=8 full conflict", |b| {
        b.iter_batched(|| sorted.clone(), |s| allocate_beams(&s).unwrap(), BatchSize::SmallInput)
    });
}

fn end_to_end(c: &mut Criterion) {
    let mut cfg = desk();
    cfg.schemes = vec![Scheme::Exhaustive, Scheme::Gnn, Scheme::Omp];
    let model = untrained_model(&cfg).unwrap();
    let eval = Evaluator::new(&cfg, Models { gnn: Some(&model), fc: None }, TraceOptions::default()).unwrap();
    let point = SweepPoint::nominal(&cfg);
    let mut group = c.benchmark_group("evaluate scenario");
    group.sample_size(20);
    group.bench_function("desk, three schemes", |b| b.iter(|| eval.scenario_rows(&point, black_box(5)).unwrap()));
    group.finish();
}

criterion_group!(benches, channel_and_codebook, gnn, allocation, end_to_end);
criterion_main!(benches);
