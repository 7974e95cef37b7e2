//! Data-parallel vs sequential execution of the heavy stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latentid::accumulation::{fit_samples, fit_weight_params, ParamGrid, WeightFunction};
use latentid::exec;
use latentid::extractor::{pair_probes, DEFAULT_TIMEOUT_MS};
use latentid::models::{train, ForestParams, ModelKind, ModelParams};
use latentid::pipeline::{dataset_from_trace, sweep_dataset};
use latentid::simulator::{simulate, SimConfig};

fn staircase() -> SimConfig {
    let mut cfg = SimConfig::staircase(0.1, 0.9, 5, 20.0, 1);
    cfg.probe_period_s = 0.2;
    cfg
}

fn modes(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10);
    g.bench_function(BenchmarkId::from_parameter("parallel"), |b| b.iter(&mut f));
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(|| exec::sequential(&mut f)));
    g.finish();
}

fn benches(c: &mut Criterion) {
    let (trace, _) = simulate(&staircase()).unwrap();
    let pairs = pair_probes(&trace, DEFAULT_TIMEOUT_MS).pairs;
    let grid = ParamGrid::default_bell();
    let samples = fit_samples(&trace, &pairs, &grid).unwrap();
    modes(c, "weight_grid_search", || {
        std::hint::black_box(fit_weight_params(&samples, &grid).unwrap());
    });

    let w = WeightFunction::bell(1.0).unwrap();
    let ds = dataset_from_trace(&trace, &w, 0.2, DEFAULT_TIMEOUT_MS).unwrap();
    let params = ModelParams {
        forest: ForestParams { n_trees: 32, ..Default::default() },
        ..Default::default()
    };
    modes(c, "forest_training", || {
        std::hint::black_box(train(ModelKind::Rf, &ds, &params).unwrap());
    });

    let cfg = staircase();
    modes(c, "utilization_sweep", || {
        std::hint::black_box(sweep_dataset(&cfg, &[0.2, 0.5, 0.8], 10.0, &w, DEFAULT_TIMEOUT_MS).unwrap());
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
