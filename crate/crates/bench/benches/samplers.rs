use std::hint::black_box;

use abcaw::engine::{compute_adaptive_weights, smc_weight_update};
use abcaw::kernels::{rule_of_thumb_bandwidths, BandwidthRule, Block};
use abcaw::models::{
    mg1_departure_recursion, simulate_cells, Mg1Queue, NormalMixture, ToggleConfig,
    ToggleSwitchParams,
};
use abcaw::rng::stream;
use abcaw::{run, KernelSpec, Model, RunConfig, ThresholdSchedule, Variant};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn population(n: usize) -> abcaw::ParticleSystem {
    let model = NormalMixture::default();
    let config = RunConfig::new(n, Variant::Smc, 1);
    abcaw::abc_rejection_init(&model, 2.0, &config)
        .unwrap()
        .population
}

fn bench_weight_update(c: &mut Criterion) {
    let model = NormalMixture::default();
    let mut group = c.benchmark_group("weight_update");
    for n in [500usize, 1000, 2000] {
        let prev = population(n);
        let h = rule_of_thumb_bandwidths(&prev, &BandwidthRule::new(2), Block::Theta).unwrap();
        let kernel = KernelSpec::gaussian(h).unwrap();
        let thetas: Vec<Vec<f64>> = prev.particles().iter().map(|p| p.theta.clone()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                smc_weight_update(
                    black_box(&thetas),
                    prev.particles(),
                    prev.weights(),
                    &kernel,
                    &model,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_adaptive_weights(c: &mut Criterion) {
    let prev = population(2000);
    let h = rule_of_thumb_bandwidths(&prev, &BandwidthRule::new(2), Block::X).unwrap();
    let kernel = KernelSpec::gaussian(h).unwrap();
    c.bench_function("adaptive_weights/2000", |b| {
        b.iter(|| compute_adaptive_weights(black_box(&prev), &[0.0], &kernel).unwrap())
    });
}

fn bench_full_run(c: &mut Criterion) {
    let model = NormalMixture::default();
    let schedule = ThresholdSchedule::new(vec![2.0, 0.5, 0.025]).unwrap();
    let mut group = c.benchmark_group("normal_mixture_run");
    group.sample_size(10);
    for variant in Variant::ALL {
        group.bench_function(variant.as_str(), |b| {
            b.iter(|| run(&model, &schedule, &RunConfig::new(500, variant, 7)).unwrap())
        });
    }
    group.finish();
}

fn bench_simulators(c: &mut Criterion) {
    let queue = Mg1Queue::synthetic(50, Mg1Queue::TRUTH, 1).unwrap();
    let w: Vec<f64> = (0..50).map(|k| (k % 7) as f64 * 0.9).collect();
    let u: Vec<f64> = (0..50).map(|k| 1.0 + (k % 5) as f64).collect();
    c.bench_function("mg1_recursion/50", |b| {
        b.iter(|| mg1_departure_recursion(black_box(&w), black_box(&u)).unwrap())
    });
    c.bench_function("mg1_simulate/50", |b| {
        let mut rng = stream(3, &[0]);
        b.iter(|| queue.simulate(&[1.0, 5.0, 0.2], &mut rng).unwrap())
    });

    let config = ToggleConfig {
        cells: 200,
        ..ToggleConfig::default()
    };
    let mut group = c.benchmark_group("toggle_simulate");
    group.sample_size(20);
    group.bench_function("200_cells", |b| {
        let mut rng = stream(4, &[0]);
        b.iter(|| simulate_cells(&ToggleSwitchParams::TRUTH, &config, &mut rng).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_weight_update,
    bench_adaptive_weights,
    bench_full_run,
    bench_simulators
);
criterion_main!(benches);
