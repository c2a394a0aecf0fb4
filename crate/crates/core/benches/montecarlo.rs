//! Sequential against rayon execution for the two hot loops: Monte Carlo
//! error trials on a fixed solution and independent solves over seeds.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cicoord::experiment::{run_sweep, SweepAxis, SweepSpec};
use cicoord::montecarlo::estimate_outage;
use cicoord::{Execution, Instance, Scenario, ScenarioConfig, Scheme, SchemeKind, SchemeOptions};

fn modes() -> Vec<(&'static str, Execution)> {
    let mut v = vec![("sequential", Execution::Sequential)];
    if Execution::Parallel.is_parallel() {
        v.push(("parallel", Execution::Parallel));
    }
    v
}

fn outage_trials(c: &mut Criterion) {
    let s = Scenario::from_config(ScenarioConfig::default()).unwrap();
    let inst = Instance::generate(&s, 0, 0).unwrap();
    let sol = inst.solve(Scheme::Ci(SchemeKind::FullCiProb), &SchemeOptions::default()).unwrap();
    let mut g = c.benchmark_group("estimate_outage_5000");
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, 5000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let s = Scenario::from_config(ScenarioConfig::default()).unwrap();
    let spec = SweepSpec {
        axis: SweepAxis::GammaDb,
        grid: vec![10.0],
        schemes: vec![Scheme::Ci(SchemeKind::FullCiProb)],
        n_channel_seeds: 16,
        n_symbol_draws: 1,
        seed0: 0,
    };
    let opts = SchemeOptions::default();
    let mut g = c.benchmark_group("sweep_16_seeds");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_sweep(&s, &spec, &opts, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, outage_trials, seed_sweep);
criterion_main!(benches);
