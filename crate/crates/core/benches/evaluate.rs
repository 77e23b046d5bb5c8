use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ftrv::environment::gen_path;
use ftrv::evaluator::{evaluate, target_configs, EvalOptions};
use ftrv::gradient::grad_objective;
use ftrv::objective::{compile, standard_objective};
use ftrv::optimizer::{synthesize, OptimizerConfig};
use ftrv::simulate::sample_hitting_with;
use ftrv::strategy::{init_params, to_solution};
use ftrv::{Exec, SolutionSpec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn opts(exec: Exec) -> EvalOptions {
    EvalOptions { exec, ..EvalOptions::default() }
}

fn bench_evaluate(c: &mut Criterion) {
    let env = gen_path(7).unwrap();
    let spec = SolutionSpec::coordinated(2, 3);
    let obj = compile(&standard_objective(1.0, 0.0, None).unwrap(), &env, &spec).unwrap();
    let params = init_params(&env, &spec, 0).unwrap();
    let sol = to_solution(&params);
    let mut group = c.benchmark_group("p7_coord_2x3");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("evaluate", name), &exec, |b, &exec| {
            b.iter(|| evaluate(&env, black_box(&sol), &obj, &opts(exec)).unwrap().value)
        });
        group.bench_with_input(BenchmarkId::new("gradient", name), &exec, |b, &exec| {
            b.iter(|| grad_objective(&env, black_box(&params), &obj, &opts(exec)).unwrap().value)
        });
    }
    group.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let env = gen_path(5).unwrap();
    let spec = SolutionSpec::coordinated(2, 2);
    let obj = compile(&standard_objective(0.0, 0.0, None).unwrap(), &env, &spec).unwrap();
    let sol = to_solution(&init_params(&env, &spec, 1).unwrap());
    let ev = evaluate(&env, &sol, &obj, &EvalOptions::default()).unwrap();
    let target = target_configs(&ev.chain, 0, 0b11);
    let c0 = ev.best_bscc().members[0];
    let mut group = c.benchmark_group("p5_hitting_20k");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_hitting_with(&ev.chain, c0, &target, 20_000, 10_000, 7, exec).unwrap().mean)
        });
    }
    group.finish();
}

fn bench_synthesize(c: &mut Criterion) {
    let env = gen_path(5).unwrap();
    let spec = SolutionSpec::coordinated(2, 2);
    let obj = compile(&standard_objective(0.0, 0.0, None).unwrap(), &env, &spec).unwrap();
    let mut group = c.benchmark_group("p5_synthesize_4x50");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = OptimizerConfig { steps: 50, seeds: (0..4).collect(), ..OptimizerConfig::default() };
        cfg.eval.exec = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| synthesize(&env, &spec, &obj, cfg).unwrap().best_run().best_value)
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_simulate, bench_synthesize);
criterion_main!(benches);
