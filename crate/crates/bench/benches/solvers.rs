use std::hint::black_box;

use asyrgs_bench::{problem, recipes};
use asyrgs_core::fcg::{fcg_solve, FcgConfig};
use asyrgs_core::lsq::{solve_lsq_sync, LsqSystem};
use asyrgs_core::replay::{replay, DelaySchedule, ReadModel};
use asyrgs_core::testkit::{random_rectangular, random_vector, MatrixRecipe};
use asyrgs_core::{set_write_mode, solve_async, solve_sync, AsyncConfig, SolveConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const SWEEPS: u64 = 5;

fn sync_sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("sync");
    for r in recipes() {
        let sys = problem(&r);
        let n = sys.dim();
        let cfg = SolveConfig::sweeps(n, SWEEPS, 1);
        g.throughput(Throughput::Elements(cfg.total_iterations));
        g.bench_with_input(BenchmarkId::from_parameter(&r), &sys, |b, sys| {
            b.iter(|| solve_sync(sys, &cfg, &vec![0.0; n], None).unwrap())
        });
    }
    g.finish();
}

fn async_threads(c: &mut Criterion) {
    let sys = problem(&MatrixRecipe::laplacian_grid(128));
    let n = sys.dim();
    let base = SolveConfig::sweeps(n, SWEEPS, 7);
    let mut g = c.benchmark_group("async");
    g.throughput(Throughput::Elements(base.total_iterations));
    g.sample_size(20);
    for threads in [1usize, 2, 4] {
        for atomic in [true, false] {
            let cfg = set_write_mode(&AsyncConfig::new(base.clone(), threads), atomic);
            let id = format!("{threads}t-{}", if atomic { "atomic" } else { "plain" });
            g.bench_function(id, |b| b.iter(|| solve_async(&sys, &cfg, &vec![0.0; n], None).unwrap()));
        }
    }
    let barrier = AsyncConfig::new(base.clone(), 2).with_sync_period(Some(n as u64));
    g.bench_function("2t-barrier-per-sweep", |b| {
        b.iter(|| solve_async(&sys, &barrier, &vec![0.0; n], None).unwrap())
    });
    g.finish();
}

fn delay_replay(c: &mut Criterion) {
    let sys = problem(&MatrixRecipe::banded_spd(2048, 3, 3));
    let n = sys.dim();
    let cfg = SolveConfig::sweeps(n, 2, 5);
    let mut g = c.benchmark_group("replay");
    g.throughput(Throughput::Elements(cfg.total_iterations));
    for tau in [0u64, 8, 64] {
        for (name, model) in [("consistent", ReadModel::Consistent), ("inconsistent", ReadModel::Inconsistent)] {
            let sched = DelaySchedule::uniform_random(tau, 9);
            g.bench_function(format!("{name}/tau={tau}"), |b| {
                b.iter(|| replay(&sys, &cfg, &sched, model, &vec![0.0; n], None).unwrap())
            });
        }
    }
    g.finish();
}

fn least_squares(c: &mut Criterion) {
    let a = random_rectangular(4000, 1000, 0.01, 11).unwrap();
    let sys = LsqSystem::from_rows(&a, &random_vector(4000, 12)).unwrap();
    let cfg = SolveConfig::sweeps(1000, SWEEPS, 13);
    let mut g = c.benchmark_group("lsq");
    g.throughput(Throughput::Elements(cfg.total_iterations));
    g.bench_function("4000x1000", |b| b.iter(|| solve_lsq_sync(&sys, &cfg, &[0.0; 1000], None).unwrap()));
    g.finish();
}

fn flexible_cg(c: &mut Criterion) {
    let sys = problem(&MatrixRecipe::laplacian_grid(48));
    let n = sys.dim();
    let mut g = c.benchmark_group("fcg");
    g.sample_size(10);
    for inner in [1u64, 4] {
        let cfg = FcgConfig::new(inner, 3).with_tol(1e-6);
        g.bench_with_input(BenchmarkId::new("inner_sweeps", inner), &cfg, |b, cfg| {
            b.iter(|| black_box(fcg_solve(&sys, cfg, &vec![0.0; n]).unwrap().1.outer_iterations))
        });
    }
    g.finish();
}

criterion_group!(benches, sync_sweeps, async_threads, delay_replay, least_squares, flexible_cg);
criterion_main!(benches);
