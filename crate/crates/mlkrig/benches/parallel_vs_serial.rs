//! Parallel speedup benchmarks: the same public entry points driven on a
//! single-thread pool versus the default pool. Built without the
//! `parallel` feature, both variants run the plain sequential code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlkrig::data::Points;
use mlkrig::design::TrendBasis;
use mlkrig::kdtree::KdTree;
use mlkrig::kernels::{cov_matvec, CovarianceModel};
use mlkrig::mlbasis::MultilevelBasis;
use mlkrig::rng::stream_rng;
use nalgebra::DVector;
use rand::Rng;

#[cfg(feature = "parallel")]
fn run_with_threads<R>(threads: usize, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn run_with_threads<R>(_threads: usize, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    f()
}

fn variants() -> Vec<(&'static str, usize)> {
    #[cfg(feature = "parallel")]
    {
        vec![("serial", 1), ("parallel", num_cpus())]
    }
    #[cfg(not(feature = "parallel"))]
    {
        vec![("serial", 1)]
    }
}

#[cfg(feature = "parallel")]
fn num_cpus() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4)
}

fn random_points(n: usize, d: usize, seed: u64) -> Points {
    let mut rng = stream_rng(seed, 9000);
    Points::new((0..n * d).map(|_| rng.gen::<f64>()).collect(), d).unwrap()
}

fn bench_cov_matvec(c: &mut Criterion) {
    let mut group = c.benchmark_group("cov_matvec");
    group.sample_size(10);
    for &n in &[1000usize, 2000] {
        let pts = random_points(n, 3, 1);
        let model = CovarianceModel::new(1.25, 0.5, 1.0).unwrap();
        let mut rng = stream_rng(2, 9001);
        let v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        for (name, threads) in variants() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| {
                    run_with_threads(threads, || cov_matvec(&pts, &model, &v).unwrap())
                });
            });
        }
    }
    group.finish();
}

fn bench_basis_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("multilevel_basis_build");
    group.sample_size(10);
    for &n in &[2000usize, 4000] {
        let pts = random_points(n, 3, 3);
        let trend = TrendBasis::new(3, 2).unwrap();
        let x = trend.design_matrix(&pts).unwrap();
        let leaf = mlkrig::default_leaf_min(trend.p());
        let tree = KdTree::build(&pts, leaf).unwrap();
        for (name, threads) in variants() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| run_with_threads(threads, || MultilevelBasis::build(&x, &tree).unwrap()));
            });
        }
    }
    group.finish();
}

fn bench_batch_predict(c: &mut Criterion) {
    use mlkrig::solver::{solve_blup, SolveOptions};
    use mlkrig::ObservationSet;
    use std::sync::Arc;

    let mut group = c.benchmark_group("predict_batch");
    group.sample_size(10);
    let n = 1500usize;
    let pts = random_points(n, 3, 5);
    let trend = TrendBasis::new(3, 1).unwrap();
    let x = trend.design_matrix(&pts).unwrap();
    let tree = KdTree::build(&pts, mlkrig::default_leaf_min(trend.p())).unwrap();
    let basis = Arc::new(MultilevelBasis::build(&x, &tree).unwrap());
    let model = CovarianceModel::new(0.5, 0.4, 1.0).unwrap();
    let mut rng = stream_rng(6, 9002);
    let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let obs = ObservationSet::new(pts, y).unwrap();
    let opts = SolveOptions {
        tol: 1e-6,
        ..Default::default()
    };
    let (fit, _) = solve_blup(&obs, &trend, &basis, &model, &opts).unwrap();
    let queries = random_points(500, 3, 7);
    for (name, threads) in variants() {
        group.bench_function(BenchmarkId::new(name, 500), |b| {
            b.iter(|| run_with_threads(threads, || mlkrig::predict::predict_batch(&fit, &queries).unwrap()));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cov_matvec, bench_basis_build, bench_batch_predict);
criterion_main!(benches);
