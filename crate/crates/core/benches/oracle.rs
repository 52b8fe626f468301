//! Parallel against sequential execution of the data-parallel hot paths.
//!
//! Benchmark ids carry the backend name, so the two builds land side by side
//! in one criterion report:
//!
//! ```text
//! cargo bench -p modelavg --bench oracle
//! cargo bench -p modelavg --bench oracle --no-default-features
//! ```
//!
//! With the `parallel` feature each workload also runs inside a one-thread
//! rayon pool, which separates scheduling overhead from the loop itself.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modelavg::oracle::{bpic_exact, ppic_exact};
use modelavg::pipeline::{evaluate_candidates, sweep, RunOptions};
use modelavg::synth::{gen_exp, ExpSynthConfig};
use modelavg::*;

/// Where a workload runs: the crate's default backend, or (with rayon) a
/// one-thread pool.
struct Runner {
    label: &'static str,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Runner {
    fn all() -> Vec<Runner> {
        #[cfg(feature = "parallel")]
        {
            let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            vec![
                Runner { label: "parallel", pool: None },
                Runner { label: "parallel-1thread", pool: Some(one) },
            ]
        }
        #[cfg(not(feature = "parallel"))]
        {
            vec![Runner { label: "sequential" }]
        }
    }

    fn run<T: Send>(&self, work: impl FnOnce() -> T + Send) -> T {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(work);
        }
        work()
    }
}

fn setup(n: usize) -> (ChiSqContext, FitResult) {
    let ds = gen_exp(&ExpSynthConfig { n, seed: 1, ..Default::default() }).unwrap();
    let part = SubsetPartition::from_min_coord(ds.coords(), 10.0).unwrap();
    let model = Family::Exponential { n_states: 1 }.build(None, None, None, 1.0).unwrap();
    let ctx = ChiSqContext::new(&ds, part, model).unwrap();
    let (res, _) = fit(&ctx, &FitOptions::default()).unwrap();
    (ctx, res)
}

fn oracle(c: &mut Criterion) {
    let (ctx, res) = setup(200);
    let mc = MCConfig { n_draws: 1 << 16, seed: 3, scale: 1.5 };
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    for r in Runner::all() {
        g.bench_function(BenchmarkId::new("bpic_exact", r.label), |b| {
            b.iter(|| r.run(|| black_box(bpic_exact(&ctx, &res, &mc).unwrap())))
        });
        g.bench_function(BenchmarkId::new("ppic_exact", r.label), |b| {
            b.iter(|| r.run(|| black_box(ppic_exact(&ctx, &res, &mc).unwrap())))
        });
    }
    g.finish();
}

fn candidates(c: &mut Criterion) {
    let ds = gen_exp(&ExpSynthConfig { n: 400, seed: 2, ..Default::default() }).unwrap();
    let models: Vec<ModelSpec> = (1..=2)
        .map(|s| Family::Exponential { n_states: s }.build(None, None, None, 1.0).unwrap())
        .collect();
    let parts: Vec<_> = (1..=20).map(|t| SubsetPartition::from_min_coord(ds.coords(), t as f64).unwrap()).collect();
    let cands = sweep(&models, &parts);
    let opts = RunOptions::default();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for r in Runner::all() {
        g.bench_function(BenchmarkId::new("evaluate_candidates", r.label), |b| {
            b.iter(|| r.run(|| black_box(evaluate_candidates(&ds, &cands, &opts)).len()))
        });
    }
    g.finish();
}

fn synth(c: &mut Criterion) {
    let cfg = ExpSynthConfig { n: 20_000, seed: 4, ..Default::default() };
    let mut g = c.benchmark_group("synth");
    for r in Runner::all() {
        g.bench_function(BenchmarkId::new("gen_exp", r.label), |b| {
            b.iter(|| r.run(|| black_box(gen_exp(&cfg).unwrap()).n()))
        });
    }
    g.finish();
}

criterion_group!(benches, oracle, candidates, synth);
criterion_main!(benches);
