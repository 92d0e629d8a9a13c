//! Sequential against rayon-parallel batches: an `s₀` sweep of open-loop
//! runs and a sweep of random designs with their Kronecker checks.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use funnelkit::batch::{design_sweep, par_map, run_batch, run_batch_seq};
use funnelkit::builtin::precompensator_scenario;
use funnelkit::diagnostics::kron_identities;
use funnelkit::paramdesign::design;
use funnelkit::{DesignRequest, FunnelParams, Mat, Scenario};

fn scenarios(n: usize) -> Vec<Scenario> {
    (0..n)
        .map(|k| {
            let mut sc = precompensator_scenario(1.0 + k as f64 * 0.5).unwrap();
            sc.tspan.1 = 4.0;
            sc
        })
        .collect()
}

fn requests(n: usize) -> Vec<DesignRequest> {
    let mut rng = StdRng::seed_from_u64(7);
    (0..n)
        .map(|_| {
            let r = rng.random_range(2..=5);
            let m = rng.random_range(1..=3);
            let s0 = rng.random_range(0.5..8.0);
            let rho = rng.random_range(1.1..3.0);
            DesignRequest::new(r, m, s0, rho, Mat::identity(m), FunnelParams::exp_boundary(1.0, 1.0, 0.1))
        })
        .collect()
}

fn bench_sweeps(c: &mut Criterion) {
    let scs = scenarios(8);
    let mut g = c.benchmark_group("s0_sweep");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sequential", scs.len()), |b| b.iter(|| run_batch_seq(&scs)));
    g.bench_function(BenchmarkId::new("parallel", scs.len()), |b| b.iter(|| run_batch(&scs)));
    g.finish();

    let reqs = requests(200);
    let mut g = c.benchmark_group("design_sweep");
    g.bench_function(BenchmarkId::new("sequential", reqs.len()), |b| {
        b.iter(|| {
            reqs.iter()
                .map(|q| design(q).and_then(|(p, _)| kron_identities(&p, None)).is_ok())
                .count()
        })
    });
    g.bench_function(BenchmarkId::new("parallel", reqs.len()), |b| b.iter(|| design_sweep(&reqs)));
    g.finish();

    // keep the generic helper honest against a trivial workload
    let xs: Vec<f64> = (0..10_000).map(f64::from).collect();
    c.bench_function("par_map_trivial", |b| b.iter(|| par_map(&xs, |x| x.sqrt()).len()));
}

criterion_group!(benches, bench_sweeps);
criterion_main!(benches);
