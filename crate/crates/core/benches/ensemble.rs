use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kpzlab::noise::NoisePath;
use kpzlab::par;
use kpzlab::renorm::{RenormSet, Scheme};
use kpzlab::solvers::{solve_renormalized, SolverConfig};
use kpzlab::spectral::{GridSpec, Mollifier};

fn member(base: &NoisePath, m: &Mollifier, c: f64, i: usize) -> f64 {
    let p = base.for_member(i as u64);
    let cfg = SolverConfig::for_noise(&p, m, Scheme::Fq, c);
    solve_renormalized(&p, &cfg).unwrap().path.last().mean()
}

fn ensemble(cr: &mut Criterion) {
    let g = GridSpec::new(64).unwrap();
    let m = Mollifier::bump2(0.1).unwrap();
    let c = RenormSet::compute(&m).unwrap().paper_constant(Scheme::Fq);
    let base = NoisePath::new(g, 2e-4, 250, 7).unwrap();
    let mut group = cr.benchmark_group("ensemble");
    group.sample_size(10);
    for members in [4, 16] {
        group.bench_with_input(BenchmarkId::new("sequential", members), &members, |b, &n| {
            b.iter(|| (0..n).map(|i| member(&base, &m, c, i)).collect::<Vec<_>>())
        });
        group.bench_with_input(BenchmarkId::new("parallel", members), &members, |b, &n| {
            b.iter(|| par::map_indexed(n, |i| member(&base, &m, c, i)))
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
