use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use crlab::holder;
use crlab::homotopy::HomotopyOperator;
use crlab::smoothing::{smooth, Mollifier};
use crlab_bench::{bench_field, bench_state, interior};

fn holder_norm(c: &mut Criterion) {
    let mut group = c.benchmark_group("holder_norm");
    for res in [33usize, 65] {
        let u = bench_field(2, res, 7);
        for a in [1.0f64, 2.5] {
            group.bench_with_input(
                BenchmarkId::new(format!("res{res}"), a),
                &a,
                |b, &a| b.iter(|| holder::norm(&u, a).unwrap()),
            );
        }
    }
    group.finish();
}

fn smoothing(c: &mut Criterion) {
    let mut group = c.benchmark_group("smooth");
    for (dim, res) in [(2usize, 129usize), (3, 41)] {
        let u = bench_field(dim, res, 11);
        let moll = Mollifier::build(dim, 4).unwrap();
        let out = interior(&u.mask, 0.3);
        group.bench_function(format!("dim{dim}_res{res}"), |b| {
            b.iter(|| smooth(&u, 0.2, &moll, &out).unwrap())
        });
    }
    group.finish();
}

fn homotopy_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("cgnr");
    group.sample_size(10);
    for res in [17usize, 25] {
        let st = bench_state(2, res);
        let op = HomotopyOperator::build(&st).unwrap();
        let u = crlab::smoothing::oscillatory_field(&st.domain.mask, 1.0, 20.0, 3);
        let phi = st.dbar_m(&u).unwrap();
        group.bench_function(format!("solve_p_res{res}"), |b| {
            b.iter(|| op.solve_p(&phi).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, holder_norm, smoothing, homotopy_solve);
criterion_main!(benches);
