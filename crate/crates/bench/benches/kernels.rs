use acclab::calculus_orders::{finite, sc_compose_pipeline, CalculusOrders};
use acclab::corner_blowup::{build_space, SpaceKind};
use acclab::heat::{cone_mode_kernel, full_kernel_eigen, ExpansionOptions};
use acclab::model_geometry::WarpFamily;
use acclab::phg_index::{q, Dims};
use acclab::spectral::{solve_mode, solve_mode_richardson, SLGrid, SolverOptions};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn bookkeeping(c: &mut Criterion) {
    let a = finite(&[(0, 1, 0), (1, 2, 1), (3, 1, 0)]);
    let b = finite(&[(-1, 3, 0), (2, 1, 2)]);
    c.bench_function("index_set_sum", |bn| bn.iter(|| black_box(&a).sum(black_box(&b))));
    c.bench_function("build_acc_triple_heat", |bn| bn.iter(|| build_space(black_box(SpaceKind::AccTripleHeat))));
    let x = CalculusOrders::sc(q(-1, 1), a.clone(), b.clone());
    let y = CalculusOrders::sc(q(-3, 2), b.clone(), a.clone());
    let d = Dims::new(3);
    c.bench_function("sc_compose_pipeline", |bn| bn.iter(|| sc_compose_pipeline(&x, &y, &d).unwrap()));
}

fn spectral(c: &mut Criterion) {
    let fam = WarpFamily::capped(3, 1.0, 4).unwrap();
    let op = fam.radial_operator(2.0, 0.05).unwrap();
    let grid = SLGrid::for_operator(&op, 2048).unwrap();
    c.bench_function("solve_mode_2048_x10", |bn| bn.iter(|| solve_mode(&op, &grid, 10).unwrap()));
    let opts = SolverOptions::default();
    c.bench_function("richardson_pair_2048", |bn| bn.iter(|| solve_mode_richardson(&op, 10, &opts).unwrap()));
}

fn heat(c: &mut Criterion) {
    c.bench_function("cone_mode_kernel", |bn| {
        bn.iter(|| cone_mode_kernel(black_box(2.5), 3, black_box(0.4), black_box(0.6), black_box(0.05)).unwrap())
    });
    let fam = WarpFamily::capped(3, 0.5, 24).unwrap();
    let opts = ExpansionOptions { cells: 512, tail_tol: 1e-12 };
    let mut g = c.benchmark_group("expansion");
    g.sample_size(10);
    g.bench_function("full_kernel_eigen_512", |bn| {
        bn.iter(|| full_kernel_eigen(&fam, 0.1, 0.5, 0.5, &[0.1, 0.5], &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bookkeeping, spectral, heat);
criterion_main!(benches);
