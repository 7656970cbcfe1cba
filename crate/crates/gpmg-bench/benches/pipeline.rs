//! Benchmarks along the solve pipeline: operator assembly, the SPD inner
//! solve, one Newton correction (direct and iterative saddle paths), and a
//! complete desk-scale multigrid run.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use gpmg::linalg::{pcg, SgsPrecond};
use gpmg::mesh::build_hierarchy;
use gpmg::{
    newton_step, run_multigrid, solve_ground_state, Assemblies, BoxDomain, ScfConfig, SolverOptions,
};
use gpmg_bench::{cube_context, cube_params};

fn bench_assembly(c: &mut Criterion) {
    let hierarchy = build_hierarchy(&BoxDomain::unit(3).unwrap(), 16, 1).unwrap();
    let mesh = Arc::clone(hierarchy.mesh(1));
    let params = cube_params();
    c.bench_function("assemble_operators_24576_tets", |b| {
        b.iter(|| Assemblies::build(Arc::clone(&mesh), &params).unwrap())
    });
}

fn bench_spd_solve(c: &mut Criterion) {
    let ctx = cube_context(16, 1);
    let asm = ctx.assemblies(1);
    let op = asm
        .stiffness()
        .linear_combination(1.0, asm.potential_mass(), 1.0)
        .unwrap();
    let n = op.n();
    let mut rhs = vec![0.0; n];
    asm.mass().matvec(&vec![1.0; n], &mut rhs);
    c.bench_function("pcg_sgs_3375_unknowns", |b| {
        b.iter_batched(
            || vec![0.0; n],
            |mut x| {
                let mut pre = SgsPrecond::new(&op);
                pcg(&op, &rhs, &mut x, &mut pre, 1e-10, 10_000).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_newton_correction(c: &mut Criterion) {
    let ctx = cube_context(4, 3);
    let (coarse, _) = solve_ground_state(ctx.assemblies(1), &ScfConfig::default(), None).unwrap();
    let (mid, _) = newton_step(
        ctx.assemblies(2),
        &ctx.prolongate_pair(&coarse, 2).unwrap(),
        Some(ctx.transfer_chain(2)),
        &SolverOptions::default(),
    )
    .unwrap();
    let guess = ctx.prolongate_pair(&mid, 3).unwrap();
    let chain = ctx.transfer_chain(3);

    let direct = SolverOptions::default();
    c.bench_function("newton_step_direct_3375_unknowns", |b| {
        b.iter(|| newton_step(ctx.assemblies(3), &guess, Some(chain), &direct).unwrap())
    });
    let iterative = SolverOptions {
        direct_max_dofs: 0,
        ..SolverOptions::default()
    };
    c.bench_function("newton_step_minres_3375_unknowns", |b| {
        b.iter(|| newton_step(ctx.assemblies(3), &guess, Some(chain), &iterative).unwrap())
    });
}

fn bench_multigrid_run(c: &mut Criterion) {
    let ctx = cube_context(4, 3);
    let mut group = c.benchmark_group("runs");
    group.sample_size(10);
    group.bench_function("multigrid_3_levels_24576_tets", |b| {
        b.iter(|| run_multigrid(&ctx, &ScfConfig::default(), &SolverOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_assembly,
    bench_spd_solve,
    bench_newton_correction,
    bench_multigrid_run
);
criterion_main!(benches);
