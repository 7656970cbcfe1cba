//! End-to-end verification of the solver's headline claims: mesh growth,
//! convergence orders in the linear and interacting regimes, quality of the
//! one-correction-per-level scheme against direct solves, Newton fixed-point
//! and contraction behavior, linear complexity, structural invariants, and
//! robustness at strong interaction.
//!
//! Each test prints one PASS line with the measured numbers (visible with
//! `--nocapture`).  Timing-sensitive checks share a lock so wall-clock
//! measurements never overlap.

use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use gpmg::linalg::interior_prolongation;
use gpmg::mesh::build_hierarchy;
use gpmg::{
    error_vs_reference, lambda_energy_gap, run_direct_all_levels, run_multigrid, BoxDomain,
    CsrMatrix, EigenPair, ErrorRecord, MultigridRun, Potential, ProblemParams, RunContext,
    ScfConfig, SolverOptions, SparseSymMatrix,
};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn params(dim: usize, gammas: Vec<f64>, zeta: f64) -> ProblemParams {
    ProblemParams::new(
        BoxDomain::unit(dim).unwrap(),
        Potential::new(gammas).unwrap(),
        zeta,
    )
    .unwrap()
}

/// The interacting unit-cube problem with unit trap coefficients, solved
/// both ways: a 4-level scheme run from 384 tetrahedra and a direct
/// reference chain one level finer.
struct CubeStudy {
    ctx4: RunContext,
    ctx5: RunContext,
    mg: MultigridRun,
    direct: MultigridRun,
    mg_errors: Vec<ErrorRecord>,
    direct_errors: Vec<ErrorRecord>,
    fixture_seconds: f64,
}

fn cube_study() -> &'static CubeStudy {
    static CELL: OnceLock<CubeStudy> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let p = params(3, vec![1.0, 1.0, 1.0], 1.0);
        let ctx5 = RunContext::prepare(&p, 4, 5).unwrap();
        let scf_ref = ScfConfig {
            residual_tol: 1e-11,
            ..ScfConfig::default()
        };
        let direct = run_direct_all_levels(&ctx5, &scf_ref).unwrap();
        let ctx4 = RunContext::prepare(&p, 4, 4).unwrap();
        let mg = run_multigrid(&ctx4, &ScfConfig::default(), &SolverOptions::default()).unwrap();
        let reference = direct.levels[4].pair.clone();
        let mg_errors = error_vs_reference(&ctx5, &mg, &reference).unwrap();
        let direct4 = MultigridRun {
            levels: direct.levels[..4].to_vec(),
            total_seconds: 0.0,
        };
        let direct_errors = error_vs_reference(&ctx5, &direct4, &reference).unwrap();
        CubeStudy {
            ctx4,
            ctx5,
            mg,
            direct,
            mg_errors,
            direct_errors,
            fixture_seconds: t.elapsed().as_secs_f64(),
        }
    })
}

/// A five-level run of the same problem with every saddle solve forced onto
/// the preconditioned iterative path, so each level costs work proportional
/// to its unknown count.
fn iterative_run() -> &'static MultigridRun {
    static CELL: OnceLock<MultigridRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let opts = SolverOptions {
            direct_max_dofs: 0,
            ..SolverOptions::default()
        };
        run_multigrid(&cube_study().ctx5, &ScfConfig::default(), &opts).unwrap()
    })
}

/// Least-squares slope of ln(err) against ln(h) over all records.
fn ls_order(records: &[ErrorRecord], err: impl Fn(&ErrorRecord) -> f64) -> f64 {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.h_max.ln(), err(r).ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (sxx, sxy) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 * p.0, a.1 + p.0 * p.1));
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

const LAMBDA_BRACKET: (f64, f64) = (1.75, 2.25);
const H1_BRACKET: (f64, f64) = (0.85, 1.15);
const L2_BRACKET: (f64, f64) = (1.75, 2.25);

fn in_bracket(v: f64, b: (f64, f64)) -> bool {
    v >= b.0 && v <= b.1
}

/// Order checks for one error table whose reference lives on
/// `ref_level`.  Consecutive-pair orders are asserted only up to two
/// levels below the reference; the pair touching the level next to the
/// reference is biased upward by construction (the reference's own
/// discretization error cancels a visible fraction of the finest run
/// level's), so for that pair the fitted slope over all levels stands in.
fn assert_order_table(records: &[ErrorRecord], ref_level: usize, label: &str) {
    for r in &records[1..] {
        if r.level + 2 > ref_level {
            continue;
        }
        assert!(
            in_bracket(r.order_lambda.unwrap(), LAMBDA_BRACKET),
            "{label} level {} eigenvalue order {:?}",
            r.level,
            r.order_lambda
        );
        assert!(
            in_bracket(r.order_h1.unwrap(), H1_BRACKET),
            "{label} level {} H1 order {:?}",
            r.level,
            r.order_h1
        );
        assert!(
            in_bracket(r.order_l2.unwrap(), L2_BRACKET),
            "{label} level {} L2 order {:?}",
            r.level,
            r.order_l2
        );
    }
    assert!(in_bracket(
        ls_order(records, |r| r.err_lambda),
        LAMBDA_BRACKET
    ));
    assert!(in_bracket(ls_order(records, |r| r.err_h1), H1_BRACKET));
    assert!(in_bracket(ls_order(records, |r| r.err_l2), L2_BRACKET));
}

#[test]
fn element_counts_reproduce_eightfold_growth() {
    let _g = gate();
    let t = Instant::now();
    let h = build_hierarchy(&BoxDomain::unit(3).unwrap(), 8, 5).unwrap();
    let counts: Vec<usize> = (1..=5).map(|l| h.mesh(l).n_cells()).collect();
    assert_eq!(counts, [3072, 24576, 196608, 1572864, 12582912]);
    drop(h);
    let desk = build_hierarchy(&BoxDomain::unit(3).unwrap(), 4, 4).unwrap();
    let desk_counts: Vec<usize> = (1..=4).map(|l| desk.mesh(l).n_cells()).collect();
    assert_eq!(desk_counts[0], 384);
    for w in desk_counts.windows(2) {
        assert_eq!(w[1], 8 * w[0]);
    }
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 60.0, "hierarchy construction took {secs:.1}s");
    println!("PASS element counts: {counts:?}, desk growth {desk_counts:?}, {secs:.2}s");
}

#[test]
fn linear_limit_converges_at_textbook_orders() {
    let _g = gate();
    let t = Instant::now();
    let scf = ScfConfig {
        residual_tol: 1e-11,
        ..ScfConfig::default()
    };
    let mut summaries = Vec::new();
    for (dim, m0) in [(1usize, 8usize), (2, 4)] {
        let p = params(dim, vec![0.0; dim], 0.0);
        let ctx = RunContext::prepare(&p, m0, 6).unwrap();
        let full = run_direct_all_levels(&ctx, &scf).unwrap();
        let exact = dim as f64 * std::f64::consts::PI.powi(2);
        for l in &full.levels {
            assert!(
                l.pair.lambda > exact,
                "dim {dim}: eigenvalue must approach {exact} from above, got {}",
                l.pair.lambda
            );
        }
        for w in full.levels.windows(2) {
            assert!(w[1].pair.lambda < w[0].pair.lambda);
        }
        let run = MultigridRun {
            levels: full.levels[..4].to_vec(),
            total_seconds: 0.0,
        };
        let recs = error_vs_reference(&ctx, &run, &full.finest().pair).unwrap();
        assert_order_table(&recs, 6, &format!("dim {dim}"));
        let last = recs.last().unwrap();
        summaries.push(format!(
            "dim {dim}: lambda gap {:.2e}, orders ({:.2}, {:.2}, {:.2})",
            full.finest().pair.lambda - exact,
            last.order_lambda.unwrap(),
            last.order_h1.unwrap(),
            last.order_l2.unwrap()
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 60.0, "linear study took {secs:.1}s");
    println!("PASS linear limit: {}; {secs:.1}s", summaries.join("; "));
}

#[test]
fn interacting_cube_orders_match_linear_rates() {
    let _g = gate();
    let s = cube_study();
    assert_eq!(s.mg.levels[0].elements, 384);
    assert_eq!(s.mg.levels.len(), 4);
    for w in s.mg_errors.windows(2) {
        assert!(w[1].err_h1 < w[0].err_h1, "H1 error must decrease");
    }
    assert_order_table(&s.mg_errors, 5, "cube");
    assert!(
        s.fixture_seconds < 600.0,
        "study took {:.0}s",
        s.fixture_seconds
    );
    let orders: Vec<String> = s.mg_errors[1..]
        .iter()
        .map(|r| {
            format!(
                "({:.2}, {:.2}, {:.2})",
                r.order_lambda.unwrap(),
                r.order_h1.unwrap(),
                r.order_l2.unwrap()
            )
        })
        .collect();
    println!(
        "PASS interacting orders: per-pair {} fitted ({:.2}, {:.2}, {:.2}); fixture {:.0}s",
        orders.join(" "),
        ls_order(&s.mg_errors, |r| r.err_lambda),
        ls_order(&s.mg_errors, |r| r.err_h1),
        ls_order(&s.mg_errors, |r| r.err_l2),
        s.fixture_seconds
    );
}

#[test]
fn correction_error_stays_below_discretization_error() {
    let _g = gate();
    let s = cube_study();
    let mut ratios = Vec::new();
    for k in 2..=4 {
        let asm = s.ctx4.assemblies(k);
        let a = asm.dofs().reduce(&s.mg.levels[k - 1].pair.u.values);
        let b = asm.dofs().reduce(&s.direct.levels[k - 1].pair.u.values);
        let sign = if asm.m_inner(&a, &b) < 0.0 { -1.0 } else { 1.0 };
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - sign * y).collect();
        let gap = asm.stiffness().quad_form(&diff, &diff).max(0.0).sqrt();
        let disc = s.direct_errors[k - 1].err_h1;
        assert!(
            gap <= 0.5 * disc,
            "level {k}: scheme-vs-direct H1 gap {gap:.3e} exceeds half of {disc:.3e}"
        );
        ratios.push(format!("{:.3}", gap / disc));
    }
    println!(
        "PASS correction gap: H1 gap/discretization = {}",
        ratios.join(", ")
    );
}

#[test]
fn newton_keeps_fixed_points_and_contracts_quadratically() {
    let _g = gate();
    let t = Instant::now();
    let p = params(2, vec![1.0, 1.0], 5.0);
    let ctx = RunContext::prepare(&p, 8, 1).unwrap();
    let asm = ctx.assemblies(1);
    let scf = ScfConfig::default();
    let (pair, _) = gpmg::solve_ground_state(asm, &scf, None).unwrap();
    let opts = SolverOptions::default();

    let (stepped, rep) = gpmg::newton_step(asm, &pair, None, &opts).unwrap();
    let res_after = gpmg::eigen_residual(asm, &stepped).unwrap();
    let solver_tol = rep.tol.max(scf.residual_tol);
    assert!(
        res_after <= 10.0 * solver_tol,
        "residual {res_after:.3e} after a step at the fixed point, tol {solver_tol:.3e}"
    );
    let du: Vec<f64> = stepped
        .u
        .values
        .iter()
        .zip(&pair.u.values)
        .map(|(a, b)| a - b)
        .collect();
    assert!(asm.m_norm(&asm.dofs().reduce(&du)) < 1e-6);
    assert!((stepped.lambda - pair.lambda).abs() < 1e-8);

    // Quadratic contraction from perturbed starts.  The per-trajectory
    // constant C = max_k r_{k+1}/r_k^2 must agree across perturbation
    // sizes, and the residuals themselves must scale as the square of the
    // perturbation, which pins the quadratic remainder directly.
    let mut cs = Vec::new();
    let mut firsts = Vec::new();
    let mut seconds = Vec::new();
    for eps in [3e-2, 1e-2] {
        let mut u = pair.u.clone();
        for (i, v) in u.values.iter_mut().enumerate() {
            if *v != 0.0 {
                *v += eps * ((i as f64) * 0.37).sin();
            }
        }
        let nrm = asm.m_norm(&asm.dofs().reduce(&u.values));
        for v in &mut u.values {
            *v /= nrm;
        }
        let g0 = EigenPair {
            lambda: pair.lambda,
            u,
        };
        let r0 = gpmg::eigen_residual(asm, &g0).unwrap();
        let (g1, _) = gpmg::newton_step(asm, &g0, None, &opts).unwrap();
        let r1 = gpmg::eigen_residual(asm, &g1).unwrap();
        let (g2, _) = gpmg::newton_step(asm, &g1, None, &opts).unwrap();
        let r2 = gpmg::eigen_residual(asm, &g2).unwrap();
        assert!(
            r1 < 0.1 * r0 && r2 < 0.1 * r1,
            "must contract: {r0:.2e} {r1:.2e} {r2:.2e}"
        );
        let c = (r1 / (r0 * r0)).max(r2 / (r1 * r1));
        assert!(r1 <= c * r0 * r0 && r2 <= c * r1 * r1);
        cs.push(c);
        firsts.push(r1);
        seconds.push(r2);
    }
    let spread = (cs[0] / cs[1]).max(cs[1] / cs[0]);
    assert!(
        spread <= 10.0,
        "contraction constants {cs:?} spread {spread:.2}"
    );
    // Quadratic remainder in the start: a 3x smaller perturbation shrinks
    // the first residual ~9x and the second ~81x.
    let first_ratio = firsts[0] / firsts[1];
    assert!(
        (4.5..=18.0).contains(&first_ratio),
        "first-step residual ratio {first_ratio:.1}, expected ~9"
    );
    let second_ratio = seconds[0] / seconds[1];
    assert!(
        (27.0..=243.0).contains(&second_ratio),
        "second-step residual ratio {second_ratio:.1}, expected ~81"
    );
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 60.0);
    println!(
        "PASS newton: fixed-point residual {res_after:.2e}, C = {:.3e}/{:.3e} (spread {spread:.2}), eps-scaling {first_ratio:.1}/{second_ratio:.1}; {secs:.1}s",
        cs[0], cs[1]
    );
}

#[test]
fn work_scales_linearly_with_unknowns() {
    let _g = gate();
    let run = iterative_run();
    assert!(run.levels.len() >= 3);
    let finest = run.finest();
    let ratio_total = run.total_seconds / finest.solve_seconds;
    assert!(
        ratio_total <= 2.5,
        "total {:.2}s vs finest {:.2}s (ratio {ratio_total:.2})",
        run.total_seconds,
        finest.solve_seconds
    );
    let prev = &run.levels[run.levels.len() - 2];
    let per_dof_fine = finest.solve_seconds / finest.dofs as f64;
    let per_dof_prev = prev.solve_seconds / prev.dofs as f64;
    assert!(
        per_dof_fine <= 3.0 * per_dof_prev,
        "per-unknown time grew: {per_dof_fine:.2e} vs {per_dof_prev:.2e}"
    );
    println!(
        "PASS linear complexity: total/finest {ratio_total:.2}, per-dof ratio {:.2} ({:.2e} vs {:.2e} s/dof)",
        per_dof_fine / per_dof_prev,
        per_dof_fine,
        per_dof_prev
    );
}

/// Largest relative defect between the transferred fine operator and the
/// coarse assembly, both directions, scaled by the coarse matrix's largest
/// entry.
fn galerkin_defect(p: &CsrMatrix, fine: &SparseSymMatrix, coarse: &SparseSymMatrix) -> f64 {
    let ptap = p
        .transpose()
        .matmul(fine.as_csr())
        .unwrap()
        .matmul(p)
        .unwrap();
    let scale = (0..coarse.n())
        .flat_map(|i| {
            coarse
                .row_entries(i)
                .map(|(_, v)| v.abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0f64, f64::max);
    let mut defect = 0.0f64;
    for i in 0..ptap.rows() {
        for (j, v) in ptap.row_entries(i) {
            defect = defect.max((v - coarse.get(i, j as usize)).abs());
        }
    }
    for i in 0..coarse.n() {
        for (j, v) in coarse.row_entries(i) {
            defect = defect.max((v - ptap.get(i, j)).abs());
        }
    }
    defect / scale
}

#[test]
fn structural_invariants_hold() {
    let _g = gate();
    let s = cube_study();

    // Transferring the fine operators reproduces the coarse assemblies.
    let mut worst = 0.0f64;
    for level in 1..=2 {
        let coarse = s.ctx5.assemblies(level);
        let fine = s.ctx5.assemblies(level + 1);
        let p = interior_prolongation(
            s.ctx5.hierarchy().prolongation(level),
            coarse.dofs(),
            fine.dofs(),
        )
        .unwrap();
        worst = worst.max(galerkin_defect(&p, fine.stiffness(), coarse.stiffness()));
        worst = worst.max(galerkin_defect(&p, fine.mass(), coarse.mass()));
    }
    assert!(worst <= 1e-11, "nestedness defect {worst:.3e}");

    // Assembled operators are exactly symmetric, including the
    // density-weighted one at a computed solution.
    for level in 1..=3 {
        let asm = s.ctx5.assemblies(level);
        assert_eq!(asm.stiffness().symmetry_defect(), 0.0);
        assert_eq!(asm.mass().symmetry_defect(), 0.0);
        assert_eq!(asm.potential_mass().symmetry_defect(), 0.0);
    }
    let asm1 = s.ctx5.assemblies(1);
    let nl = asm1
        .nonlinear_mass(&s.direct.levels[0].pair.u, 1.0)
        .unwrap();
    assert_eq!(nl.symmetry_defect(), 0.0);

    // Normalization drift shrinks with at least order 1.5 under
    // refinement (measured orders sit near 4: the constraint row ties the
    // drift to the squared correction size).
    let run = iterative_run();
    let drifts: Vec<f64> = run.levels[1..].iter().map(|l| l.norm_drift).collect();
    let mut drift_orders = Vec::new();
    for w in drifts.windows(2) {
        assert!(w[1] < w[0], "drift must decrease: {drifts:?}");
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.5, "drift order {order:.2} in {drifts:?}");
        drift_orders.push(format!("{order:.2}"));
    }

    // Every correction step honored its constraint row to solver accuracy.
    for l in s.mg.levels.iter().chain(&run.levels) {
        if let Some(rep) = &l.newton {
            assert!(
                rep.constraint_gap <= 10.0 * rep.tol,
                "level {} constraint gap {:.3e} vs tol {:.3e}",
                l.level,
                rep.constraint_gap,
                rep.tol
            );
        }
    }

    // The eigenvalue equals the energy identity at every converged pair.
    let mut worst_gap = 0.0f64;
    for l in &s.direct.levels {
        let gap = lambda_energy_gap(s.ctx5.assemblies(l.level), &l.pair).unwrap();
        worst_gap = worst_gap.max(gap);
    }
    worst_gap =
        worst_gap.max(lambda_energy_gap(s.ctx4.assemblies(1), &s.mg.levels[0].pair).unwrap());
    assert!(worst_gap <= 1e-9, "identity gap {worst_gap:.3e}");

    println!(
        "PASS invariants: nestedness {worst:.1e}, symmetry exact, drift orders [{}], constraint gaps ok, identity gap {worst_gap:.1e}",
        drift_orders.join(", ")
    );
}

#[test]
fn strong_interaction_run_stays_robust() {
    let _g = gate();
    let t = Instant::now();
    let s = cube_study();
    // The interaction 100 problem needs the finer of the two desk-scale
    // coarse meshes: one correction per level only converges once the
    // coarsest solve resolves the ground state reasonably well.
    let p2 = params(3, vec![1.0, 2.0, 4.0], 100.0);
    let ctx = RunContext::prepare(&p2, 8, 3).unwrap();
    let run = run_multigrid(&ctx, &ScfConfig::default(), &SolverOptions::default()).unwrap();
    assert_eq!(run.levels.len(), 3);
    // Residuals contract from level to level past the coarse solve.
    assert!(run.levels[2].residual < 0.2 * run.levels[1].residual);

    // Stronger repulsion raises the chemical potential on identical
    // meshes: compare against the unit-interaction run level by level
    // (the 8-per-axis chain meets the 4-per-axis chain one level down).
    for (l2, l1) in run.levels.iter().zip(&s.mg.levels[1..]) {
        assert_eq!(l2.elements, l1.elements, "runs must share meshes");
        assert!(
            l2.pair.lambda > l1.pair.lambda,
            "interaction 100 lambda {} vs unit {}",
            l2.pair.lambda,
            l1.pair.lambda
        );
    }

    // Energy descent over the final half of the converged coarse attempt.
    let (_, trace) =
        gpmg::solve_ground_state(ctx.assemblies(1), &ScfConfig::default(), None).unwrap();
    let es: Vec<f64> = trace.final_attempt().iter().map(|i| i.energy).collect();
    for w in es[es.len() / 2..].windows(2) {
        assert!(
            w[1] <= w[0] + 1e-12 * w[0].abs(),
            "energy rose late in the iteration: {} -> {}",
            w[0],
            w[1]
        );
    }
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 900.0, "strong-interaction run took {secs:.0}s");
    println!(
        "PASS strong interaction: lambdas {:?}, residuals {:?}, coarse iters {}, {secs:.0}s",
        run.levels.iter().map(|l| l.pair.lambda).collect::<Vec<_>>(),
        run.levels.iter().map(|l| l.residual).collect::<Vec<_>>(),
        trace.len()
    );
}
