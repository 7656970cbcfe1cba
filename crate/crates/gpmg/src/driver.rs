//! End-to-end solve orchestration and CSV output.
//!
//! Two modes share one record format: the multigrid run solves the
//! nonlinear problem only on the coarsest mesh and applies a single
//! Newton correction after each refinement; the reference mode repeats
//! the full self-consistent iteration on every level, warm-started from
//! the level below.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::assembly::{Assemblies, ProblemParams};
use crate::error::Error;
use crate::linalg::interior_prolongation;
use crate::mesh::{build_hierarchy, prolongate, LevelHierarchy};
use crate::newton::{eigen_residual, newton_step, NewtonStepReport};
use crate::scf::{solve_ground_state, EigenPair, ScfConfig};
use crate::sparse::CsrMatrix;
use crate::{Result, SolverOptions};

/// Meshes, operators, and transfer chains for one problem, built once and
/// shared by both modes.
pub struct RunContext {
    params: ProblemParams,
    hierarchy: LevelHierarchy,
    assemblies: Vec<Assemblies>,
    interior_prolongations: Vec<Arc<CsrMatrix>>,
    build_seconds: Vec<f64>,
}

impl RunContext {
    pub fn prepare(params: &ProblemParams, cells_per_axis: usize, n_levels: usize) -> Result<Self> {
        let t0 = Instant::now();
        let hierarchy = build_hierarchy(&params.domain, cells_per_axis, n_levels)?;
        let mut assemblies = Vec::with_capacity(n_levels);
        let mut build_seconds = Vec::with_capacity(n_levels);
        let mut prev = t0.elapsed().as_secs_f64() / n_levels as f64;
        for level in 1..=n_levels {
            let t = Instant::now();
            assemblies.push(Assemblies::build(hierarchy.mesh(level).clone(), params)?);
            build_seconds.push(prev + t.elapsed().as_secs_f64());
            prev = 0.0;
        }
        let mut interior_prolongations = Vec::with_capacity(n_levels.saturating_sub(1));
        for level in 1..n_levels {
            let p = hierarchy.prolongation(level);
            interior_prolongations.push(Arc::new(interior_prolongation(
                p,
                assemblies[level - 1].dofs(),
                assemblies[level].dofs(),
            )?));
        }
        Ok(RunContext {
            params: params.clone(),
            hierarchy,
            assemblies,
            interior_prolongations,
            build_seconds,
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn n_levels(&self) -> usize {
        self.assemblies.len()
    }

    pub fn hierarchy(&self) -> &LevelHierarchy {
        &self.hierarchy
    }

    pub fn assemblies(&self, level: usize) -> &Assemblies {
        &self.assemblies[level - 1]
    }

    /// Interior-to-interior transfer chain from the coarsest level up to
    /// `level`; a correction step on that level wants exactly this slice.
    pub fn transfer_chain(&self, level: usize) -> &[Arc<CsrMatrix>] {
        &self.interior_prolongations[..level - 1]
    }

    /// Interpolates a pair one level up, keeping its eigenvalue.
    pub fn prolongate_pair(&self, pair: &EigenPair, fine_level: usize) -> Result<EigenPair> {
        if pair.u.level + 1 != fine_level {
            return Err(Error::LevelMismatch {
                expected: pair.u.level + 1,
                got: fine_level,
            });
        }
        let u = prolongate(self.hierarchy.prolongation(pair.u.level), &pair.u)?;
        Ok(EigenPair {
            lambda: pair.lambda,
            u,
        })
    }
}

/// Per-level record of a run, in either mode.
#[derive(Debug, Clone)]
pub struct RunLevel {
    pub level: usize,
    pub elements: usize,
    pub dofs: usize,
    pub h_max: f64,
    pub pair: EigenPair,
    /// Weighted residual of the nonlinear eigenproblem at this level's pair.
    pub residual: f64,
    /// `|(u,u)_M - 1|` of the accepted pair.
    pub norm_drift: f64,
    pub scf_iterations: usize,
    pub newton: Option<NewtonStepReport>,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct MultigridRun {
    pub levels: Vec<RunLevel>,
    pub total_seconds: f64,
}

impl MultigridRun {
    pub fn finest(&self) -> &RunLevel {
        self.levels.last().expect("runs visit at least one level")
    }
}

fn record_level(
    asm: &Assemblies,
    pair: EigenPair,
    scf_iterations: usize,
    newton: Option<NewtonStepReport>,
    build_seconds: f64,
    solve_seconds: f64,
) -> Result<RunLevel> {
    let residual = eigen_residual(asm, &pair)?;
    let interior = asm.dofs().reduce(&pair.u.values);
    let norm_drift = (asm.m_inner(&interior, &interior) - 1.0).abs();
    Ok(RunLevel {
        level: asm.level(),
        elements: asm.mesh().n_cells(),
        dofs: asm.n_interior(),
        h_max: asm.mesh().h_max(),
        pair,
        residual,
        norm_drift,
        scf_iterations,
        newton,
        build_seconds,
        solve_seconds,
    })
}

/// Full nonlinear solve on the coarsest mesh, then one Newton correction
/// per refinement level.
pub fn run_multigrid(
    ctx: &RunContext,
    scf: &ScfConfig,
    opts: &SolverOptions,
) -> Result<MultigridRun> {
    let t_run = Instant::now();
    let t = Instant::now();
    let (mut pair, trace) = solve_ground_state(ctx.assemblies(1), scf, None)?;
    let mut levels = vec![record_level(
        ctx.assemblies(1),
        pair.clone(),
        trace.len(),
        None,
        ctx.build_seconds[0],
        t.elapsed().as_secs_f64(),
    )?];
    for level in 2..=ctx.n_levels() {
        let t = Instant::now();
        let guess = ctx.prolongate_pair(&pair, level)?;
        let chain = ctx.transfer_chain(level);
        let (corrected, report) = newton_step(ctx.assemblies(level), &guess, Some(chain), opts)?;
        pair = corrected;
        levels.push(record_level(
            ctx.assemblies(level),
            pair.clone(),
            0,
            Some(report),
            ctx.build_seconds[level - 1],
            t.elapsed().as_secs_f64(),
        )?);
    }
    Ok(MultigridRun {
        levels,
        total_seconds: t_run.elapsed().as_secs_f64(),
    })
}

/// Reference mode: the damped self-consistent iteration runs to full
/// tolerance on every level, warm-started from the interpolated pair of
/// the level below.
pub fn run_direct_all_levels(ctx: &RunContext, scf: &ScfConfig) -> Result<MultigridRun> {
    let t_run = Instant::now();
    let mut levels = Vec::with_capacity(ctx.n_levels());
    let mut prev: Option<EigenPair> = None;
    for level in 1..=ctx.n_levels() {
        let t = Instant::now();
        let warm = match &prev {
            Some(pair) => Some(ctx.prolongate_pair(pair, level)?),
            None => None,
        };
        let (pair, trace) = solve_ground_state(ctx.assemblies(level), scf, warm.as_ref())?;
        levels.push(record_level(
            ctx.assemblies(level),
            pair.clone(),
            trace.len(),
            None,
            ctx.build_seconds[level - 1],
            t.elapsed().as_secs_f64(),
        )?);
        prev = Some(pair);
    }
    Ok(MultigridRun {
        levels,
        total_seconds: t_run.elapsed().as_secs_f64(),
    })
}

/// Writes one row per level: discretization size, eigenvalue, residual,
/// norm drift, work counters, and timings.
pub fn write_run_csv(run: &MultigridRun, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "level,elements,dofs,h_max,lambda,residual,norm_drift,scf_iterations,newton_method,newton_iters,newton_residual,build_seconds,solve_seconds"
    )?;
    for l in &run.levels {
        let (method, iters, nres) = match &l.newton {
            Some(r) => (r.method, r.iters, format!("{:.6e}", r.solver_residual)),
            None => ("scf", 0, String::from("")),
        };
        writeln!(
            f,
            "{},{},{},{:.6e},{:.16e},{:.6e},{:.6e},{},{},{},{},{:.3e},{:.3e}",
            l.level,
            l.elements,
            l.dofs,
            l.h_max,
            l.pair.lambda,
            l.residual,
            l.norm_drift,
            l.scf_iterations,
            method,
            iters,
            nres,
            l.build_seconds,
            l.solve_seconds,
        )?;
    }
    Ok(())
}

/// Side-by-side comparison of the two modes on the same hierarchy:
/// eigenvalue gap and M-norm distance per level.
pub fn write_compare_csv(
    ctx: &RunContext,
    multigrid: &MultigridRun,
    direct: &MultigridRun,
    path: &Path,
) -> Result<()> {
    if multigrid.levels.len() != direct.levels.len() {
        return Err(Error::DimensionMismatch {
            expected: multigrid.levels.len(),
            got: direct.levels.len(),
        });
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "level,dofs,lambda_multigrid,lambda_direct,lambda_gap,l2_distance,seconds_multigrid,seconds_direct"
    )?;
    for (mg, dr) in multigrid.levels.iter().zip(&direct.levels) {
        let asm = ctx.assemblies(mg.level);
        let a = asm.dofs().reduce(&mg.pair.u.values);
        let b = asm.dofs().reduce(&dr.pair.u.values);
        // Eigenfunctions are sign-normalized, but stay robust anyway.
        let sign = if asm.m_inner(&a, &b) < 0.0 { -1.0 } else { 1.0 };
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - sign * y).collect();
        writeln!(
            f,
            "{},{},{:.16e},{:.16e},{:.6e},{:.6e},{:.3e},{:.3e}",
            mg.level,
            mg.dofs,
            mg.pair.lambda,
            dr.pair.lambda,
            (mg.pair.lambda - dr.pair.lambda).abs(),
            asm.m_norm(&diff),
            mg.solve_seconds,
            dr.solve_seconds,
        )?;
    }
    Ok(())
}
