//! Damped self-consistent iteration for the ground state on one mesh.
//!
//! Each step freezes the density, solves the smallest eigenpair of the
//! linearized operator `-Δ + W + ζu²` by inverse iteration, and mixes the
//! result into the previous iterate.  The multigrid driver runs this to
//! full accuracy only on the coarsest level; the reference mode runs it on
//! every level with warm starts.

use crate::assembly::Assemblies;
use crate::error::Error;
use crate::field::NodalFunction;
use crate::linalg::{dot, norm2, pcg, weighted_residual_norm, SgsPrecond};
use crate::sparse::SparseSymMatrix;
use crate::Result;

/// An eigenvalue with its M-normalized eigenfunction (vertex values,
/// zeros on the boundary).
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub u: NodalFunction,
}

#[derive(Debug, Clone)]
pub struct ScfConfig {
    /// Convergence threshold on the weighted residual of the full
    /// nonlinear problem.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Mixing weight on the fresh eigenvector; `None` picks 0.7 for weak
    /// interaction (ζ ≤ 10) and 0.3 for strong.
    pub damping: Option<f64>,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            residual_tol: 1e-10,
            max_iters: 500,
            damping: None,
        }
    }
}

impl ScfConfig {
    pub fn effective_damping(&self, zeta: f64) -> f64 {
        match self.damping {
            Some(theta) => theta,
            // Without interaction there is no density feedback to damp.
            None if zeta == 0.0 => 1.0,
            None if zeta <= 10.0 => 0.7,
            None => 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScfIteration {
    pub lambda: f64,
    pub residual: f64,
    pub energy: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScfTrace {
    pub iterations: Vec<ScfIteration>,
    /// Index into `iterations` where each damping attempt begins; a single
    /// entry 0 unless automatic restarts kicked in.
    pub attempt_starts: Vec<usize>,
}

impl ScfTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn last(&self) -> Option<&ScfIteration> {
        self.iterations.last()
    }

    /// Iterations of the last damping attempt, the one that converged
    /// when the solve succeeded.
    pub fn final_attempt(&self) -> &[ScfIteration] {
        let start = self.attempt_starts.last().copied().unwrap_or(0);
        &self.iterations[start..]
    }
}

/// Interpolant of the product of half-period sines, the exact linear
/// ground state on a box with `W = 0`; interior values only, M-normalized.
fn sine_guess(asm: &Assemblies) -> Vec<f64> {
    let mesh = asm.mesh();
    let domain = &asm.params().domain;
    let dofs = asm.dofs();
    let mut v = vec![0.0; dofs.n_interior()];
    for i in 0..dofs.n_interior() {
        let x = mesh.vertex(dofs.vertex_index(i));
        let mut val = 1.0;
        for k in 0..mesh.dim() {
            let t = (x[k] - domain.lower()[k]) / (domain.upper()[k] - domain.lower()[k]);
            val *= (std::f64::consts::PI * t).sin();
        }
        v[i] = val;
    }
    let nrm = asm.m_norm(&v);
    for vi in &mut v {
        *vi /= nrm;
    }
    v
}

const MAX_EIG_ITERS: usize = 300;

/// Smallest eigenpair of `op v = μ M v` by inverse iteration with shift
/// zero.  `v` enters as an M-normalized warm start and leaves as the
/// eigenvector; the converged `μ` is returned.
fn smallest_eigenpair(
    op: &SparseSymMatrix,
    mass: &SparseSymMatrix,
    mass_diag: &[f64],
    v: &mut [f64],
    tol: f64,
) -> Result<f64> {
    let n = op.n();
    let mut mv = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut precond = SgsPrecond::new(op);
    let mut last_res = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for _ in 0..MAX_EIG_ITERS {
        mass.matvec(v, &mut mv);
        op.matvec(v, &mut r);
        let mu = dot(v, &r);
        for i in 0..n {
            r[i] -= mu * mv[i];
        }
        let res = weighted_residual_norm(mass_diag, &r, 0.0);
        if res <= tol {
            return Ok(mu);
        }
        // A round-off plateau close to the target is as good as reaching
        // it; the caller re-checks the true nonlinear residual anyway.
        // Healthy inverse iteration contracts at the eigenvalue ratio,
        // 0.5 per sweep or better for these operators, so five sweeps
        // without a 30% gain on the best seen mean the floor is reached:
        // accept near the target, otherwise stop early instead of burning
        // the budget on sweeps that cannot improve.  A premature exit is
        // harmless, the outer loop re-enters warm.
        stalled = if res > 0.7 * best { stalled + 1 } else { 0 };
        if stalled >= 5 {
            if res <= 10.0 * tol {
                return Ok(mu);
            }
            return Err(Error::NoConvergence {
                iters: stalled,
                residual: res,
                tol,
            });
        }
        best = best.min(res);
        last_res = res;
        // Accuracy of the inner solve only needs to track the eigen
        // residual; tighten as convergence approaches.  Near round-off the
        // demanded tolerance may be unattainable, in which case the partial
        // PCG iterate is still a perfectly good inverse-iteration step.
        let rel = if res > 100.0 * tol { 1e-2 } else { 1e-8 };
        let pcg_tol = (rel * res).max(1e-13) * norm2(&mv).max(1e-300);
        for i in 0..n {
            w[i] = v[i] / mu.max(f64::MIN_POSITIVE);
        }
        match pcg(op, &mv, &mut w, &mut precond, pcg_tol, 10 * n + 200) {
            Ok(_) | Err(Error::NoConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
        let nrm = mass.quad_form(&w, &w).sqrt();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::NotPositiveDefinite(
                "inverse iteration produced a degenerate vector".into(),
            ));
        }
        let sign = if mass.quad_form(v, &w) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..n {
            v[i] = sign * w[i] / nrm;
        }
    }
    Err(Error::NoConvergence {
        iters: MAX_EIG_ITERS,
        residual: last_res,
        tol,
    })
}

/// Runs the damped self-consistent iteration to the configured residual
/// tolerance.  `warm` seeds the iteration from an existing pair on the
/// same level; otherwise the sine-product interpolant is used.  The
/// returned eigenfunction is M-normalized and oriented to positive
/// integral.
///
/// With automatic damping a stalled run restarts from its last iterate
/// with the damping halved, up to two times; strong interactions can make
/// the default mixing two-cycle, and a smaller step always breaks the
/// cycle.  An explicit damping value is honored as given, one attempt.
pub fn solve_ground_state(
    asm: &Assemblies,
    cfg: &ScfConfig,
    warm: Option<&EigenPair>,
) -> Result<(EigenPair, ScfTrace)> {
    let zeta = asm.params().zeta;
    let mut theta = cfg.effective_damping(zeta);
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {theta}"
        )));
    }
    let attempts = if cfg.damping.is_none() { 3 } else { 1 };
    let dofs = asm.dofs();
    let mut u = match warm {
        Some(pair) => {
            if pair.u.level != asm.level() {
                return Err(Error::LevelMismatch {
                    expected: asm.level(),
                    got: pair.u.level,
                });
            }
            let mut v = dofs.reduce(&pair.u.values);
            let nrm = asm.m_norm(&v);
            if nrm > 0.0 && nrm.is_finite() {
                for vi in &mut v {
                    *vi /= nrm;
                }
                v
            } else {
                sine_guess(asm)
            }
        }
        None => sine_guess(asm),
    };
    let mass_diag = asm.mass().diagonal();
    let n = dofs.n_interior();
    let mut trace = ScfTrace::default();
    let mut v = u.clone();
    let mut residual = f64::INFINITY;
    let mut lambda = 0.0;
    let mut mu = vec![0.0; n];
    let mut r = vec![0.0; n];
    for attempt in 0..attempts {
        trace.attempt_starts.push(trace.iterations.len());
        let mut best = f64::INFINITY;
        let mut stalled = 0usize;
        for _ in 0..cfg.max_iters {
            let u_fn = dofs.expand_fn(&u);
            let op = asm.linearized_operator(&u_fn, zeta)?;
            // Rayleigh quotient and residual of the full nonlinear equation.
            asm.mass().matvec(&u, &mut mu);
            op.matvec(&u, &mut r);
            lambda = dot(&u, &r);
            for i in 0..n {
                r[i] -= lambda * mu[i];
            }
            residual = weighted_residual_norm(&mass_diag, &r, 0.0);
            let grad = asm.stiffness().quad_form(&u, &u);
            let pot = asm.potential_mass().quad_form(&u, &u);
            let quartic = if zeta > 0.0 {
                (lambda - grad - pot) / zeta
            } else {
                0.0
            };
            trace.iterations.push(ScfIteration {
                lambda,
                residual,
                energy: 0.5 * grad + 0.5 * pot + 0.25 * zeta * quartic,
                norm: asm.m_norm(&u),
            });
            // Accept at the target, or at a round-off plateau just above it:
            // four sweeps without a 10% gain on the best residual, all within
            // 10x of the target, mean further sweeps only churn the floor.
            stalled = if residual > 0.9 * best {
                stalled + 1
            } else {
                0
            };
            best = best.min(residual);
            let plateaued = stalled >= 4 && residual <= 10.0 * cfg.residual_tol;
            if residual <= cfg.residual_tol || plateaued {
                if asm.integral(&dofs.expand_fn(&u)) < 0.0 {
                    for ui in &mut u {
                        *ui = -*ui;
                    }
                }
                let pair = EigenPair {
                    lambda,
                    u: dofs.expand_fn(&u),
                };
                return Ok((pair, trace));
            }
            // The eigensolve needs to outpace the outer residual, nothing
            // more; with ζ = 0 the operator never changes, so one tight solve
            // finishes the job.
            let eig_tol = if zeta == 0.0 {
                0.5 * cfg.residual_tol
            } else {
                (0.1 * residual).max(0.1 * cfg.residual_tol)
            };
            v.copy_from_slice(&u);
            // An eigensolve stuck at its round-off floor still leaves a usable
            // iterate in `v`; the loop re-measures the true residual above and
            // either accepts the plateau or keeps mixing.
            match smallest_eigenpair(&op, asm.mass(), &mass_diag, &mut v, eig_tol) {
                Ok(_) | Err(Error::NoConvergence { .. }) => {}
                Err(e) => return Err(e),
            }
            if asm.m_inner(&u, &v) < 0.0 {
                for vi in &mut v {
                    *vi = -*vi;
                }
            }
            for i in 0..n {
                u[i] = (1.0 - theta) * u[i] + theta * v[i];
            }
            let nrm = asm.m_norm(&u);
            for ui in &mut u {
                *ui /= nrm;
            }
        }
        if attempt + 1 < attempts {
            theta *= 0.5;
        }
    }
    let pair = EigenPair {
        lambda,
        u: dofs.expand_fn(&u),
    };
    Err(Error::ScfStalled {
        iters: trace.len(),
        residual,
        last: Box::new(pair),
    })
}
