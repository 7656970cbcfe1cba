//! The one-shot Newton correction applied after each refinement.
//!
//! Given a pair `(λ', u')` prolongated from the previous level, one Newton
//! step of the eigenproblem with the normalization constraint solves the
//! bordered system
//!
//! ```text
//! [ A(u') - λ'M   -Mu' ] [u''] = [ 2ζ n(u') - λ'Mu'   ]
//! [   (-Mu')ᵀ       0  ] [λ'']   [ -1/2 - (u',u')_M/2 ]
//! ```
//!
//! with `A(u') = stiffness + potential mass + 3ζ (u'² φᵢ, φⱼ)` and
//! `n(u')ᵢ = (u'³, φᵢ)`.  The constraint row forces the exact identity
//! `(u'',u'')_M = 1 + (u''-u', u''-u')_M`, so the norm drifts from one
//! only by the squared correction size and no renormalization is applied.

use std::sync::Arc;

use crate::assembly::Assemblies;
use crate::error::Error;
use crate::linalg::{
    dot, norm2, solve_saddle, weighted_residual_norm, SaddleContext, SaddleSystem, SolverOptions,
};
use crate::scf::EigenPair;
use crate::sparse::CsrMatrix;
use crate::Result;

/// Diagnostics of one correction step.
#[derive(Debug, Clone)]
pub struct NewtonStepReport {
    pub level: usize,
    /// "ldl" for the sparse direct path, "minres" for the multigrid path.
    pub method: &'static str,
    pub iters: usize,
    /// Absolute tolerance the bordered solve was run at.
    pub tol: f64,
    /// 2-norm of the recomputed bordered residual.
    pub solver_residual: f64,
    /// How far the computed pair violates the linearized constraint row.
    pub constraint_gap: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
    /// Rayleigh quotient of the corrected function, for cross-checking.
    pub lambda_rayleigh: f64,
    pub norm_after: f64,
}

/// Weighted residual of the discrete nonlinear eigenproblem at a pair,
/// including the normalization defect as an extra component.  This is the
/// metric the per-level convergence ratios are measured in.
pub fn eigen_residual(asm: &Assemblies, pair: &EigenPair) -> Result<f64> {
    let zeta = asm.params().zeta;
    let u = asm.dofs().reduce(&pair.u.values);
    let op = asm.linearized_operator(&pair.u, zeta)?;
    let n = u.len();
    let mut r = vec![0.0; n];
    let mut mu = vec![0.0; n];
    op.matvec(&u, &mut r);
    asm.mass().matvec(&u, &mut mu);
    for i in 0..n {
        r[i] -= pair.lambda * mu[i];
    }
    let s = 0.5 * (1.0 - dot(&u, &mu));
    Ok(weighted_residual_norm(&asm.mass().diagonal(), &r, s))
}

/// Applies one Newton correction to a prolongated pair on the level of
/// `asm`.  Systems small enough for the direct factorization ignore
/// `mg_prolongations`; larger ones need the interior prolongation chain
/// from the run's coarsest level up to this one.
pub fn newton_step(
    asm: &Assemblies,
    guess: &EigenPair,
    mg_prolongations: Option<&[Arc<CsrMatrix>]>,
    opts: &SolverOptions,
) -> Result<(EigenPair, NewtonStepReport)> {
    if guess.u.level != asm.level() {
        return Err(Error::LevelMismatch {
            expected: asm.level(),
            got: guess.u.level,
        });
    }
    let zeta = asm.params().zeta;
    let lambda_p = guess.lambda;
    let dofs = asm.dofs();
    let n = dofs.n_interior();
    let u_p = dofs.reduce(&guess.u.values);

    // L3 = stiffness + W-mass + 3ζ N(u'), the SPD part of the (1,1) block.
    let l3 = asm.linearized_operator(&guess.u, 3.0 * zeta)?;
    let a = l3.linear_combination(1.0, asm.mass(), -lambda_p)?;
    let mut mu_p = vec![0.0; n];
    asm.mass().matvec(&u_p, &mut mu_p);
    let c: Vec<f64> = mu_p.iter().map(|&v| -v).collect();
    let cubic = asm.cubic_vector(&guess.u, zeta)?;
    let rhs_u: Vec<f64> = (0..n).map(|i| cubic[i] - lambda_p * mu_p[i]).collect();
    let rhs_s = -0.5 - 0.5 * dot(&u_p, &mu_p);
    let sys = SaddleSystem { a, c, rhs_u, rhs_s };

    let tol = opts.level_tolerance(asm.mesh().h_max());
    let rhs_scale = (norm2(&sys.rhs_u).powi(2) + sys.rhs_s * sys.rhs_s).sqrt();
    let tol_abs = tol * rhs_scale.max(1e-3);
    let ctx = mg_prolongations.map(|chain| SaddleContext {
        spd_surrogate: l3,
        prolongations: chain,
    });
    let sol = solve_saddle(&sys, ctx, opts, tol_abs)?;
    if sol.residual > 10.0 * tol_abs.max(1e-11) {
        return Err(Error::NoConvergence {
            iters: sol.iters,
            residual: sol.residual,
            tol: tol_abs,
        });
    }
    let method = if sol.iters == 0 { "ldl" } else { "minres" };

    let u_pp = sol.u;
    let lambda_pp = sol.sigma;
    let norm_after = asm.m_norm(&u_pp);
    let constraint_gap = (dot(&sys.c, &u_pp) - sys.rhs_s).abs();
    let u_fn = dofs.expand_fn(&u_pp);
    // Rayleigh quotient with the quartic term at the corrected function.
    let grad = asm.stiffness().quad_form(&u_pp, &u_pp);
    let pot = asm.potential_mass().quad_form(&u_pp, &u_pp);
    let quartic = if zeta > 0.0 {
        asm.nonlinear_mass(&u_fn, zeta)?.quad_form(&u_pp, &u_pp)
    } else {
        0.0
    };
    let lambda_rayleigh = (grad + pot + quartic) / (norm_after * norm_after);

    let report = NewtonStepReport {
        level: asm.level(),
        method,
        iters: sol.iters,
        tol: tol_abs,
        solver_residual: sol.residual,
        constraint_gap,
        lambda_before: lambda_p,
        lambda_after: lambda_pp,
        lambda_rayleigh,
        norm_after,
    };
    Ok((
        EigenPair {
            lambda: lambda_pp,
            u: u_fn,
        },
        report,
    ))
}
