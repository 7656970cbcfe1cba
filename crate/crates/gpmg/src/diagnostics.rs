//! Energies, errors against a reference solve, and convergence orders.
//!
//! The error study follows the usual numerical-experiment setup: a direct
//! solve on a level at least as fine as every run level stands in for the
//! exact solution, each run iterate is carried to the reference mesh by the
//! exact nested transfer, and norms are taken with the reference-level
//! stiffness (H¹ seminorm) and mass (L²) matrices.  No interpolation error
//! pollutes the comparison because the spaces are nested.

use std::io::Write as _;
use std::path::Path;

use crate::assembly::Assemblies;
use crate::driver::{MultigridRun, RunContext};
use crate::error::Error;
use crate::field::NodalFunction;
use crate::scf::EigenPair;
use crate::Result;

/// Gradient, trap, and quartic integrals of a nodal function:
/// `(∫|∇u|², ∫W u², ∫u⁴)`.  All three are quadratic forms in the interior
/// coefficients, the last one through the density-weighted mass matrix, so
/// each integral is exact for the piecewise-linear ansatz.
fn energy_terms(asm: &Assemblies, u: &NodalFunction) -> Result<(f64, f64, f64)> {
    let x = asm.dofs().reduce(&u.values);
    let grad = asm.stiffness().quad_form(&x, &x);
    let trap = asm.potential_mass().quad_form(&x, &x);
    let quartic = asm.nonlinear_mass(u, 1.0)?.quad_form(&x, &x);
    Ok((grad, trap, quartic))
}

/// Gross-Pitaevskii energy `E(u) = ∫ ½|∇u|² + ½W u² + ¼ζ u⁴`.
pub fn energy(asm: &Assemblies, u: &NodalFunction) -> Result<f64> {
    let (grad, trap, quartic) = energy_terms(asm, u)?;
    Ok(0.5 * grad + 0.5 * trap + 0.25 * asm.params().zeta * quartic)
}

/// Defect of the eigenvalue-energy identity `λ = 2E(u) + (ζ/2)∫u⁴`,
/// which holds at any discrete solution with unit M-norm.  Returns the
/// absolute gap; at a converged pair it sits at the solver-residual level.
pub fn lambda_energy_gap(asm: &Assemblies, pair: &EigenPair) -> Result<f64> {
    let (grad, trap, quartic) = energy_terms(asm, &pair.u)?;
    Ok((pair.lambda - (grad + trap + asm.params().zeta * quartic)).abs())
}

/// Errors of one level's pair against the reference, with observed orders
/// filled in against the record one level below.
#[derive(Debug, Clone, Copy)]
pub struct ErrorRecord {
    pub level: usize,
    pub dofs: usize,
    pub h_max: f64,
    /// `|λ^h − λ_ref|`.
    pub err_lambda: f64,
    /// `‖u^h − u_ref‖₁` (H¹ seminorm via the reference stiffness matrix).
    pub err_h1: f64,
    /// `‖u^h − u_ref‖₀` (reference mass matrix).
    pub err_l2: f64,
    /// Orders exist only from the second record on, and only where both
    /// errors in the pair are positive.
    pub order_lambda: Option<f64>,
    pub order_h1: Option<f64>,
    pub order_l2: Option<f64>,
}

/// `log(e_coarse/e_fine) / log(beta)` where `beta > 1` is the mesh-size
/// ratio between the two levels.  Absent when an error vanishes or is
/// negative, e.g. when a run level coincides with the reference.
pub fn observed_order(err_coarse: f64, err_fine: f64, beta: f64) -> Option<f64> {
    if err_coarse > 0.0 && err_fine > 0.0 && beta > 1.0 {
        Some((err_coarse / err_fine).ln() / beta.ln())
    } else {
        None
    }
}

/// Compares every level of a run against a direct reference pair living on
/// a level at least as fine as the run's finest.  Functions are prolonged
/// to the reference level and sign-aligned there before differencing.
pub fn error_vs_reference(
    ctx: &RunContext,
    run: &MultigridRun,
    reference: &EigenPair,
) -> Result<Vec<ErrorRecord>> {
    let ref_level = reference.u.level;
    let asm = ctx.assemblies(ref_level);
    if reference.u.len() != asm.mesh().n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: asm.mesh().n_vertices(),
            got: reference.u.len(),
        });
    }
    let r = asm.dofs().reduce(&reference.u.values);
    let mut records: Vec<ErrorRecord> = Vec::with_capacity(run.levels.len());
    for l in &run.levels {
        if l.level > ref_level {
            return Err(Error::LevelMismatch {
                expected: ref_level,
                got: l.level,
            });
        }
        let up = ctx.hierarchy().prolongate_to(&l.pair.u, ref_level)?;
        let x = asm.dofs().reduce(&up.values);
        let sign = if asm.m_inner(&x, &r) < 0.0 { -1.0 } else { 1.0 };
        let diff: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a - sign * b).collect();
        let err_h1 = asm.stiffness().quad_form(&diff, &diff).max(0.0).sqrt();
        let err_l2 = asm.m_norm(&diff);
        let err_lambda = (l.pair.lambda - reference.lambda).abs();
        let orders = match records.last() {
            Some(prev) => {
                let beta = prev.h_max / l.h_max;
                (
                    observed_order(prev.err_lambda, err_lambda, beta),
                    observed_order(prev.err_h1, err_h1, beta),
                    observed_order(prev.err_l2, err_l2, beta),
                )
            }
            None => (None, None, None),
        };
        records.push(ErrorRecord {
            level: l.level,
            dofs: l.dofs,
            h_max: l.h_max,
            err_lambda,
            err_h1,
            err_l2,
            order_lambda: orders.0,
            order_h1: orders.1,
            order_l2: orders.2,
        });
    }
    Ok(records)
}

fn fmt_order(o: Option<f64>) -> String {
    match o {
        Some(v) => format!("{v:.4}"),
        None => String::new(),
    }
}

/// One row per level; order columns are empty on the first level and
/// wherever an error vanished.
pub fn write_errors_csv(records: &[ErrorRecord], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "level,err_lambda,err_h1,err_l2,order_lambda,order_h1,order_l2"
    )?;
    for r in records {
        writeln!(
            f,
            "{},{:.6e},{:.6e},{:.6e},{},{},{}",
            r.level,
            r.err_lambda,
            r.err_h1,
            r.err_l2,
            fmt_order(r.order_lambda),
            fmt_order(r.order_h1),
            fmt_order(r.order_l2),
        )?;
    }
    Ok(())
}

/// Whitespace-separated table keyed by unknown count, ready for log-log
/// plotting (`plot "errors.dat" using 1:2`, etc.).
pub fn write_errors_dat(records: &[ErrorRecord], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# dofs err_lambda err_h1 err_l2")?;
    for r in records {
        writeln!(
            f,
            "{} {:.6e} {:.6e} {:.6e}",
            r.dofs, r.err_lambda, r.err_h1, r.err_l2
        )?;
    }
    Ok(())
}
