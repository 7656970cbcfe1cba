//! Linear solvers: preconditioned CG and MINRES, a geometric multigrid
//! V-cycle on the nested interior hierarchy, a sparse LDLᵀ factorization,
//! and the bordered saddle-point solve used by the Newton correction.
//!
//! Matrices at coarser V-cycle levels are Galerkin products `PᵀAP` of the
//! fine operator with the interior prolongations; for nested P1 spaces
//! these coincide with direct coarse assembly, which the tests pin down.

use std::sync::Arc;

use crate::assembly::DofMap;
use crate::error::Error;
use crate::mesh::Prolongation;
use crate::sparse::{CsrMatrix, SparseSymMatrix};
use crate::Result;

/// Solver knobs shared by the whole pipeline.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Saddle systems up to this many unknowns use the sparse direct
    /// factorization; larger ones go through preconditioned MINRES.
    pub direct_max_dofs: usize,
    /// Floor for per-level linear tolerances.
    pub tol_base: f64,
    /// Scale for the mesh-dependent part of the per-level tolerance.
    pub c_tol: f64,
    /// Iteration cap for the Krylov loops.
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            direct_max_dofs: 20_000,
            tol_base: 1e-10,
            c_tol: 1e-2,
            max_iters: 10_000,
        }
    }
}

impl SolverOptions {
    /// Tolerance for the correction solve on a mesh with spacing `h`.
    pub fn level_tolerance(&self, h: f64) -> f64 {
        self.tol_base.min(self.c_tol * h * h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterReport {
    pub iters: usize,
    pub residual: f64,
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Residual metric used across the pipeline: 2-norm weighted by the
/// inverse mass diagonal, plus an optional scalar component.  The
/// weighting keeps the metric comparable across refinement levels, where
/// plain 2-norms shrink with the mesh size.
pub fn weighted_residual_norm(mass_diag: &[f64], r: &[f64], extra: f64) -> f64 {
    let sum: f64 = r.iter().zip(mass_diag).map(|(&ri, &di)| ri * ri / di).sum();
    (sum + extra * extra).sqrt()
}

/// Application of an approximate inverse; must be symmetric positive
/// definite for use inside CG and MINRES.
pub trait Preconditioner {
    fn n(&self) -> usize;
    fn apply(&mut self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPrecond(pub usize);

impl Preconditioner for IdentityPrecond {
    fn n(&self) -> usize {
        self.0
    }

    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Symmetric Gauss-Seidel `(D+L) D⁻¹ (D+U)` applied as an approximate
/// inverse.
pub struct SgsPrecond<'a> {
    a: &'a SparseSymMatrix,
    diag: Vec<f64>,
}

impl<'a> SgsPrecond<'a> {
    pub fn new(a: &'a SparseSymMatrix) -> Self {
        let diag = a.diagonal();
        SgsPrecond { a, diag }
    }
}

impl Preconditioner for SgsPrecond<'_> {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let n = self.a.n();
        // (D+L) y = r
        for i in 0..n {
            let mut s = r[i];
            for (j, v) in self.a.row_entries(i) {
                if (j as usize) < i {
                    s -= v * z[j as usize];
                }
            }
            z[i] = s / self.diag[i];
        }
        // w = D y, then (D+U) z = w, i.e. z_i = y_i - D_i^{-1} Σ_{j>i} a_ij z_j
        for i in (0..n).rev() {
            let mut s = 0.0;
            for (j, v) in self.a.row_entries(i) {
                if (j as usize) > i {
                    s += v * z[j as usize];
                }
            }
            z[i] -= s / self.diag[i];
        }
    }
}

/// Preconditioned conjugate gradients with an absolute 2-norm residual
/// tolerance.  The final residual is recomputed from the operator before
/// success is reported, so recurrence drift cannot fake convergence.
/// A tolerance below the attainable floor fails fast instead of running
/// out the budget: sixty iterations without a 10% residual gain end the
/// solve with the best iterate and an honest error.
pub fn pcg<P: Preconditioner>(
    a: &SparseSymMatrix,
    b: &[f64],
    x: &mut [f64],
    m: &mut P,
    tol: f64,
    max_iters: usize,
) -> Result<IterReport> {
    let n = a.n();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    if norm2(b) == 0.0 {
        x.fill(0.0);
        return Ok(IterReport {
            iters: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm2(&r);
    let mut best = res;
    let mut since_gain = 0usize;
    for k in 0..max_iters {
        // Sixty iterations without a 10% gain on the best residual mean
        // the recurrence sits on its round-off floor; demanding a tighter
        // tolerance only burns matvecs.  Report the floor honestly and
        // leave the iterate in place (callers use it as a partial solve).
        if res < 0.9 * best {
            best = res;
            since_gain = 0;
        } else {
            since_gain += 1;
        }
        if since_gain >= 60 {
            a.matvec(x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            res = norm2(&r);
            if res <= tol {
                return Ok(IterReport {
                    iters: k,
                    residual: res,
                });
            }
            return Err(Error::NoConvergence {
                iters: k,
                residual: res,
                tol,
            });
        }
        if res <= tol {
            // confirm against the original operator
            a.matvec(x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            res = norm2(&r);
            if res <= tol {
                return Ok(IterReport {
                    iters: k,
                    residual: res,
                });
            }
            m.apply(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        if rz <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "preconditioned residual product {rz} at iteration {k}"
            )));
        }
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "curvature {pq} at iteration {k}"
            )));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        res = norm2(&r);
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        residual: res,
        tol,
    })
}

/// Restriction of a vertex prolongation to interior unknowns on both
/// levels.  Columns hitting coarse boundary vertices are dropped, which is
/// exact for coarse functions that vanish on the boundary.
pub fn interior_prolongation(
    p: &Prolongation,
    coarse_dofs: &DofMap,
    fine_dofs: &DofMap,
) -> Result<CsrMatrix> {
    let mat = p.matrix();
    if mat.rows() != fine_dofs.n_vertices() || mat.cols() != coarse_dofs.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: fine_dofs.n_vertices(),
            got: mat.rows(),
        });
    }
    let n_fine = fine_dofs.n_interior();
    let mut indptr = Vec::with_capacity(n_fine + 1);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    indptr.push(0);
    for i in 0..n_fine {
        let v = fine_dofs.vertex_index(i);
        for (cv, w) in mat.row_entries(v) {
            if let Some(j) = coarse_dofs.interior_index(cv as usize) {
                indices.push(j);
                data.push(w);
            }
        }
        indptr.push(indices.len());
    }
    CsrMatrix::from_parts(n_fine, coarse_dofs.n_interior(), indptr, indices, data)
}

/// Galerkin triple product `Pᵀ A P`, symmetrized entrywise to keep the
/// coarse operators usable inside symmetric Krylov methods.
fn galerkin_product(a: &SparseSymMatrix, p: &CsrMatrix) -> Result<SparseSymMatrix> {
    let ap = a.as_csr().matmul(p)?;
    let coarse = p.transpose().matmul(&ap)?;
    let mut sym = coarse.clone();
    let n = sym.rows();
    for i in 0..n {
        let (start, cols) = {
            let range = sym.pattern().row_range(i);
            (range.start, sym.pattern().row(i).to_vec())
        };
        for (off, &j) in cols.iter().enumerate() {
            if (j as usize) < i {
                continue;
            }
            let upper = coarse.get(i, j);
            let lower = coarse.get(j as usize, i as u32);
            let v = 0.5 * (upper + lower);
            sym.data_mut()[start + off] = v;
            if (j as usize) != i {
                if let Some(pos) = sym.pattern().position(j as usize, i as u32) {
                    sym.data_mut()[pos] = v;
                }
            }
        }
    }
    Ok(SparseSymMatrix::from_csr_unchecked(sym))
}

fn gs_forward(a: &SparseSymMatrix, diag: &[f64], b: &[f64], x: &mut [f64]) {
    for i in 0..a.n() {
        let mut s = b[i];
        for (j, v) in a.row_entries(i) {
            let j = j as usize;
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    }
}

fn gs_backward(a: &SparseSymMatrix, diag: &[f64], b: &[f64], x: &mut [f64]) {
    for i in (0..a.n()).rev() {
        let mut s = b[i];
        for (j, v) in a.row_entries(i) {
            let j = j as usize;
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    }
}

enum CoarseSolve {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// Fallback when the coarsest level is too large for a dense factor.
    Iterative,
}

/// One multigrid V-cycle on a nested SPD hierarchy, used as a
/// preconditioner.  Level 0 is the coarsest; smoothing is one symmetric
/// Gauss-Seidel sweep before and after coarse correction, which keeps the
/// cycle symmetric.
pub struct VCycle {
    levels: Vec<SparseSymMatrix>,
    prolongations: Vec<Arc<CsrMatrix>>,
    diags: Vec<Vec<f64>>,
    coarse: CoarseSolve,
    rhs: Vec<Vec<f64>>,
    sol: Vec<Vec<f64>>,
    tmp: Vec<Vec<f64>>,
}

const COARSE_DENSE_MAX: usize = 2000;

impl VCycle {
    /// `prolongations[i]` maps level `i` to level `i+1`; the finest matrix
    /// is given, coarser ones are Galerkin products.
    pub fn new(fine: SparseSymMatrix, prolongations: &[Arc<CsrMatrix>]) -> Result<Self> {
        let n_levels = prolongations.len() + 1;
        let mut levels = vec![fine];
        for p in prolongations.iter().rev() {
            if p.rows() != levels.last().unwrap().n() {
                return Err(Error::DimensionMismatch {
                    expected: levels.last().unwrap().n(),
                    got: p.rows(),
                });
            }
            levels.push(galerkin_product(levels.last().unwrap(), p)?);
        }
        levels.reverse();
        let diags: Vec<Vec<f64>> = levels.iter().map(|a| a.diagonal()).collect();
        for (l, d) in diags.iter().enumerate() {
            if d.iter().any(|&v| v <= 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "non-positive diagonal in V-cycle level {l}"
                )));
            }
        }
        let coarse = if levels[0].n() <= COARSE_DENSE_MAX {
            let dense = levels[0].to_dense();
            let chol = dense
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("coarsest V-cycle matrix".into()))?;
            CoarseSolve::Dense(chol)
        } else {
            CoarseSolve::Iterative
        };
        let rhs = levels.iter().map(|a| vec![0.0; a.n()]).collect();
        let sol = levels.iter().map(|a| vec![0.0; a.n()]).collect();
        let tmp = levels.iter().map(|a| vec![0.0; a.n()]).collect();
        let _ = n_levels;
        Ok(VCycle {
            levels,
            prolongations: prolongations.to_vec(),
            diags,
            coarse,
            rhs,
            sol,
            tmp,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    fn solve_coarsest(&mut self) {
        match &self.coarse {
            CoarseSolve::Dense(chol) => {
                let b = nalgebra::DVector::from_column_slice(&self.rhs[0]);
                let x = chol.solve(&b);
                self.sol[0].copy_from_slice(x.as_slice());
            }
            CoarseSolve::Iterative => {
                let a = &self.levels[0];
                let b = self.rhs[0].clone();
                let mut x = vec![0.0; a.n()];
                let mut m = SgsPrecond::new(a);
                let tol = 1e-12 * norm2(&b).max(1.0);
                let _ = pcg(a, &b, &mut x, &mut m, tol, 10 * a.n().max(100));
                self.sol[0].copy_from_slice(&x);
            }
        }
    }
}

impl Preconditioner for VCycle {
    fn n(&self) -> usize {
        self.levels.last().unwrap().n()
    }

    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let top = self.levels.len() - 1;
        self.rhs[top].copy_from_slice(r);
        for l in (1..=top).rev() {
            self.sol[l].fill(0.0);
            let a = &self.levels[l];
            let d = &self.diags[l];
            gs_forward(a, d, &self.rhs[l], &mut self.sol[l]);
            gs_backward(a, d, &self.rhs[l], &mut self.sol[l]);
            a.matvec(&self.sol[l], &mut self.tmp[l]);
            for i in 0..a.n() {
                self.tmp[l][i] = self.rhs[l][i] - self.tmp[l][i];
            }
            let (head, tail) = self.rhs.split_at_mut(l);
            self.prolongations[l - 1].matvec_transpose(&self.tmp[l], &mut head[l - 1]);
            let _ = tail;
        }
        self.solve_coarsest();
        for l in 1..=top {
            let (head, tail) = self.sol.split_at_mut(l);
            self.prolongations[l - 1].matvec(&head[l - 1], &mut self.tmp[l]);
            for (xi, ti) in tail[0].iter_mut().zip(&self.tmp[l]) {
                *xi += ti;
            }
            let a = &self.levels[l];
            let d = &self.diags[l];
            gs_forward(a, d, &self.rhs[l], &mut self.sol[l]);
            gs_backward(a, d, &self.rhs[l], &mut self.sol[l]);
        }
        z.copy_from_slice(&self.sol[top]);
    }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with
/// an SPD preconditioner.  Converges on the preconditioned residual, then
/// verifies the true 2-norm residual and keeps iterating if the estimate
/// was optimistic.
pub fn minres<P: Preconditioner>(
    a: &SparseSymMatrix,
    b: &[f64],
    x: &mut [f64],
    m: &mut P,
    tol: f64,
    max_iters: usize,
) -> Result<IterReport> {
    let n = a.n();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    x.fill(0.0);
    if norm2(b) == 0.0 {
        return Ok(IterReport {
            iters: 0,
            residual: 0.0,
        });
    }
    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    m.apply(&r1, &mut y);
    let beta1_sq = dot(&r1, &y);
    if beta1_sq < 0.0 {
        return Err(Error::NotPositiveDefinite(
            "saddle preconditioner produced a negative inner product".into(),
        ));
    }
    let mut beta = beta1_sq.sqrt();
    if beta == 0.0 {
        return Ok(IterReport {
            iters: 0,
            residual: 0.0,
        });
    }
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut inner_tol = tol;
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = y[i] * s;
        }
        a.matvec(&v, &mut av);
        y.copy_from_slice(&av);
        if iters >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                y[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        for i in 0..n {
            y[i] -= c * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        m.apply(&r2, &mut y);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return Err(Error::NotPositiveDefinite(
                "saddle preconditioner lost positivity during MINRES".into(),
            ));
        }
        beta = beta_sq.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        for i in 0..n {
            let wi = (v[i] - oldeps * w2[i] - delta * w[i]) / gamma;
            w2[i] = w[i];
            w[i] = wi;
            x[i] += phi * wi;
        }
        if phibar <= inner_tol {
            a.matvec(x, &mut av);
            let mut true_res = 0.0;
            for i in 0..n {
                let ri = b[i] - av[i];
                true_res += ri * ri;
            }
            let true_res = true_res.sqrt();
            if true_res <= tol {
                return Ok(IterReport {
                    iters,
                    residual: true_res,
                });
            }
            // preconditioned estimate was optimistic; tighten and continue
            inner_tol *= 0.25;
        }
    }
    a.matvec(x, &mut av);
    let mut res = 0.0;
    for i in 0..n {
        let ri = b[i] - av[i];
        res += ri * ri;
    }
    Err(Error::NoConvergence {
        iters,
        residual: res.sqrt(),
        tol,
    })
}

/// Sparse LDLᵀ of a symmetric matrix in natural order, row by row over the
/// elimination tree.  The diagonal keeps its signs, so symmetric
/// indefinite systems (the bordered saddle matrix) factor without
/// pivoting as long as no leading pivot vanishes.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

pub fn ldl_factor(a: &CsrMatrix) -> Result<LdlFactor> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    let none = usize::MAX;
    let mut parent = vec![none; n];
    let mut flag = vec![none; n];
    let mut lnz = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        for (j, _) in a.row_entries(k) {
            let mut i = j as usize;
            if i >= k {
                break;
            }
            while flag[i] != k {
                if parent[i] == none {
                    parent[i] = k;
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i];
            }
        }
    }
    let mut lp = vec![0usize; n + 1];
    for i in 0..n {
        lp[i + 1] = lp[i] + lnz[i];
    }
    let total = lp[n];
    let mut li = vec![0u32; total];
    let mut lx = vec![0.0f64; total];
    let mut d = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut pattern = vec![0usize; n];
    let mut lnz_cur = vec![0usize; n];
    let mut flag = vec![none; n];
    for k in 0..n {
        flag[k] = k;
        let mut top = n;
        for (j, v) in a.row_entries(k) {
            let j = j as usize;
            if j > k {
                break;
            }
            y[j] += v;
            if j < k {
                let mut len = 0;
                let mut i = j;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
        }
        d[k] = y[k];
        y[k] = 0.0;
        for t in top..n {
            let i = pattern[t];
            let yi = y[i];
            y[i] = 0.0;
            let l_ki = yi / d[i];
            let p2 = lp[i] + lnz_cur[i];
            for p in lp[i]..p2 {
                y[li[p] as usize] -= lx[p] * yi;
            }
            li[p2] = k as u32;
            lx[p2] = l_ki;
            lnz_cur[i] += 1;
            d[k] -= l_ki * yi;
        }
        if d[k] == 0.0 || !d[k].is_finite() {
            return Err(Error::SaddleBreakdown(format!(
                "zero pivot at row {k} of {n}"
            )));
        }
    }
    Ok(LdlFactor { n, lp, li, lx, d })
}

impl LdlFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    /// Number of negative pivots (the inertia check for saddle systems).
    pub fn n_negative(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p] as usize] -= self.lx[p] * xj;
            }
        }
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p] as usize];
            }
            x[j] = s;
        }
        x
    }
}

/// The bordered system of one Newton correction:
/// `[[A, c], [cᵀ, 0]] [u; σ] = [rhs_u; rhs_s]`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: SparseSymMatrix,
    pub c: Vec<f64>,
    pub rhs_u: Vec<f64>,
    pub rhs_s: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub sigma: f64,
    pub iters: usize,
    /// 2-norm of the full bordered residual, recomputed after the solve.
    pub residual: f64,
}

impl SaddleSystem {
    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// Assembles the `(n+1)`-square bordered matrix; the zero corner is
    /// stored explicitly so the pattern stays symmetric.
    pub fn bordered(&self) -> Result<SparseSymMatrix> {
        let n = self.n();
        let mut indptr = Vec::with_capacity(n + 2);
        let mut indices = Vec::with_capacity(self.a.nnz() + 2 * n + 1);
        let mut data = Vec::with_capacity(self.a.nnz() + 2 * n + 1);
        indptr.push(0);
        for i in 0..n {
            for (j, v) in self.a.row_entries(i) {
                indices.push(j);
                data.push(v);
            }
            indices.push(n as u32);
            data.push(self.c[i]);
            indptr.push(indices.len());
        }
        for (j, &v) in self.c.iter().enumerate() {
            indices.push(j as u32);
            data.push(v);
        }
        indices.push(n as u32);
        data.push(0.0);
        indptr.push(indices.len());
        let csr = CsrMatrix::from_parts(n + 1, n + 1, indptr, indices, data)?;
        Ok(SparseSymMatrix::from_csr_unchecked(csr))
    }

    /// Residual blocks `(rhs_u - A u - σ c, rhs_s - cᵀ u)`.
    pub fn residual(&self, u: &[f64], sigma: f64) -> (Vec<f64>, f64) {
        let mut r = vec![0.0; self.n()];
        self.a.matvec(u, &mut r);
        for i in 0..self.n() {
            r[i] = self.rhs_u[i] - r[i] - sigma * self.c[i];
        }
        (r, self.rhs_s - dot(&self.c, u))
    }

    fn packed_rhs(&self) -> Vec<f64> {
        let mut b = self.rhs_u.clone();
        b.push(self.rhs_s);
        b
    }
}

/// Direct solve through the sparse LDLᵀ of the bordered matrix, border
/// last.  A well-posed saddle system has exactly one negative pivot more
/// than the (1,1) block alone; the inertia is not checked here because the
/// recomputed residual is the authoritative acceptance test.
pub fn solve_saddle_direct(sys: &SaddleSystem) -> Result<SaddleSolution> {
    let bordered = sys.bordered()?;
    let factor = ldl_factor(bordered.as_csr())?;
    let b = sys.packed_rhs();
    let xs = factor.solve(&b);
    let (u, sigma) = (xs[..sys.n()].to_vec(), xs[sys.n()]);
    let (ru, rs) = sys.residual(&u, sigma);
    let residual = (dot(&ru, &ru) + rs * rs).sqrt();
    Ok(SaddleSolution {
        u,
        sigma,
        iters: 0,
        residual,
    })
}

/// Block-diagonal preconditioner for the bordered system: a V-cycle on an
/// SPD surrogate of the (1,1) block, and the scalar `cᵀ diag(L)⁻¹ c` for
/// the border row.
pub struct SaddlePrecond {
    vc: VCycle,
    s_hat: f64,
    zu: Vec<f64>,
}

impl SaddlePrecond {
    pub fn new(
        spd_surrogate: SparseSymMatrix,
        prolongations: &[Arc<CsrMatrix>],
        c: &[f64],
    ) -> Result<Self> {
        if spd_surrogate.n() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: spd_surrogate.n(),
                got: c.len(),
            });
        }
        let diag = spd_surrogate.diagonal();
        let s_hat: f64 = c.iter().zip(&diag).map(|(&ci, &di)| ci * ci / di).sum();
        if !(s_hat > 0.0) {
            return Err(Error::NotPositiveDefinite(
                "border column is orthogonal to the diagonal scaling".into(),
            ));
        }
        let n = spd_surrogate.n();
        let vc = VCycle::new(spd_surrogate, prolongations)?;
        Ok(SaddlePrecond {
            vc,
            s_hat,
            zu: vec![0.0; n],
        })
    }
}

impl Preconditioner for SaddlePrecond {
    fn n(&self) -> usize {
        self.vc.n() + 1
    }

    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        let n = self.vc.n();
        self.vc.apply(&r[..n], &mut self.zu);
        z[..n].copy_from_slice(&self.zu);
        z[n] = r[n] / self.s_hat;
    }
}

/// Multigrid context for the iterative saddle path: an SPD surrogate of
/// the (1,1) block plus the interior prolongation chain down to the
/// coarsest level.
pub struct SaddleContext<'a> {
    pub spd_surrogate: SparseSymMatrix,
    pub prolongations: &'a [Arc<CsrMatrix>],
}

/// Solves the bordered system, choosing the direct factorization for
/// small systems and preconditioned MINRES above `direct_max_dofs`.  The
/// direct path falls back to MINRES if elimination breaks down.
pub fn solve_saddle(
    sys: &SaddleSystem,
    ctx: Option<SaddleContext>,
    opts: &SolverOptions,
    tol: f64,
) -> Result<SaddleSolution> {
    if sys.n() <= opts.direct_max_dofs {
        match solve_saddle_direct(sys) {
            Ok(sol) => return Ok(sol),
            Err(Error::SaddleBreakdown(_)) if ctx.is_some() => {}
            Err(e) => return Err(e),
        }
    }
    let Some(ctx) = ctx else {
        return Err(Error::InvalidArgument(
            "iterative saddle solve needs a multigrid context".into(),
        ));
    };
    let bordered = sys.bordered()?;
    let mut precond = SaddlePrecond::new(ctx.spd_surrogate, ctx.prolongations, &sys.c)?;
    let b = sys.packed_rhs();
    let mut x = vec![0.0; sys.n() + 1];
    let report = minres(&bordered, &b, &mut x, &mut precond, tol, opts.max_iters)?;
    let (u, sigma) = (x[..sys.n()].to_vec(), x[sys.n()]);
    let (ru, rs) = sys.residual(&u, sigma);
    let residual = (dot(&ru, &ru) + rs * rs).sqrt();
    Ok(SaddleSolution {
        u,
        sigma,
        iters: report.iters,
        residual,
    })
}
