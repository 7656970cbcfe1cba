//! P1 finite-element assembly of the operators in the eigenproblem.
//!
//! All bilinear forms are integrated with the fixed per-dimension simplex
//! rule from [`crate::quadrature`], which is exact for every integrand here
//! (the stiffest is the cubic term against a test function, degree 4).
//! Matrices are assembled cell by cell in ascending cell order, and each
//! off-diagonal value is written to both triangles from one computed
//! number, so assembled matrices are exactly symmetric and bitwise
//! reproducible.

use std::sync::Arc;

use crate::error::Error;
use crate::field::NodalFunction;
use crate::mesh::{BoxDomain, SimplexMesh};
use crate::quadrature::{default_rule, SimplexRule};
use crate::sparse::{SparseSymMatrix, SparsityPattern};
use crate::Result;

/// Harmonic trap `W(x) = Σ γᵢ xᵢ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    gammas: Vec<f64>,
}

impl Potential {
    /// Trap strengths must be non-negative (zero gives the free linear
    /// Laplace eigenproblem used in sanity checks).
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "potential needs 1 to 3 trap strengths, got {}",
                gammas.len()
            )));
        }
        if gammas.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "trap strengths must be non-negative, got {gammas:?}"
            )));
        }
        Ok(Potential { gammas })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn dim(&self) -> usize {
        self.gammas.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.gammas.iter().zip(x).map(|(&g, &xi)| g * xi * xi).sum()
    }
}

/// The continuous problem: domain, trap, and interaction strength.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    pub domain: BoxDomain,
    pub potential: Potential,
    pub zeta: f64,
}

impl ProblemParams {
    /// `zeta = 0` is accepted: it reduces the equation to the linear
    /// eigenproblem, which the test suite leans on.
    pub fn new(domain: BoxDomain, potential: Potential, zeta: f64) -> Result<Self> {
        if potential.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: potential.dim(),
            });
        }
        if !(zeta >= 0.0) || !zeta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interaction strength must be non-negative, got {zeta}"
            )));
        }
        Ok(ProblemParams {
            domain,
            potential,
            zeta,
        })
    }
}

/// A scalar coefficient evaluated at quadrature points of a cell.
pub trait CellField {
    fn eval(&self, mesh: &SimplexMesh, cell: usize, bary: &[f64], x: &[f64]) -> f64;
}

impl CellField for Potential {
    fn eval(&self, _mesh: &SimplexMesh, _cell: usize, _bary: &[f64], x: &[f64]) -> f64 {
        self.eval(x)
    }
}

/// `scale * u(x)²` for a nodal function `u`; with `scale = 3ζ` this is the
/// coefficient of the linearized interaction term.
pub struct ScaledSquare<'a> {
    pub u: &'a NodalFunction,
    pub scale: f64,
}

impl CellField for ScaledSquare<'_> {
    fn eval(&self, mesh: &SimplexMesh, cell: usize, bary: &[f64], _x: &[f64]) -> f64 {
        let v = self.u.eval_in_cell(mesh, cell, bary);
        self.scale * v * v
    }
}

/// Adapts a plain closure over physical coordinates.
pub struct Pointwise<F>(pub F);

impl<F: Fn(&[f64]) -> f64> CellField for Pointwise<F> {
    fn eval(&self, _mesh: &SimplexMesh, _cell: usize, _bary: &[f64], x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Maps mesh vertices to interior unknowns (homogeneous Dirichlet
/// elimination).  Interior numbering follows ascending vertex order.
#[derive(Debug, Clone)]
pub struct DofMap {
    level: usize,
    interior_of_vertex: Vec<Option<u32>>,
    vertex_of_interior: Vec<u32>,
}

impl DofMap {
    pub fn from_mesh(mesh: &SimplexMesh) -> Self {
        let mut interior_of_vertex = Vec::with_capacity(mesh.n_vertices());
        let mut vertex_of_interior = Vec::new();
        for v in 0..mesh.n_vertices() {
            if mesh.is_boundary_vertex(v) {
                interior_of_vertex.push(None);
            } else {
                interior_of_vertex.push(Some(vertex_of_interior.len() as u32));
                vertex_of_interior.push(v as u32);
            }
        }
        DofMap {
            level: mesh.level(),
            interior_of_vertex,
            vertex_of_interior,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.interior_of_vertex.len()
    }

    pub fn n_interior(&self) -> usize {
        self.vertex_of_interior.len()
    }

    pub fn interior_index(&self, vertex: usize) -> Option<u32> {
        self.interior_of_vertex[vertex]
    }

    pub fn vertex_index(&self, interior: usize) -> usize {
        self.vertex_of_interior[interior] as usize
    }

    /// Keeps the interior entries of a full vertex vector.
    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        debug_assert_eq!(full.len(), self.n_vertices());
        self.vertex_of_interior
            .iter()
            .map(|&v| full[v as usize])
            .collect()
    }

    /// Scatters interior values back to vertices, with exact zeros on the
    /// boundary.
    pub fn expand(&self, interior: &[f64]) -> Vec<f64> {
        debug_assert_eq!(interior.len(), self.n_interior());
        let mut full = vec![0.0; self.n_vertices()];
        for (i, &v) in self.vertex_of_interior.iter().enumerate() {
            full[v as usize] = interior[i];
        }
        full
    }

    pub fn expand_fn(&self, interior: &[f64]) -> NodalFunction {
        NodalFunction::new(self.level, self.expand(interior))
    }
}

/// Restricts a full vertex matrix to interior rows and columns.
pub fn eliminate_dirichlet_matrix(full: &SparseSymMatrix, dofs: &DofMap) -> SparseSymMatrix {
    let n = dofs.n_interior();
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let v = dofs.vertex_index(i);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (j, val) in full.row_entries(v) {
            if let Some(jj) = dofs.interior_index(j as usize) {
                cols.push(jj);
                vals.push(val);
            }
        }
        rows.push(cols);
        values.push(vals);
    }
    let pattern = SparsityPattern::from_rows(n, rows);
    let mut out = SparseSymMatrix::zeros(Arc::new(pattern));
    out.data_mut()
        .copy_from_slice(&values.into_iter().flatten().collect::<Vec<_>>());
    out
}

/// Restricts a full vertex vector to interior entries.
pub fn eliminate_dirichlet_vector(full: &[f64], dofs: &DofMap) -> Vec<f64> {
    dofs.reduce(full)
}

/// Gradients of the barycentric basis and the cell volume.
fn cell_geometry(mesh: &SimplexMesh, c: usize) -> ([[f64; 3]; 4], f64) {
    let d = mesh.dim();
    let vs = mesh.cell(c);
    let p0 = mesh.vertex(vs[0] as usize);
    let mut e = [[0.0f64; 3]; 3];
    for j in 1..=d {
        let pj = mesh.vertex(vs[j] as usize);
        for k in 0..d {
            e[j - 1][k] = pj[k] - p0[k];
        }
    }
    let mut grads = [[0.0f64; 3]; 4];
    let det = match d {
        1 => {
            let det = e[0][0];
            grads[1][0] = 1.0 / det;
            det
        }
        2 => {
            let det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
            grads[1][0] = e[1][1] / det;
            grads[1][1] = -e[1][0] / det;
            grads[2][0] = -e[0][1] / det;
            grads[2][1] = e[0][0] / det;
            det
        }
        _ => {
            let c0 = [
                e[1][1] * e[2][2] - e[1][2] * e[2][1],
                e[1][2] * e[2][0] - e[1][0] * e[2][2],
                e[1][0] * e[2][1] - e[1][1] * e[2][0],
            ];
            let det = e[0][0] * c0[0] + e[0][1] * c0[1] + e[0][2] * c0[2];
            let c1 = [
                e[0][2] * e[2][1] - e[0][1] * e[2][2],
                e[0][0] * e[2][2] - e[0][2] * e[2][0],
                e[0][1] * e[2][0] - e[0][0] * e[2][1],
            ];
            let c2 = [
                e[0][1] * e[1][2] - e[0][2] * e[1][1],
                e[0][2] * e[1][0] - e[0][0] * e[1][2],
                e[0][0] * e[1][1] - e[0][1] * e[1][0],
            ];
            for k in 0..3 {
                grads[1][k] = c0[k] / det;
                grads[2][k] = c1[k] / det;
                grads[3][k] = c2[k] / det;
            }
            det
        }
    };
    for k in 0..d {
        grads[0][k] = -(1..=d).map(|j| grads[j][k]).sum::<f64>();
    }
    let volume = det / (1..=d).fold(1.0, |acc, k| acc * k as f64);
    (grads, volume)
}

/// Vertex-to-vertex adjacency pattern of the mesh.
fn vertex_pattern(mesh: &SimplexMesh) -> SparsityPattern {
    let n = mesh.n_vertices();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for c in 0..mesh.n_cells() {
        let vs = mesh.cell(c);
        for &a in vs {
            for &b in vs {
                rows[a as usize].push(b);
            }
        }
    }
    SparsityPattern::from_rows(n, rows)
}

/// Adjacency pattern restricted to interior unknowns.
fn interior_pattern(mesh: &SimplexMesh, dofs: &DofMap) -> SparsityPattern {
    let n = dofs.n_interior();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for c in 0..mesh.n_cells() {
        let vs = mesh.cell(c);
        for &a in vs {
            let Some(i) = dofs.interior_index(a as usize) else {
                continue;
            };
            for &b in vs {
                if let Some(j) = dofs.interior_index(b as usize) {
                    rows[i as usize].push(j);
                }
            }
        }
    }
    SparsityPattern::from_rows(n, rows)
}

/// Index view used by the generic assembly loops: either all vertices or
/// the interior subset.
enum Scatter<'a> {
    Full,
    Interior(&'a DofMap),
}

impl Scatter<'_> {
    #[inline]
    fn map(&self, vertex: u32) -> Option<u32> {
        match self {
            Scatter::Full => Some(vertex),
            Scatter::Interior(dofs) => dofs.interior_index(vertex as usize),
        }
    }
}

fn assemble_stiffness_on(
    mesh: &SimplexMesh,
    pattern: Arc<SparsityPattern>,
    scatter: &Scatter,
) -> SparseSymMatrix {
    let d = mesh.dim();
    let mut out = SparseSymMatrix::zeros(pattern);
    for c in 0..mesh.n_cells() {
        let (grads, vol) = cell_geometry(mesh, c);
        let vs = mesh.cell(c);
        for a in 0..=d {
            let Some(i) = scatter.map(vs[a]) else {
                continue;
            };
            for b in a..=d {
                let Some(j) = scatter.map(vs[b]) else {
                    continue;
                };
                let dot: f64 = (0..d).map(|k| grads[a][k] * grads[b][k]).sum();
                let value = vol * dot;
                out.add_at(i as usize, j, value);
                if i != j {
                    out.add_at(j as usize, i, value);
                }
            }
        }
    }
    out
}

fn assemble_weighted_on(
    mesh: &SimplexMesh,
    pattern: Arc<SparsityPattern>,
    scatter: &Scatter,
    weight: &impl CellField,
    rule: &SimplexRule,
) -> SparseSymMatrix {
    let d = mesh.dim();
    let mut out = SparseSymMatrix::zeros(pattern);
    let nq = rule.len();
    let mut wq = vec![0.0f64; nq];
    let mut x = [0.0f64; 3];
    for c in 0..mesh.n_cells() {
        let vs = mesh.cell(c);
        let vol = mesh.cell_volume(c);
        for q in 0..nq {
            let bary = rule.point(q);
            for k in 0..d {
                x[k] = bary
                    .iter()
                    .zip(vs)
                    .map(|(&b, &v)| b * mesh.vertex(v as usize)[k])
                    .sum();
            }
            wq[q] = vol * rule.weight(q) * weight.eval(mesh, c, bary, &x[..d]);
        }
        for a in 0..=d {
            let Some(i) = scatter.map(vs[a]) else {
                continue;
            };
            for b in a..=d {
                let Some(j) = scatter.map(vs[b]) else {
                    continue;
                };
                let value: f64 = (0..nq)
                    .map(|q| {
                        let bary = rule.point(q);
                        wq[q] * bary[a] * bary[b]
                    })
                    .sum();
                out.add_at(i as usize, j, value);
                if i != j {
                    out.add_at(j as usize, i, value);
                }
            }
        }
    }
    out
}

/// Interior-DOF stiffness matrix `(∇φᵢ, ∇φⱼ)`.
pub fn assemble_stiffness(mesh: &SimplexMesh, dofs: &DofMap) -> SparseSymMatrix {
    let pattern = Arc::new(interior_pattern(mesh, dofs));
    assemble_stiffness_on(mesh, pattern, &Scatter::Interior(dofs))
}

/// Stiffness over all vertices, boundary included.
pub fn assemble_stiffness_full(mesh: &SimplexMesh) -> SparseSymMatrix {
    let pattern = Arc::new(vertex_pattern(mesh));
    assemble_stiffness_on(mesh, pattern, &Scatter::Full)
}

struct UnitWeight;

impl CellField for UnitWeight {
    fn eval(&self, _: &SimplexMesh, _: usize, _: &[f64], _: &[f64]) -> f64 {
        1.0
    }
}

/// Interior-DOF mass matrix `(φᵢ, φⱼ)`.  Shares the quadrature path of
/// [`assemble_weighted_mass`] with unit weight, so the two agree bitwise.
pub fn assemble_mass(mesh: &SimplexMesh, dofs: &DofMap) -> SparseSymMatrix {
    assemble_weighted_mass(mesh, dofs, &UnitWeight)
}

pub fn assemble_mass_full(mesh: &SimplexMesh) -> SparseSymMatrix {
    assemble_weighted_mass_full(mesh, &UnitWeight)
}

/// Interior-DOF weighted mass matrix `(w φᵢ, φⱼ)`.
pub fn assemble_weighted_mass(
    mesh: &SimplexMesh,
    dofs: &DofMap,
    weight: &impl CellField,
) -> SparseSymMatrix {
    let pattern = Arc::new(interior_pattern(mesh, dofs));
    assemble_weighted_on(
        mesh,
        pattern,
        &Scatter::Interior(dofs),
        weight,
        default_rule(mesh.dim()),
    )
}

pub fn assemble_weighted_mass_full(mesh: &SimplexMesh, weight: &impl CellField) -> SparseSymMatrix {
    let pattern = Arc::new(vertex_pattern(mesh));
    assemble_weighted_on(
        mesh,
        pattern,
        &Scatter::Full,
        weight,
        default_rule(mesh.dim()),
    )
}

/// Weighted mass with an explicit quadrature rule; used by the refined
/// cross-check tests.
pub fn assemble_weighted_mass_with_rule(
    mesh: &SimplexMesh,
    dofs: &DofMap,
    weight: &impl CellField,
    rule: &SimplexRule,
) -> SparseSymMatrix {
    let pattern = Arc::new(interior_pattern(mesh, dofs));
    assemble_weighted_on(mesh, pattern, &Scatter::Interior(dofs), weight, rule)
}

/// Interior vector with entries `2ζ ∫ u³ φᵢ` (the right-hand side of the
/// Newton step carries this factor).
pub fn assemble_cubic_vector(
    mesh: &SimplexMesh,
    dofs: &DofMap,
    u: &NodalFunction,
    zeta: f64,
) -> Result<Vec<f64>> {
    assemble_cubic_vector_with_rule(mesh, dofs, u, zeta, default_rule(mesh.dim()))
}

pub fn assemble_cubic_vector_with_rule(
    mesh: &SimplexMesh,
    dofs: &DofMap,
    u: &NodalFunction,
    zeta: f64,
    rule: &SimplexRule,
) -> Result<Vec<f64>> {
    if u.level != mesh.level() {
        return Err(Error::LevelMismatch {
            expected: mesh.level(),
            got: u.level,
        });
    }
    if u.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_vertices(),
            got: u.len(),
        });
    }
    let d = mesh.dim();
    let mut out = vec![0.0f64; dofs.n_interior()];
    if zeta == 0.0 {
        return Ok(out);
    }
    for c in 0..mesh.n_cells() {
        let vs = mesh.cell(c);
        let vol = mesh.cell_volume(c);
        for (bary, w) in rule.iter() {
            let uq = u.eval_in_cell(mesh, c, bary);
            let common = 2.0 * zeta * vol * w * uq * uq * uq;
            for a in 0..=d {
                if let Some(i) = dofs.interior_index(vs[a] as usize) {
                    out[i as usize] += common * bary[a];
                }
            }
        }
    }
    Ok(out)
}

/// The assembled operators of one mesh level.  The linear matrices share a
/// single interior sparsity pattern, so shifted combinations and repeated
/// nonlinear-term assemblies reuse the symbolic structure.
#[derive(Debug, Clone)]
pub struct Assemblies {
    mesh: Arc<SimplexMesh>,
    params: ProblemParams,
    dofs: DofMap,
    interior_pattern: Arc<SparsityPattern>,
    stiffness: SparseSymMatrix,
    mass: SparseSymMatrix,
    potential_mass: SparseSymMatrix,
    mass_full: SparseSymMatrix,
}

impl Assemblies {
    pub fn build(mesh: Arc<SimplexMesh>, params: &ProblemParams) -> Result<Self> {
        if params.domain.dim() != mesh.dim() {
            return Err(Error::DimensionMismatch {
                expected: mesh.dim(),
                got: params.domain.dim(),
            });
        }
        let dofs = DofMap::from_mesh(&mesh);
        if dofs.n_interior() == 0 {
            return Err(Error::InvalidArgument(
                "mesh has no interior vertices; increase cells_per_axis".into(),
            ));
        }
        let pattern = Arc::new(interior_pattern(&mesh, &dofs));
        let scatter = Scatter::Interior(&dofs);
        let rule = default_rule(mesh.dim());
        let stiffness = assemble_stiffness_on(&mesh, pattern.clone(), &scatter);
        let mass = assemble_weighted_on(&mesh, pattern.clone(), &scatter, &UnitWeight, rule);
        let potential_mass =
            assemble_weighted_on(&mesh, pattern.clone(), &scatter, &params.potential, rule);
        let mass_full = assemble_mass_full(&mesh);
        Ok(Assemblies {
            mesh,
            params: params.clone(),
            dofs,
            interior_pattern: pattern,
            stiffness,
            mass,
            potential_mass,
            mass_full,
        })
    }

    pub fn mesh(&self) -> &Arc<SimplexMesh> {
        &self.mesh
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn level(&self) -> usize {
        self.mesh.level()
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_interior(&self) -> usize {
        self.dofs.n_interior()
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn potential_mass(&self) -> &SparseSymMatrix {
        &self.potential_mass
    }

    pub fn mass_full(&self) -> &SparseSymMatrix {
        &self.mass_full
    }

    /// Interior matrix of `(scale·u² φᵢ, φⱼ)` on the shared pattern.
    pub fn nonlinear_mass(&self, u: &NodalFunction, scale: f64) -> Result<SparseSymMatrix> {
        if u.level != self.level() {
            return Err(Error::LevelMismatch {
                expected: self.level(),
                got: u.level,
            });
        }
        if scale == 0.0 {
            return Ok(SparseSymMatrix::zeros(self.interior_pattern.clone()));
        }
        Ok(assemble_weighted_on(
            &self.mesh,
            self.interior_pattern.clone(),
            &Scatter::Interior(&self.dofs),
            &ScaledSquare { u, scale },
            default_rule(self.mesh.dim()),
        ))
    }

    /// Linearization `stiffness + potential mass + (scale·u²) mass`; the
    /// fixed-point iteration uses `scale = ζ`, the Newton step `3ζ`.
    pub fn linearized_operator(&self, u: &NodalFunction, scale: f64) -> Result<SparseSymMatrix> {
        let base = self
            .stiffness
            .linear_combination(1.0, &self.potential_mass, 1.0)?;
        if scale == 0.0 {
            return Ok(base);
        }
        base.linear_combination(1.0, &self.nonlinear_mass(u, scale)?, 1.0)
    }

    pub fn cubic_vector(&self, u: &NodalFunction, zeta: f64) -> Result<Vec<f64>> {
        assemble_cubic_vector(&self.mesh, &self.dofs, u, zeta)
    }

    /// Mass inner product of interior vectors.
    pub fn m_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mass.quad_form(x, y)
    }

    pub fn m_norm(&self, x: &[f64]) -> f64 {
        self.m_inner(x, x).sqrt()
    }

    /// `∫ u` over the domain (full mass row sums against the vertex values).
    pub fn integral(&self, u: &NodalFunction) -> f64 {
        let ones = vec![1.0; u.len()];
        self.mass_full.quad_form(&ones, &u.values)
    }
}
