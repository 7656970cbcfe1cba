//! Uniform simplicial meshes of box domains with nested dyadic refinement.
//!
//! A box with `m` cells per axis is split into `mᵈ` sub-boxes, and each
//! sub-box into `d!` simplices along the main diagonal direction (the
//! standard diagonal subdivision: 1 interval, 2 triangles, 6 tetrahedra).
//! This triangulation is self-similar under halving the grid, so refining
//! a mesh is the same as building the mesh with `2m` cells per axis: every
//! coarse simplex contains exactly `2ᵈ` fine simplices, the P1 spaces are
//! nested, and all cells on all levels are congruent up to scaling.  Each
//! fine vertex is either a coarse vertex or the midpoint of a coarse edge,
//! which keeps prolongation rows at one entry (weight 1) or two (weight ½).

use std::io::Write as IoWrite;
use std::sync::Arc;

use crate::error::Error;
use crate::field::NodalFunction;
use crate::sparse::CsrMatrix;
use crate::Result;

/// Axis-aligned box `Π (lowerᵢ, upperᵢ)` in dimension 1, 2, or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() || lower.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 1, 2, or 3, got {}",
                lower.len()
            )));
        }
        for k in 0..lower.len() {
            if !(upper[k] > lower[k]) || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "axis {k}: need lower < upper, got [{}, {}]",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The unit box `(0,1)ᵈ`.
    pub fn unit(dim: usize) -> Result<Self> {
        BoxDomain::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }
}

/// A conforming simplicial mesh of a box domain.
///
/// Vertices are the points of a uniform lattice, numbered lexicographically
/// with the first axis fastest; cells store `dim + 1` vertex ids each, in
/// positive orientation.  Storage is flat to keep large meshes cheap.
#[derive(Debug, Clone)]
pub struct SimplexMesh {
    domain: BoxDomain,
    dim: usize,
    level: usize,
    cells_per_axis: usize,
    verts: Vec<f64>,
    cells: Vec<u32>,
    boundary: Vec<bool>,
    h_max: f64,
}

impl SimplexMesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Refinement level, starting at 1 for the initial mesh.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn n_vertices(&self) -> usize {
        self.verts.len() / self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.verts[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        let n = self.dim + 1;
        &self.cells[c * n..(c + 1) * n]
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn n_boundary_vertices(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    /// Largest cell diameter.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// Signed volume of cell `c` (positive for all constructed meshes).
    pub fn cell_volume(&self, c: usize) -> f64 {
        let vs = self.cell(c);
        let p0 = self.vertex(vs[0] as usize);
        let mut e = [[0.0f64; 3]; 3];
        for j in 1..=self.dim {
            let pj = self.vertex(vs[j] as usize);
            for k in 0..self.dim {
                e[j - 1][k] = pj[k] - p0[k];
            }
        }
        let det = match self.dim {
            1 => e[0][0],
            2 => e[0][0] * e[1][1] - e[0][1] * e[1][0],
            _ => {
                e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                    - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                    + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
            }
        };
        det / factorial(self.dim)
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    fn cell_diameter(&self, c: usize) -> f64 {
        let vs = self.cell(c);
        let mut d2: f64 = 0.0;
        for a in 0..vs.len() {
            for b in (a + 1)..vs.len() {
                let pa = self.vertex(vs[a] as usize);
                let pb = self.vertex(vs[b] as usize);
                let dist2: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
                d2 = d2.max(dist2);
            }
        }
        d2.sqrt()
    }

    /// Largest ratio (cell diameter / cell inradius) over all cells; a
    /// scale-invariant shape-regularity measure, constant across the
    /// refinement hierarchy by construction.
    pub fn shape_ratio_max(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..self.n_cells() {
            let vol = self.cell_volume(c);
            let surface = self.cell_surface(c);
            let inradius = self.dim as f64 * vol / surface;
            worst = worst.max(self.cell_diameter(c) / inradius);
        }
        worst
    }

    /// Sum of the (d-1)-measures of the facets of cell `c`; isolated points
    /// in 1D count as measure one each.
    fn cell_surface(&self, c: usize) -> f64 {
        let vs = self.cell(c);
        match self.dim {
            1 => 2.0,
            2 => {
                let mut sum = 0.0;
                for a in 0..3 {
                    for b in (a + 1)..3 {
                        let pa = self.vertex(vs[a] as usize);
                        let pb = self.vertex(vs[b] as usize);
                        sum += ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
                    }
                }
                sum
            }
            _ => {
                let mut sum = 0.0;
                for skip in 0..4 {
                    let tri: Vec<&[f64]> = (0..4)
                        .filter(|&j| j != skip)
                        .map(|j| self.vertex(vs[j] as usize))
                        .collect();
                    let u: Vec<f64> = (0..3).map(|k| tri[1][k] - tri[0][k]).collect();
                    let v: Vec<f64> = (0..3).map(|k| tri[2][k] - tri[0][k]).collect();
                    let cx = u[1] * v[2] - u[2] * v[1];
                    let cy = u[2] * v[0] - u[0] * v[2];
                    let cz = u[0] * v[1] - u[1] * v[0];
                    sum += 0.5 * (cx * cx + cy * cy + cz * cz).sqrt();
                }
                sum
            }
        }
    }

    /// Structural checks: positive orientation, conforming facets, boundary
    /// flags on boundary facets, and exact tiling of the box volume.
    /// Intended for tests and debugging; cost is `O(cells log cells)`.
    pub fn validate(&self) -> Result<()> {
        for c in 0..self.n_cells() {
            let v = self.cell_volume(c);
            if !(v > 0.0) {
                return Err(Error::DegenerateCell { cell: c, volume: v });
            }
        }
        // Every facet is shared by exactly two cells, or one on the boundary.
        let mut facets: Vec<(Vec<u32>, usize)> =
            Vec::with_capacity(self.n_cells() * (self.dim + 1));
        for c in 0..self.n_cells() {
            let vs = self.cell(c);
            for skip in 0..vs.len() {
                let mut f: Vec<u32> = vs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                facets.push((f, c));
            }
        }
        facets.sort();
        let mut i = 0;
        while i < facets.len() {
            let mut j = i + 1;
            while j < facets.len() && facets[j].0 == facets[i].0 {
                j += 1;
            }
            let count = j - i;
            if count == 1 {
                if !facets[i].0.iter().all(|&v| self.boundary[v as usize]) {
                    return Err(Error::InvalidArgument(format!(
                        "facet {:?} lies on one cell but not on the boundary",
                        facets[i].0
                    )));
                }
            } else if count != 2 {
                return Err(Error::InvalidArgument(format!(
                    "facet {:?} is shared by {count} cells",
                    facets[i].0
                )));
            }
            i = j;
        }
        let vol = self.total_volume();
        let want = self.domain.volume();
        if (vol - want).abs() > 1e-12 * want {
            return Err(Error::InvalidArgument(format!(
                "cells tile {vol:.15e} of a box with volume {want:.15e}"
            )));
        }
        Ok(())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn permutations(dim: usize) -> Vec<Vec<usize>> {
    match dim {
        1 => vec![vec![0]],
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
    }
}

fn parity(perm: &[usize]) -> i32 {
    let mut inversions = 0;
    for a in 0..perm.len() {
        for b in (a + 1)..perm.len() {
            if perm[a] > perm[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Builds the level-1 mesh with `cells_per_axis` sub-boxes per axis,
/// `d! · cells_per_axisᵈ` simplices in total.
pub fn build_initial_mesh(domain: &BoxDomain, cells_per_axis: usize) -> Result<SimplexMesh> {
    build_at(domain, cells_per_axis, 1)
}

fn build_at(domain: &BoxDomain, m: usize, level: usize) -> Result<SimplexMesh> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "cells_per_axis must be at least 1".into(),
        ));
    }
    let dim = domain.dim();
    let np = m + 1;
    let n_vertices = np.pow(dim as u32);

    let mut verts = Vec::with_capacity(n_vertices * dim);
    let mut boundary = Vec::with_capacity(n_vertices);
    let mut idx = vec![0usize; dim];
    for _ in 0..n_vertices {
        for k in 0..dim {
            let i = idx[k];
            // Affine blend keeps the face coordinates exactly on the box.
            let x = ((m - i) as f64 * domain.lower[k] + i as f64 * domain.upper[k]) / m as f64;
            verts.push(x);
        }
        let x = &verts[verts.len() - dim..];
        boundary.push(on_box_boundary(domain, x));
        bump(&mut idx, np);
    }

    let perms = permutations(dim);
    let n_cells = m.pow(dim as u32) * perms.len();
    let mut cells: Vec<u32> = Vec::with_capacity(n_cells * (dim + 1));
    let stride: Vec<usize> = (0..dim).map(|k| np.pow(k as u32)).collect();
    let mut cidx = vec![0usize; dim];
    for _ in 0..m.pow(dim as u32) {
        let corner: usize = (0..dim).map(|k| cidx[k] * stride[k]).sum();
        for perm in &perms {
            let base = cells.len();
            let mut v = corner;
            cells.push(v as u32);
            for &axis in perm {
                v += stride[axis];
                cells.push(v as u32);
            }
            if parity(perm) < 0 {
                cells.swap(base + dim - 1, base + dim);
            }
        }
        bump(&mut cidx, m);
    }

    let mut mesh = SimplexMesh {
        domain: domain.clone(),
        dim,
        level,
        cells_per_axis: m,
        verts,
        cells,
        boundary,
        h_max: 0.0,
    };
    let mut h: f64 = 0.0;
    for c in 0..mesh.n_cells() {
        h = h.max(mesh.cell_diameter(c));
    }
    mesh.h_max = h;
    Ok(mesh)
}

/// Advances a mixed-radix counter with `base` positions per digit.
fn bump(idx: &mut [usize], base: usize) {
    for digit in idx.iter_mut() {
        *digit += 1;
        if *digit < base {
            return;
        }
        *digit = 0;
    }
}

fn on_box_boundary(domain: &BoxDomain, x: &[f64]) -> bool {
    for k in 0..domain.dim() {
        let tol = 1e-14 * domain.lower[k].abs().max(domain.upper[k].abs()).max(1.0);
        if (x[k] - domain.lower[k]).abs() <= tol || (x[k] - domain.upper[k]).abs() <= tol {
            return true;
        }
    }
    false
}

/// Interpolation from a mesh level to the next finer one: an
/// `n_fine x n_coarse` sparse map whose rows are the coarse basis values
/// at the fine vertices (a single 1, or ½-½ on a coarse edge).
#[derive(Debug, Clone)]
pub struct Prolongation {
    pub coarse_level: usize,
    pub fine_level: usize,
    matrix: CsrMatrix,
}

impl Prolongation {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_fine(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_coarse(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        self.matrix.apply(coarse)
    }
}

/// Refines every cell into `2ᵈ` children and returns the fine mesh with
/// the interpolation map from the coarse space.
pub fn refine_regular(mesh: &SimplexMesh) -> Result<(SimplexMesh, Prolongation)> {
    let m = mesh.cells_per_axis;
    let fine = build_at(&mesh.domain, 2 * m, mesh.level + 1)?;
    let dim = mesh.dim;
    let np_c = m + 1;
    let np_f = 2 * m + 1;
    let stride_c: Vec<usize> = (0..dim).map(|k| np_c.pow(k as u32)).collect();

    let n_fine = fine.n_vertices();
    let mut indptr = Vec::with_capacity(n_fine + 1);
    let mut indices: Vec<u32> = Vec::with_capacity(2 * n_fine);
    let mut data: Vec<f64> = Vec::with_capacity(2 * n_fine);
    indptr.push(0usize);
    let mut fidx = vec![0usize; dim];
    for _ in 0..n_fine {
        let mut lo = 0usize;
        let mut hi = 0usize;
        let mut odd = false;
        for k in 0..dim {
            let i = fidx[k];
            lo += (i / 2) * stride_c[k];
            hi += i.div_ceil(2) * stride_c[k];
            odd |= i % 2 == 1;
        }
        if odd {
            // Midpoint of the coarse lattice edge from `lo` to `hi`; the
            // diagonal subdivision contains every such edge.
            indices.push(lo as u32);
            data.push(0.5);
            indices.push(hi as u32);
            data.push(0.5);
        } else {
            indices.push(lo as u32);
            data.push(1.0);
        }
        indptr.push(indices.len());
        bump(&mut fidx, np_f);
    }
    let matrix = CsrMatrix::from_parts(n_fine, mesh.n_vertices(), indptr, indices, data)?;
    Ok((
        fine,
        Prolongation {
            coarse_level: mesh.level,
            fine_level: mesh.level + 1,
            matrix,
        },
    ))
}

/// Transfers a nodal function one level up the hierarchy.  The result
/// represents the same piecewise-linear function on the finer mesh.
pub fn prolongate(p: &Prolongation, u: &NodalFunction) -> Result<NodalFunction> {
    if u.level != p.coarse_level {
        return Err(Error::LevelMismatch {
            expected: p.coarse_level,
            got: u.level,
        });
    }
    if u.len() != p.n_coarse() {
        return Err(Error::DimensionMismatch {
            expected: p.n_coarse(),
            got: u.len(),
        });
    }
    Ok(NodalFunction::new(p.fine_level, p.apply(&u.values)))
}

/// A nested family of meshes, level 1 (coarsest) through `n_levels`.
#[derive(Debug, Clone)]
pub struct LevelHierarchy {
    meshes: Vec<Arc<SimplexMesh>>,
    prolongations: Vec<Prolongation>,
}

impl LevelHierarchy {
    pub fn n_levels(&self) -> usize {
        self.meshes.len()
    }

    /// Mesh at 1-based `level`.
    pub fn mesh(&self, level: usize) -> &Arc<SimplexMesh> {
        &self.meshes[level - 1]
    }

    pub fn finest(&self) -> &Arc<SimplexMesh> {
        self.meshes.last().unwrap()
    }

    /// Interpolation from `coarse_level` to `coarse_level + 1`.
    pub fn prolongation(&self, coarse_level: usize) -> &Prolongation {
        &self.prolongations[coarse_level - 1]
    }

    /// Extends the hierarchy by one finer level.
    pub fn push_level(&mut self) -> Result<()> {
        let (fine, p) = refine_regular(self.meshes.last().unwrap())?;
        self.meshes.push(Arc::new(fine));
        self.prolongations.push(p);
        Ok(())
    }

    /// Carries a nodal function from its own level up to `target_level` by
    /// composing prolongations; exact because the spaces are nested.
    pub fn prolongate_to(&self, u: &NodalFunction, target_level: usize) -> Result<NodalFunction> {
        if u.level > target_level || target_level > self.n_levels() {
            return Err(Error::LevelMismatch {
                expected: target_level,
                got: u.level,
            });
        }
        let mut cur = u.clone();
        while cur.level < target_level {
            cur = prolongate(self.prolongation(cur.level), &cur)?;
        }
        Ok(cur)
    }
}

/// Builds `n_levels` nested meshes starting from `cells_per_axis` sub-boxes
/// on the coarsest level.
pub fn build_hierarchy(
    domain: &BoxDomain,
    cells_per_axis: usize,
    n_levels: usize,
) -> Result<LevelHierarchy> {
    if n_levels == 0 {
        return Err(Error::InvalidArgument("n_levels must be at least 1".into()));
    }
    let mut hierarchy = LevelHierarchy {
        meshes: vec![Arc::new(build_initial_mesh(domain, cells_per_axis)?)],
        prolongations: Vec::new(),
    };
    for _ in 1..n_levels {
        hierarchy.push_level()?;
    }
    Ok(hierarchy)
}

/// Writes the mesh (and optional per-vertex scalar fields) as a legacy
/// ASCII VTK unstructured grid: `POINTS`, `CELLS`, `CELL_TYPES`, and one
/// `SCALARS` section per named field.
pub fn write_vtk<W: IoWrite>(
    mesh: &SimplexMesh,
    point_data: &[(&str, &[f64])],
    out: &mut W,
) -> Result<()> {
    let n = mesh.n_vertices();
    let m = mesh.n_cells();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "simplicial mesh, level {}", mesh.level)?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for i in 0..n {
        let x = mesh.vertex(i);
        let mut coords = [0.0f64; 3];
        coords[..mesh.dim].copy_from_slice(x);
        writeln!(out, "{} {} {}", coords[0], coords[1], coords[2])?;
    }
    let per_cell = mesh.dim + 1;
    writeln!(out, "CELLS {m} {}", m * (per_cell + 1))?;
    for c in 0..m {
        write!(out, "{per_cell}")?;
        for &v in mesh.cell(c) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {m}")?;
    let cell_type = match mesh.dim {
        1 => 3,  // VTK_LINE
        2 => 5,  // VTK_TRIANGLE
        _ => 10, // VTK_TETRA
    };
    for _ in 0..m {
        writeln!(out, "{cell_type}")?;
    }
    if !point_data.is_empty() {
        writeln!(out, "POINT_DATA {n}")?;
        for (name, values) in point_data {
            if values.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: values.len(),
                });
            }
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

/// [`write_vtk`] to a file path.
pub fn write_vtk_file(
    mesh: &SimplexMesh,
    point_data: &[(&str, &[f64])],
    path: &std::path::Path,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_vtk(mesh, point_data, &mut buf)?;
    Ok(())
}
