//! Legacy ASCII VTK export of a nodal field on a simplex mesh.
//!
//! One file per level, unstructured grid with the eigenfunction as point
//! data.  Plain text so tests and quick looks need no binary reader.

use std::io::Write;
use std::path::Path;

use gpmg::{NodalFunction, SimplexMesh};

/// VTK cell type ids: line, triangle, tetrahedron.
fn cell_type(dim: usize) -> u8 {
    match dim {
        1 => 3,
        2 => 5,
        _ => 10,
    }
}

pub fn write_vtk(mesh: &SimplexMesh, u: &NodalFunction, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "ground state level {}", u.level)?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;

    let d = mesh.dim();
    writeln!(f, "POINTS {} double", mesh.n_vertices())?;
    for i in 0..mesh.n_vertices() {
        let x = mesh.vertex(i);
        // Legacy VTK points are always three components.
        let mut xyz = [0.0; 3];
        xyz[..d].copy_from_slice(x);
        writeln!(f, "{:.9e} {:.9e} {:.9e}", xyz[0], xyz[1], xyz[2])?;
    }

    let per_cell = d + 1;
    writeln!(
        f,
        "CELLS {} {}",
        mesh.n_cells(),
        mesh.n_cells() * (per_cell + 1)
    )?;
    for c in 0..mesh.n_cells() {
        write!(f, "{per_cell}")?;
        for v in mesh.cell(c) {
            write!(f, " {v}")?;
        }
        writeln!(f)?;
    }
    writeln!(f, "CELL_TYPES {}", mesh.n_cells())?;
    for _ in 0..mesh.n_cells() {
        writeln!(f, "{}", cell_type(d))?;
    }

    writeln!(f, "POINT_DATA {}", mesh.n_vertices())?;
    writeln!(f, "SCALARS u double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for v in &u.values {
        writeln!(f, "{v:.9e}")?;
    }
    f.flush()
}
