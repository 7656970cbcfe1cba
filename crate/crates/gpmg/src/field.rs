//! Piecewise-linear functions given by their vertex values.

use crate::mesh::SimplexMesh;

/// A P1 finite-element function on one mesh level: one value per vertex,
/// in mesh vertex order.  Functions in the homogeneous Dirichlet space
/// carry exact zeros at boundary vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFunction {
    pub level: usize,
    pub values: Vec<f64>,
}

impl NodalFunction {
    pub fn new(level: usize, values: Vec<f64>) -> Self {
        NodalFunction { level, values }
    }

    pub fn zeros(level: usize, n_vertices: usize) -> Self {
        NodalFunction {
            level,
            values: vec![0.0; n_vertices],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a barycentric point of cell `cell`.
    pub fn eval_in_cell(&self, mesh: &SimplexMesh, cell: usize, bary: &[f64]) -> f64 {
        mesh.cell(cell)
            .iter()
            .zip(bary)
            .map(|(&v, &b)| b * self.values[v as usize])
            .sum()
    }

    /// True when every boundary vertex carries an exact zero.
    pub fn vanishes_on_boundary(&self, mesh: &SimplexMesh) -> bool {
        (0..self.len()).all(|v| !mesh.is_boundary_vertex(v) || self.values[v] == 0.0)
    }
}
