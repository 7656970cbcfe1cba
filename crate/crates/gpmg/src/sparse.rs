//! Compressed sparse row storage for the assembled operators.
//!
//! Patterns are immutable and shared (`Arc`) so that repeated numeric
//! assemblies over the same mesh reuse one symbolic structure, and so that
//! matrices with identical patterns can be combined entrywise.

use std::sync::Arc;

use crate::error::Error;
use crate::Result;

/// Symbolic structure of a CSR matrix: row pointers and sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists.  Each list is sorted and
    /// deduplicated; indices must be `< cols`.
    pub fn from_rows(cols: usize, mut rows: Vec<Vec<u32>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0usize);
        let mut nnz = 0usize;
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            nnz += row.len();
            indptr.push(nnz);
        }
        let mut indices = Vec::with_capacity(nnz);
        for row in &rows {
            debug_assert!(row.last().is_none_or(|&j| (j as usize) < cols));
            indices.extend_from_slice(row);
        }
        SparsityPattern {
            rows: nrows,
            cols,
            indptr,
            indices,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices of row `i`, ascending.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.indptr[i]..self.indptr[i + 1]
    }

    /// Storage position of entry `(i, j)`, if present.
    pub fn position(&self, i: usize, j: u32) -> Option<usize> {
        let range = self.row_range(i);
        let row = &self.indices[range.clone()];
        row.binary_search(&j).ok().map(|k| range.start + k)
    }
}

/// General sparse matrix in CSR form.  Values live in `data`, aligned with
/// the pattern's `indices`.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        CsrMatrix {
            pattern,
            data: vec![0.0; nnz],
        }
    }

    /// Builds a matrix from triplets.  Duplicates are summed in insertion
    /// order, so repeated assembly of the same triplet stream is bitwise
    /// reproducible.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(u32, u32, f64)]) -> Result<Self> {
        let mut row_lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); rows];
        for &(i, j, v) in triplets {
            if i as usize >= rows || j as usize >= cols {
                return Err(Error::DimensionMismatch {
                    expected: rows.max(cols),
                    got: i.max(j) as usize,
                });
            }
            row_lists[i as usize].push((j, v));
        }
        let mut pattern_rows = Vec::with_capacity(rows);
        let mut values = Vec::with_capacity(rows);
        for mut list in row_lists {
            // Stable sort keeps insertion order within a column, so the
            // running sum below is deterministic.
            list.sort_by_key(|&(j, _)| j);
            let mut cols_row = Vec::with_capacity(list.len());
            let mut vals_row: Vec<f64> = Vec::with_capacity(list.len());
            for (j, v) in list {
                if cols_row.last() == Some(&j) {
                    *vals_row.last_mut().unwrap() += v;
                } else {
                    cols_row.push(j);
                    vals_row.push(v);
                }
            }
            pattern_rows.push(cols_row);
            values.push(vals_row);
        }
        let pattern = SparsityPattern::from_rows(cols, pattern_rows);
        let data = values.into_iter().flatten().collect();
        Ok(CsrMatrix {
            pattern: Arc::new(pattern),
            data,
        })
    }

    /// Builds a matrix from raw CSR arrays.  Column indices must be sorted
    /// and in range within each row.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indices.len() != data.len() || indptr[rows] != indices.len()
        {
            return Err(Error::DimensionMismatch {
                expected: rows + 1,
                got: indptr.len(),
            });
        }
        for i in 0..rows {
            let row = &indices[indptr[i]..indptr[i + 1]];
            if !row.windows(2).all(|w| w[0] < w[1]) || row.iter().any(|&j| j as usize >= cols) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} of CSR input is not sorted and in range"
                )));
            }
        }
        Ok(CsrMatrix {
            pattern: Arc::new(SparsityPattern {
                rows,
                cols,
                indptr,
                indices,
            }),
            data,
        })
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn rows(&self) -> usize {
        self.pattern.rows
    }

    pub fn cols(&self) -> usize {
        self.pattern.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Entries of row `i` as `(column, value)` pairs.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let range = self.pattern.row_range(i);
        self.pattern.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.data[range].iter().copied())
    }

    /// Adds `v` to entry `(i, j)`.  The position must exist in the pattern.
    pub fn add_at(&mut self, i: usize, j: u32, v: f64) {
        let pos = self
            .pattern
            .position(i, j)
            .expect("entry outside sparsity pattern");
        self.data[pos] += v;
    }

    pub fn get(&self, i: usize, j: u32) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.data[p])
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(y.len(), self.rows());
        for i in 0..self.rows() {
            let range = self.pattern.row_range(i);
            let mut acc = 0.0;
            for (jj, &j) in self.pattern.indices[range.clone()].iter().enumerate() {
                acc += self.data[range.start + jj] * x[j as usize];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows()];
        self.matvec(x, &mut y);
        y
    }

    /// `y = Aᵀ x` without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows());
        debug_assert_eq!(y.len(), self.cols());
        y.fill(0.0);
        for i in 0..self.rows() {
            let range = self.pattern.row_range(i);
            let xi = x[i];
            for (jj, &j) in self.pattern.indices[range.clone()].iter().enumerate() {
                y[j as usize] += self.data[range.start + jj] * xi;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let (m, n) = (self.rows(), self.cols());
        let mut counts = vec![0usize; n + 1];
        for &j in &self.pattern.indices {
            counts[j as usize + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut indptr = counts.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..m {
            let range = self.pattern.row_range(i);
            for (jj, &j) in self.pattern.indices[range.clone()].iter().enumerate() {
                let dst = indptr[j as usize];
                indices[dst] = i as u32;
                data[dst] = self.data[range.start + jj];
                indptr[j as usize] += 1;
            }
        }
        for j in (1..=n).rev() {
            indptr[j] = indptr[j - 1];
        }
        indptr[0] = 0;
        CsrMatrix {
            pattern: Arc::new(SparsityPattern {
                rows: n,
                cols: m,
                indptr,
                indices,
            }),
            data,
        }
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: other.rows(),
            });
        }
        let m = self.rows();
        let n = other.cols();
        let mut acc = vec![0.0f64; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut mark = vec![false; n];
        let mut pattern_rows = Vec::with_capacity(m);
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            touched.clear();
            for (k, aik) in self.row_entries(i) {
                for (j, bkj) in other.row_entries(k as usize) {
                    let ju = j as usize;
                    if !mark[ju] {
                        mark[ju] = true;
                        touched.push(j);
                        acc[ju] = 0.0;
                    }
                    acc[ju] += aik * bkj;
                }
            }
            touched.sort_unstable();
            let mut vals_row = Vec::with_capacity(touched.len());
            for &j in &touched {
                vals_row.push(acc[j as usize]);
                mark[j as usize] = false;
            }
            pattern_rows.push(touched.clone());
            values.push(vals_row);
        }
        let pattern = SparsityPattern::from_rows(n, pattern_rows);
        Ok(CsrMatrix {
            pattern: Arc::new(pattern),
            data: values.into_iter().flatten().collect(),
        })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut dense = nalgebra::DMatrix::zeros(self.rows(), self.cols());
        for i in 0..self.rows() {
            for (j, v) in self.row_entries(i) {
                dense[(i, j as usize)] = v;
            }
        }
        dense
    }
}

/// Square symmetric sparse matrix.  Symmetry is enforced structurally: the
/// assembly routines write each off-diagonal value to both triangles from
/// the same computed number, so `A[i,j]` and `A[j,i]` are bitwise equal.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix(CsrMatrix);

impl SparseSymMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        debug_assert_eq!(pattern.rows, pattern.cols);
        SparseSymMatrix(CsrMatrix::zeros(pattern))
    }

    /// Builds from triplets; the triplet stream must already describe a
    /// symmetric matrix (both triangles present).
    pub fn from_triplets(n: usize, triplets: &[(u32, u32, f64)]) -> Result<Self> {
        Ok(SparseSymMatrix(CsrMatrix::from_triplets(n, n, triplets)?))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn nnz(&self) -> usize {
        self.0.nnz()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        self.0.pattern()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.0.data_mut()
    }

    pub fn add_at(&mut self, i: usize, j: u32, v: f64) {
        self.0.add_at(i, j, v);
    }

    /// Adds the symmetric pair `(i,j)` and `(j,i)` from one value.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.0.add_at(i, j as u32, v);
        if i != j {
            self.0.add_at(j, i as u32, v);
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j as u32)
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.0.row_entries(i)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.0.matvec(x, y);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.apply(x)
    }

    /// Quadratic form `xᵀ A y`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n());
        let mut acc = 0.0;
        for i in 0..self.n() {
            let mut row = 0.0;
            for (j, v) in self.0.row_entries(i) {
                row += v * y[j as usize];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    /// `α·self + β·other` for matrices sharing one pattern.
    pub fn linear_combination(
        &self,
        alpha: f64,
        other: &SparseSymMatrix,
        beta: f64,
    ) -> Result<Self> {
        if !Arc::ptr_eq(self.pattern(), other.pattern()) && self.pattern() != other.pattern() {
            return Err(Error::InvalidArgument(
                "linear_combination requires matching sparsity patterns".into(),
            ));
        }
        let mut out = self.clone();
        for (o, (&a, &b)) in out
            .0
            .data
            .iter_mut()
            .zip(self.0.data.iter().zip(other.0.data.iter()))
        {
            *o = alpha * a + beta * b;
        }
        Ok(out)
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn into_csr(self) -> CsrMatrix {
        self.0
    }

    pub fn from_csr_unchecked(csr: CsrMatrix) -> Self {
        debug_assert_eq!(csr.rows(), csr.cols());
        SparseSymMatrix(csr)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.0.to_dense()
    }

    /// Largest absolute symmetry defect; zero for assembled matrices.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n() {
            for (j, v) in self.0.row_entries(i) {
                worst = worst.max((v - self.get(j as usize, i)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        // [ 2 0 1 ]
        // [ 0 3 0 ]
        // [ 1 0 4 ]
        CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 2, 1.0),
                (1, 1, 3.0),
                (2, 0, 1.0),
                (2, 2, 4.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_in_order() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = [1.0, 2.0, 3.0];
        let y = a.apply(&x);
        assert_eq!(y, vec![5.0, 6.0, 13.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let a = sample();
        let att = a.transpose().transpose();
        assert_eq!(a.to_dense(), att.to_dense());
    }

    #[test]
    fn matmul_matches_dense() {
        let a = sample();
        let b =
            CsrMatrix::from_triplets(3, 2, &[(0, 1, 1.0), (1, 0, 2.0), (2, 0, -1.0), (2, 1, 0.5)])
                .unwrap();
        let c = a.matmul(&b).unwrap();
        let dense = a.to_dense() * b.to_dense();
        assert_eq!(c.to_dense(), dense);
    }

    #[test]
    fn quad_form_and_symmetry() {
        let m = SparseSymMatrix::from_triplets(
            2,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)],
        )
        .unwrap();
        assert_eq!(m.symmetry_defect(), 0.0);
        let x = [1.0, 2.0];
        assert_eq!(m.quad_form(&x, &x), 2.0 - 4.0 + 8.0);
    }

    #[test]
    fn rejects_out_of_range_triplets() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }
}
