//! Compressed sparse row matrices with a fixed pattern.

use std::io::Write;
use std::path::Path;

use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given pattern; each row's column list is sorted and
    /// deduplicated.
    pub fn from_pattern(nrows: usize, ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            indices.extend_from_slice(r);
            indptr.push(indices.len());
        }
        let data = vec![0.0; indices.len()];
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(nrows, ncols, rows);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].binary_search(&j).ok().map(|p| a + p)
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.data[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.data[p])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.data[a..b].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, yi)| {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            *yi = self.indices[a..b]
                .iter()
                .zip(&self.data[a..b])
                .map(|(&j, v)| v * x[j])
                .sum();
        });
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                rows[j].push(i);
            }
        }
        let mut t = Self::from_pattern(self.ncols, self.nrows, rows);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let p = t.position(j, i).expect("transposed pattern");
                t.data[p] = v;
            }
        }
        t
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Submatrix on the given rows and columns; `row_map[i]` / `col_map[j]` is the
    /// new index of old row `i` / column `j`, or `None` to drop it.
    pub fn restrict(&self, row_map: &[Option<usize>], col_map: &[Option<usize>], nrows: usize, ncols: usize) -> Self {
        let mut indptr = vec![0; nrows + 1];
        let mut rows: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); nrows];
        for i in 0..self.nrows {
            let Some(ni) = row_map[i] else { continue };
            for (j, v) in self.row(i) {
                if let Some(nj) = col_map[j] {
                    rows[ni].0.push(nj);
                    rows[ni].1.push(v);
                }
            }
        }
        let mut indices = Vec::with_capacity(self.nnz());
        let mut data = Vec::with_capacity(self.nnz());
        for (r, (cols, vals)) in rows.into_iter().enumerate() {
            let mut order: Vec<usize> = (0..cols.len()).collect();
            order.sort_unstable_by_key(|&k| cols[k]);
            for k in order {
                indices.push(cols[k]);
                data.push(vals[k]);
            }
            indptr[r + 1] = indices.len();
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Lower triangle (including the diagonal) as a faer column matrix.
    pub fn to_faer_lower(&self) -> Result<SparseColMat<usize, f64>> {
        self.to_faer_filtered(|i, j| j <= i)
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        self.to_faer_filtered(|_, _| true)
    }

    fn to_faer_filtered(&self, keep: impl Fn(usize, usize) -> bool) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if keep(i, j) {
                    trip.push(Triplet::new(i, j, v));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| Error::Solver(format!("sparse matrix conversion failed: {e:?}")))
    }

    /// Matrix Market coordinate format (general, real).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_products_and_transpose() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (0, 2, 1.0)]);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![4.0, 3.0]);
        assert_eq!(a.matvec_transpose(&[1.0, 2.0]), vec![1.0, 6.0, 3.0]);
        let t = a.transpose();
        assert_eq!(t.get(2, 0), 3.0);
        assert_eq!(t.transpose(), a);
        let r = a.restrict(&[Some(0), None], &[None, Some(0), Some(1)], 1, 2);
        assert_eq!(r.to_dense(), nalgebra::DMatrix::from_row_slice(1, 2, &[0.0, 3.0]));
    }

    #[test]
    fn matrix_market_header() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, -2.0)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        a.write_matrix_market(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n"));
    }
}
