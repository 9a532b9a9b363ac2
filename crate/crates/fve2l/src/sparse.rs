//! Compressed sparse row storage.

use faer::sparse::{SparseColMat, Triplet};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|i| (cols[i], vals[i])));
            // Stable sort keeps the summation order of duplicates deterministic.
            scratch.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (self.col_idx[i], self.values[i]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `b - A x` with each row accumulated in doubled working precision.
    pub fn residual_compensated(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                let (mut s, mut c) = (b[r], 0.0);
                for (j, v) in self.row(r) {
                    let p = -v * x[j];
                    let e = (-v).mul_add(x[j], -p);
                    let t = s + p;
                    let z = t - s;
                    c += (s - (t - z)) + (p - z) + e;
                    s = t;
                }
                s + c
            })
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate().take(self.nrows) {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v))).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `(A + A^T) / 2`.
    pub fn symmetric_part(&self) -> CsrMatrix {
        let mut t: Vec<_> = Vec::with_capacity(2 * self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((r, c, 0.5 * v));
                t.push((c, r, 0.5 * v));
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut pos = vec![usize::MAX; self.ncols];
        for (i, &k) in keep.iter().enumerate() {
            pos[k] = i;
        }
        let mut t = Vec::new();
        for (i, &r) in keep.iter().enumerate() {
            for (c, v) in self.row(r) {
                if pos[c] != usize::MAX {
                    t.push((i, pos[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), keep.len(), &t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let t: Vec<_> = (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| Triplet::new(r, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t).expect("valid triplets")
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        writeln!(s, "%%MatrixMarket matrix coordinate real general").unwrap();
        writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz()).unwrap();
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v).unwrap();
            }
        }
        s
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)]);
        assert_eq!(m.row_ptr, vec![0, 1, 3]);
        assert_eq!(m.col_idx, vec![1, 0, 2]);
        assert_eq!(m.values, vec![2.0, 3.0, 5.0]);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![2.0, 8.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 1.0]), vec![3.0, 2.0, 5.0]);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn matrix_market_header() {
        let s = CsrMatrix::identity(2).to_matrix_market();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("%%MatrixMarket matrix coordinate real general"));
        assert_eq!(lines.next(), Some("2 2 2"));
    }
}
