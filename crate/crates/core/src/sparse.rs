//! Compressed sparse row operators with deterministic triplet assembly.
//!
//! Duplicate triplets are summed in insertion order after a stable sort, so
//! the assembled values do not depend on thread scheduling as long as the
//! triplet list itself is produced in a fixed order.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Names the unknown block a row or column range belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockLabel {
    /// Full RT0 flux space (all facets of all subdomains).
    Flux,
    /// Interior (non-trace) fluxes, the `u0` block.
    FluxInterior,
    /// Trace fluxes on one interface.
    Trace,
    Mortar,
    Pressure,
    /// The whole saddle-point system.
    System,
}

#[derive(Clone, Debug)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pub domain: BlockLabel,
    pub codomain: BlockLabel,
}

impl SparseOperator {
    /// Builds a CSR operator from `(row, col, value)` triplets. Duplicates are
    /// summed and exact zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        domain: BlockLabel,
        codomain: BlockLabel,
    ) -> Self {
        for &(r, c, _) in &triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds {nrows}x{ncols}");
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut i = 0;
        while i < triplets.len() {
            let (r, c, mut v) = triplets[i];
            i += 1;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                v += triplets[i].2;
                i += 1;
            }
            if v != 0.0 {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator { nrows, ncols, row_ptr, col_idx, values, domain, codomain }
    }

    pub fn zeros(nrows: usize, ncols: usize, domain: BlockLabel, codomain: BlockLabel) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new(), domain, codomain)
    }

    pub fn identity(n: usize, label: BlockLabel) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect(), label, label)
    }

    pub fn diagonal(diag: &[f64], label: BlockLabel) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(),
            label,
            label,
        )
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, triplets, self.codomain, self.domain)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        if s == 0.0 {
            return Self::zeros(self.nrows, self.ncols, self.domain, self.codomain);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let triplets = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.nrows, self.ncols, triplets, self.domain, self.codomain)
    }

    /// Sparse product `self * rhs` (row-wise Gustavson with a dense
    /// accumulator; column order within a row is sorted on output).
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "matmul dimension mismatch");
        let mut acc = vec![0.0; rhs.ncols];
        let mut marker = vec![usize::MAX; rhs.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                triplets.push((r, c, acc[c]));
            }
        }
        Self::from_triplets(self.nrows, rhs.ncols, triplets, rhs.domain, self.codomain)
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - self.get(c, r)).abs());
        }
        worst
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_row_empty(&self, r: usize) -> bool {
        self.row_ptr[r] == self.row_ptr[r + 1]
    }

    pub fn to_faer(&self) -> Result<faer::sparse::SparseColMat<usize, f64>> {
        let triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(r, c, v)| faer::sparse::Triplet::new(r, c, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::Solver(format!("sparse matrix creation failed: {e:?}")))
    }

    /// MatrixMarket coordinate (real general) text.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        s
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_matrix_market().as_bytes())?;
        Ok(())
    }
}

/// Stacks operators into a block matrix. `blocks[i][j]` may be `None` for a
/// zero block; row and column sizes are taken from `row_sizes`/`col_sizes`.
pub fn block_matrix(
    blocks: &[Vec<Option<&SparseOperator>>],
    row_sizes: &[usize],
    col_sizes: &[usize],
) -> SparseOperator {
    let row_off: Vec<usize> = offsets(row_sizes);
    let col_off: Vec<usize> = offsets(col_sizes);
    let mut triplets = Vec::new();
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                assert_eq!(b.nrows(), row_sizes[bi], "block ({bi},{bj}) row size");
                assert_eq!(b.ncols(), col_sizes[bj], "block ({bi},{bj}) col size");
                triplets.extend(b.triplets().map(|(r, c, v)| (r + row_off[bi], c + col_off[bj], v)));
            }
        }
    }
    SparseOperator::from_triplets(
        *row_off.last().unwrap(),
        *col_off.last().unwrap(),
        triplets,
        BlockLabel::System,
        BlockLabel::System,
    )
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_summed_and_zeros_dropped() {
        let a = SparseOperator::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0), (0, 1, 1.0), (0, 1, -1.0)],
            BlockLabel::Flux,
            BlockLabel::Flux,
        );
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn matrix_market_header() {
        let a = SparseOperator::identity(2, BlockLabel::Pressure);
        let mm = a.to_matrix_market();
        assert!(mm.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n"));
    }

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let m = b[0].len();
        let k = b.len();
        (0..n)
            .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
            .collect()
    }

    proptest! {
        #[test]
        fn matmul_and_transpose_match_dense(
            ta in proptest::collection::vec((0usize..4, 0usize..3, -3i32..4), 0..12),
            tb in proptest::collection::vec((0usize..3, 0usize..5, -3i32..4), 0..12),
        ) {
            let a = SparseOperator::from_triplets(4, 3, ta.iter().map(|&(r,c,v)| (r,c,v as f64)).collect(), BlockLabel::Flux, BlockLabel::Flux);
            let b = SparseOperator::from_triplets(3, 5, tb.iter().map(|&(r,c,v)| (r,c,v as f64)).collect(), BlockLabel::Flux, BlockLabel::Flux);
            let prod = a.matmul(&b).to_dense();
            let expect = dense_mul(&a.to_dense(), &b.to_dense());
            prop_assert_eq!(prod, expect);
            let at = a.transpose().to_dense();
            for i in 0..4 { for j in 0..3 { prop_assert_eq!(at[j][i], a.get(i, j)); } }
        }
    }
}
