//! Symmetric sparse storage for scalar and block matrices.
//!
//! Only the upper triangle (including the diagonal) is stored, one entry per
//! unordered pair; the lower triangle is mirrored on access. A mirror index
//! lets callers walk a full logical row in ascending column order, which keeps
//! summation order fixed no matter how the matrix is traversed or how many
//! threads participate.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::scalar::Scalar;

/// Number of row chunks used by the parallel apply. Fixed (rather than tied
/// to the thread count) so reduction order and therefore rounding is stable.
const APPLY_CHUNKS: usize = 64;

/// Sparsity pattern of a symmetric matrix, upper triangle per row.
#[derive(Debug)]
pub struct SymPattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    mirror_ptr: Vec<usize>,
    mirror_cols: Vec<u32>,
    mirror_entry: Vec<usize>,
}

impl SymPattern {
    /// Build from per-row ascending column lists with `cols[i][k] >= i`.
    pub fn from_upper_rows(n: usize, rows: &[Vec<u32>]) -> Arc<SymPattern> {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        let mut cols = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]), "row not ascending");
            debug_assert!(r.iter().all(|&j| j as usize >= i && (j as usize) < n));
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }

        // Mirror: for each logical row j, the stored strict-upper entries (i, j)
        // with i < j, listed in ascending i.
        let mut counts = vec![0usize; n + 1];
        for i in 0..n {
            for e in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[e] as usize;
                if j != i {
                    counts[j + 1] += 1;
                }
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mirror_ptr = counts.clone();
        let total = mirror_ptr[n];
        let mut mirror_cols = vec![0u32; total];
        let mut mirror_entry = vec![0usize; total];
        let mut fill = mirror_ptr.clone();
        // Row-major traversal emits each column's mirror list in ascending i.
        for i in 0..n {
            for e in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[e] as usize;
                if j != i {
                    let slot = fill[j];
                    mirror_cols[slot] = i as u32;
                    mirror_entry[slot] = e;
                    fill[j] += 1;
                }
            }
        }

        Arc::new(SymPattern {
            n,
            row_ptr,
            cols,
            mirror_ptr,
            mirror_cols,
            mirror_entry,
        })
    }

    /// Dense pattern on `n` nodes (every unordered pair present).
    pub fn dense(n: usize) -> Arc<SymPattern> {
        let rows: Vec<Vec<u32>> = (0..n).map(|i| (i as u32..n as u32).collect()).collect();
        Self::from_upper_rows(n, &rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored (upper-triangle) entry count.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Upper part of row `i`: ascending columns `j >= i` with entry indices.
    pub fn row_upper(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        r.map(move |e| (self.cols[e] as usize, e))
    }

    /// Mirrored lower part of row `i`: ascending columns `j < i`, with the
    /// index of the stored `(j, i)` entry.
    pub fn row_mirror(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.mirror_ptr[i]..self.mirror_ptr[i + 1];
        r.map(move |m| (self.mirror_cols[m] as usize, self.mirror_entry[m]))
    }

    /// Stored entry index for unordered pair `(i, j)`, if present.
    pub fn entry(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let row = &self.cols[self.row_ptr[a]..self.row_ptr[a + 1]];
        row.binary_search(&(b as u32))
            .ok()
            .map(|k| self.row_ptr[a] + k)
    }

    fn chunk_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let per = self.n.div_ceil(APPLY_CHUNKS).max(1);
        (0..self.n)
            .step_by(per)
            .map(|s| s..(s + per).min(self.n))
            .collect()
    }
}

/// Symmetric scalar matrix on a shared pattern.
#[derive(Debug, Clone)]
pub struct SymMatrix<T> {
    pub pattern: Arc<SymPattern>,
    pub vals: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn new(pattern: Arc<SymPattern>, vals: Vec<T>) -> Self {
        assert_eq!(pattern.nnz(), vals.len());
        SymMatrix { pattern, vals }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern
            .entry(i, j)
            .map_or_else(T::zero, |e| self.vals[e])
    }

    /// Logical row sums, each accumulated in ascending column order.
    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n())
            .map(|i| {
                let mut s = T::zero();
                for (_, e) in self.pattern.row_mirror(i) {
                    s += self.vals[e];
                }
                for (_, e) in self.pattern.row_upper(i) {
                    s += self.vals[e];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, e) in self.pattern.row_upper(i) {
                m[(i, j)] = self.vals[e];
                m[(j, i)] = self.vals[e];
            }
        }
        m
    }
}

/// Symmetric block matrix: entry `(i, j)` with `i <= j` holds a dense
/// `q x q` block stored row-major; the `(j, i)` block is its transpose.
#[derive(Debug, Clone)]
pub struct SymBlockMatrix<T> {
    pub pattern: Arc<SymPattern>,
    pub q: usize,
    pub blocks: Vec<T>,
}

impl<T: Scalar> SymBlockMatrix<T> {
    /// Diagonal blocks must themselves be symmetric (the format stores each
    /// unordered pair once, so an asymmetric diagonal block has no mirror).
    pub fn new(pattern: Arc<SymPattern>, q: usize, blocks: Vec<T>) -> Self {
        assert_eq!(pattern.nnz() * q * q, blocks.len());
        #[cfg(debug_assertions)]
        for i in 0..pattern.n {
            for e in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                if pattern.cols[e] as usize == i {
                    let b = &blocks[e * q * q..(e + 1) * q * q];
                    for r in 0..q {
                        for c in 0..r {
                            debug_assert!(
                                (b[r * q + c] - b[c * q + r]).abs().as_f64() < 1e-12,
                                "diagonal block {i} not symmetric"
                            );
                        }
                    }
                }
            }
        }
        SymBlockMatrix { pattern, q, blocks }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn dim(&self) -> usize {
        self.pattern.n * self.q
    }

    pub fn block(&self, e: usize) -> &[T] {
        let qq = self.q * self.q;
        &self.blocks[e * qq..(e + 1) * qq]
    }

    /// `y = A v` over the full symmetric matrix.
    ///
    /// Rows are processed in fixed chunks, each into its own accumulator, and
    /// accumulators are reduced in chunk order; results are bit-stable across
    /// thread counts.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let q = self.q;
        let nq = self.dim();
        assert_eq!(v.len(), nq);
        let ranges = self.pattern.chunk_ranges();
        let partials: Vec<Vec<T>> = ranges
            .into_par_iter()
            .map(|rows| {
                let mut acc = vec![T::zero(); nq];
                for i in rows {
                    for (j, e) in self.pattern.row_upper(i) {
                        let b = self.block(e);
                        block_axpy(&mut acc[i * q..(i + 1) * q], b, &v[j * q..(j + 1) * q], q, false);
                        if j != i {
                            block_axpy(&mut acc[j * q..(j + 1) * q], b, &v[i * q..(i + 1) * q], q, true);
                        }
                    }
                }
                acc
            })
            .collect();
        let mut y = vec![T::zero(); nq];
        for acc in partials {
            for (yk, ak) in y.iter_mut().zip(acc) {
                *yk += ak;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let (n, q) = (self.n(), self.q);
        let mut m = DMatrix::zeros(n * q, n * q);
        for i in 0..n {
            for (j, e) in self.pattern.row_upper(i) {
                let b = self.block(e);
                for r in 0..q {
                    for c in 0..q {
                        m[(i * q + r, j * q + c)] = b[r * q + c];
                        if j != i {
                            m[(j * q + c, i * q + r)] = b[r * q + c];
                        }
                    }
                }
            }
        }
        m
    }
}

/// `y += B x` (or `y += B^T x` when `transpose`), `B` row-major `q x q`.
#[inline]
fn block_axpy<T: Scalar>(y: &mut [T], b: &[T], x: &[T], q: usize, transpose: bool) {
    if q == 1 {
        y[0] += b[0] * x[0];
        return;
    }
    if transpose {
        for r in 0..q {
            let mut s = T::zero();
            for c in 0..q {
                s += b[c * q + r] * x[c];
            }
            y[r] += s;
        }
    } else {
        for r in 0..q {
            let mut s = T::zero();
            let row = &b[r * q..(r + 1) * q];
            for c in 0..q {
                s += row[c] * x[c];
            }
            y[r] += s;
        }
    }
}
