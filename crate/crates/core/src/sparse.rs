//! Compressed sparse row storage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Real-valued sparse matrix in CSR layout. Column indices within a row are
/// strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate positions are rejected.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "value",
                    reason: format!("non-finite entry at ({r}, {c})"),
                });
            }
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::InvalidParameter {
                name: "triplets",
                reason: format!("duplicate entry ({}, {})", w[0].0, w[0].1),
            });
        }
        let mut indptr = vec![0usize; rows + 1];
        for &(r, _, _) in &entries {
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let indices = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
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

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        if r >= self.rows {
            return None;
        }
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).ok().map(|p| vals[p])
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut indptr = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            indptr[c + 1] += 1;
        }
        for c in 0..self.cols {
            indptr[c + 1] += indptr[c];
        }
        let mut next = indptr.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows are visited in order, so each transposed row stays sorted
        for (r, c, v) in self.iter() {
            let slot = next[c];
            indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }
}

/// Binary user-item matrix. Every stored entry is 1; its support is the
/// observation indicator used by the masked objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBinaryMatrix {
    inner: CsrMatrix,
}

impl SparseBinaryMatrix {
    /// Builds the matrix from positions; repeated positions collapse to one.
    pub fn from_positions<I>(rows: usize, cols: usize, positions: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut pos: Vec<(usize, usize)> = positions.into_iter().collect();
        pos.sort_unstable();
        pos.dedup();
        let inner =
            CsrMatrix::from_triplets(rows, cols, pos.into_iter().map(|(r, c)| (r, c, 1.0)))?;
        Ok(SparseBinaryMatrix { inner })
    }

    pub fn rows(&self) -> usize {
        self.inner.rows
    }

    pub fn cols(&self) -> usize {
        self.inner.cols
    }

    pub fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// Sorted item indices stored in row `r`.
    pub fn row(&self, r: usize) -> &[usize] {
        self.inner.row(r).0
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.inner.get(r, c).is_some()
    }

    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inner.iter().map(|(r, c, _)| (r, c))
    }

    pub fn as_csr(&self) -> &CsrMatrix {
        &self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(CsrMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, [(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn transpose_matches_get() {
        let m =
            CsrMatrix::from_triplets(3, 4, [(2, 1, 5.0), (0, 3, 1.5), (0, 1, -2.0), (1, 0, 7.0)])
                .unwrap();
        let t = m.transpose();
        assert_eq!((t.rows(), t.cols()), (4, 3));
        for (r, c, v) in m.iter() {
            assert_eq!(t.get(c, r), Some(v));
        }
        assert_eq!(t.nnz(), m.nnz());
        assert_eq!(t.row(1).0, &[0, 2]);
    }

    #[test]
    fn binary_collapses_repeats() {
        let b = SparseBinaryMatrix::from_positions(2, 2, [(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(b.nnz(), 2);
        assert!(b.contains(0, 1));
        assert!(!b.contains(0, 0));
        assert!(b.as_csr().iter().all(|(_, _, v)| v == 1.0));
    }
}
