//! Compressed sparse row matrix used for the multilevel operators.

use crate::par;
use byteorder::{LittleEndian, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMat {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRowMat {
    /// Build from per-row (column, value) pairs; columns must be sorted
    /// strictly increasing within each row.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                debug_assert!(c < ncols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
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

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// y = A x.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "sparse matvec dimension mismatch");
        let mut y = vec![0.0f64; self.nrows];
        let xs = x.as_slice();
        par::for_each_chunk_mut(&mut y, 256, |b, block| {
            let base = b * 256;
            for (k, out) in block.iter_mut().enumerate() {
                let (cols, vals) = self.row(base + k);
                let mut acc = 0.0;
                for (c, v) in cols.iter().zip(vals) {
                    acc += v * xs[*c];
                }
                *out = acc;
            }
        });
        DVector::from_vec(y)
    }

    /// Explicit transpose (CSR of A^T), with columns sorted.
    pub fn transpose(&self) -> SparseRowMat {
        let mut counts = vec![0usize; self.ncols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        let mut row_ptr = vec![0usize; self.ncols + 1];
        for i in 0..self.ncols {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut next = row_ptr.clone();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let slot = next[*c];
                col_idx[slot] = r;
                values[slot] = *v;
                next[*c] += 1;
            }
        }
        SparseRowMat {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    /// Binary triplet export: magic "MLKW", u32 version, u64 rows, u64 cols,
    /// u64 nnz, then nnz records of (u64 row, u64 col, f64 value), all
    /// little-endian.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"MLKW")?;
        out.write_u32::<LittleEndian>(1)?;
        out.write_u64::<LittleEndian>(self.nrows as u64)?;
        out.write_u64::<LittleEndian>(self.ncols as u64)?;
        out.write_u64::<LittleEndian>(self.nnz() as u64)?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                out.write_u64::<LittleEndian>(i as u64)?;
                out.write_u64::<LittleEndian>(*c as u64)?;
                out.write_f64::<LittleEndian>(*v)?;
            }
        }
        Ok(())
    }
}
