//! Compressed sparse row storage for complex matrices.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, Complex64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Same pattern, values replaced.
    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        CsrMatrix {
            values,
            ..self.clone()
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Position of entry (r, c) in `values`, if stored.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|p| lo + p)
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.position(r, c).map_or(Complex64::new(0.0, 0.0), |p| self.values[p])
    }

    /// `y += alpha A x`.
    pub fn mul_add(&self, x: &[Complex64], alpha: Complex64, y: &mut [Complex64]) {
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            y[r] += alpha * acc;
        }
    }

    pub fn mul(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.nrows];
        self.mul_add(x, Complex64::new(1.0, 0.0), &mut y);
        y
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (r, self.col_idx[p], self.values[p]))
        })
    }

    pub fn conj_transpose(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    /// Largest entry of `A - A^H` in modulus.
    pub fn hermitian_defect(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_faer(&self) -> Result<faer::sparse::SparseColMat<usize, Complex64>> {
        let t: Vec<_> = self
            .triplets()
            .map(|(r, c, v)| faer::sparse::Triplet::new(r, c, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Shape(format!("sparse conversion failed: {e:?}")))
    }

    /// Text dump: a header `# rows cols nnz`, then `row col re im` per line (0-based).
    pub fn dump(&self, out: &mut impl Write) -> Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {:.17e} {:.17e}", v.re, v.im)?;
        }
        w.flush()?;
        Ok(())
    }
}
