//! Sparse symmetric positive-definite factorization (up-looking LDL^T).
//!
//! The matrix is supplied as its upper triangle in compressed-column form.
//! Variables are eliminated in natural order; pose chains produce banded
//! normal matrices, so natural order gives no fill-in on the common path.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Accumulates `(row, col, value)` contributions to a symmetric matrix.
///
/// Entries below the diagonal are mirrored into the upper triangle and
/// duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(capacity),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push((c, r, value));
    }

    pub fn build(self) -> UpperCsc {
        // Bucket by column, then sort the short per-column runs by row.
        let mut start = vec![0usize; self.n + 1];
        for &(c, _, _) in &self.entries {
            start[c + 1] += 1;
        }
        for c in 0..self.n {
            start[c + 1] += start[c];
        }
        let mut next = start.clone();
        let mut bucketed = vec![(0usize, 0.0f64); self.entries.len()];
        for (c, r, v) in self.entries {
            bucketed[next[c]] = (r, v);
            next[c] += 1;
        }

        let mut col_ptr = vec![0usize; self.n + 1];
        let mut row_idx = Vec::with_capacity(bucketed.len());
        let mut values: Vec<f64> = Vec::with_capacity(bucketed.len());
        for c in 0..self.n {
            let run = &mut bucketed[start[c]..start[c + 1]];
            run.sort_unstable_by_key(|e| e.0);
            let mut last = None;
            for &(r, v) in run.iter() {
                if last == Some(r) {
                    *values.last_mut().expect("merged entry exists") += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                    last = Some(r);
                }
            }
            col_ptr[c + 1] = row_idx.len();
        }
        UpperCsc {
            n: self.n,
            col_ptr,
            row_idx,
            values,
        }
    }
}

/// Upper triangle of a symmetric matrix, compressed by column with sorted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperCsc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl UpperCsc {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn diagonal(&self, k: usize) -> f64 {
        let range = self.col_ptr[k]..self.col_ptr[k + 1];
        match self.row_idx[range.clone()].binary_search(&k) {
            Ok(off) => self.values[range.start + off],
            Err(_) => 0.0,
        }
    }

    /// Symmetric matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                let v = self.values[p];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }
}

/// `A = L D L^T` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
}

/// Pivots smaller than this fraction of the original diagonal are rejected.
const PIVOT_TOLERANCE: f64 = 1e-13;

impl LdlFactor {
    pub fn factor(a: &UpperCsc) -> Result<Self, FactorError> {
        let n = a.n;
        const NONE: usize = usize::MAX;

        // Symbolic: elimination tree and column counts of L.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut l_nz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    l_nz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + l_nz[k];
        }
        let total = l_ptr[n];
        let mut l_idx = vec![0usize; total];
        let mut l_val = vec![0.0; total];
        let mut d = vec![0.0; n];

        // Numeric: row k of L from a sparse triangular solve along the etree.
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        flag.fill(NONE);
        l_nz.fill(0);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let mut i = a.row_idx[p];
                if i > k {
                    continue;
                }
                y[i] += a.values[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let end = l_ptr[i] + l_nz[i];
                for p in l_ptr[i]..end {
                    y[l_idx[p]] -= l_val[p] * yi;
                }
                let l_ki = yi / d[i];
                dk -= l_ki * yi;
                l_idx[end] = k;
                l_val[end] = l_ki;
                l_nz[i] += 1;
                top += 1;
            }
            let scale = a.diagonal(k).abs();
            if !(dk > PIVOT_TOLERANCE * scale) || !dk.is_finite() {
                return Err(FactorError::NotPositiveDefinite {
                    pivot: k,
                    value: dk,
                });
            }
            d[k] = dk;
        }

        Ok(LdlFactor {
            n,
            l_ptr,
            l_idx,
            l_val,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of strictly-lower nonzeros in `L`.
    pub fn fill(&self) -> usize {
        self.l_val.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<(), FactorError> {
        if x.len() != self.n {
            return Err(FactorError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        for j in 0..self.n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..self.n).rev() {
            let mut xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                xj -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = xj;
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, FactorError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}
