//! Minimal compressed-sparse-row matrices for form assembly.
//!
//! Assembly accumulates `(row, col, value)` triplets in deterministic loop
//! order; `CsrMatrix::from_triplets` sorts them stably and sums duplicates,
//! so repeated runs produce bit-identical matrices.  The product and
//! transpose routines keep column indices sorted within every row, which
//! keeps downstream arithmetic deterministic as well.

/// A CSR matrix over `f64` with sorted, duplicate-free column indices per row.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    /// Number of rows.
    pub nrows: usize,
    /// Number of columns.
    pub ncols: usize,
    /// Row start offsets into `col_idx` / `values` (length `nrows + 1`).
    pub row_ptr: Vec<usize>,
    /// Column indices, sorted within each row.
    pub col_idx: Vec<usize>,
    /// Stored values.
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from triplets, summing duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
        }
        // Stable sort keeps duplicate summation order deterministic.
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            if prev == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                prev = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    /// All-zero matrix of the given shape.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// Transpose (column indices stay sorted).
    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut row_ptr = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut cursor = counts;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let pos = cursor[c];
                cursor[c] += 1;
                col_idx[pos] = r;
                values[pos] = v;
            }
        }
        row_ptr.truncate(self.ncols + 1);
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut accum = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if accum[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    accum[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                col_idx.push(c);
                values.push(accum[c]);
                accum[c] = 0.0;
            }
            row_ptr[r + 1] = col_idx.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: other.ncols, row_ptr, col_idx, values }
    }

    /// Linear combination `alpha * self + beta * other` (equal shapes).
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ca, va)), Some((cb, vb))) => {
                        if ca == cb {
                            col_idx.push(ca);
                            values.push(alpha * va + beta * vb);
                            a.next();
                            b.next();
                        } else if ca < cb {
                            col_idx.push(ca);
                            values.push(alpha * va);
                            a.next();
                        } else {
                            col_idx.push(cb);
                            values.push(beta * vb);
                            b.next();
                        }
                    }
                    (Some((ca, va)), None) => {
                        col_idx.push(ca);
                        values.push(alpha * va);
                        a.next();
                    }
                    (None, Some((cb, vb))) => {
                        col_idx.push(cb);
                        values.push(beta * vb);
                        b.next();
                    }
                    (None, None) => break,
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }

    /// Largest absolute deviation from symmetry, `max |A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols, "asymmetry check needs a square matrix");
        self.add_scaled(1.0, &self.transpose(), -1.0)
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Entry accessor for tests (O(row nnz)).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    /// Dense copy, for comparisons on small problems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut out = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[(r, c)] = v;
            }
        }
        out
    }

    /// Iterator over all stored `(row, col, value)` entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_triplets(
        rng: &mut impl Rng,
        nrows: usize,
        ncols: usize,
        n: usize,
    ) -> Vec<(usize, usize, f64)> {
        (0..n)
            .map(|_| {
                (rng.gen_range(0..nrows), rng.gen_range(0..ncols), rng.gen_range(-2.0..2.0))
            })
            .collect()
    }

    fn dense_of(triplets: &[(usize, usize, f64)], nrows: usize, ncols: usize) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(nrows, ncols);
        for &(r, c, v) in triplets {
            d[(r, c)] += v;
        }
        d
    }

    #[test]
    fn triplets_round_trip_with_duplicates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let t = random_triplets(&mut rng, 7, 5, 40);
            let m = CsrMatrix::from_triplets(7, 5, &t);
            assert_eq!((m.to_dense() - dense_of(&t, 7, 5)).abs().max(), 0.0);
            // Columns sorted and unique within each row.
            for r in 0..7 {
                let cols: Vec<usize> = m.row(r).map(|(c, _)| c).collect();
                for w in cols.windows(2) {
                    assert!(w[0] < w[1]);
                }
            }
        }
    }

    #[test]
    fn matvec_transpose_and_product_match_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let ta = random_triplets(&mut rng, 6, 8, 25);
            let tb = random_triplets(&mut rng, 8, 4, 25);
            let a = CsrMatrix::from_triplets(6, 8, &ta);
            let b = CsrMatrix::from_triplets(8, 4, &tb);
            let (da, db) = (dense_of(&ta, 6, 8), dense_of(&tb, 8, 4));

            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = a.matvec(&x);
            let yd = &da * nalgebra::DVector::from_column_slice(&x);
            for i in 0..6 {
                assert!((y[i] - yd[i]).abs() <= 1e-13);
            }

            assert!(((a.transpose().to_dense()) - da.transpose()).abs().max() <= 1e-15);
            assert!(((a.matmul(&b)).to_dense() - da * db).abs().max() <= 1e-13);
        }
    }

    #[test]
    fn add_scaled_and_asymmetry() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ta = random_triplets(&mut rng, 5, 5, 15);
        let tb = random_triplets(&mut rng, 5, 5, 15);
        let a = CsrMatrix::from_triplets(5, 5, &ta);
        let b = CsrMatrix::from_triplets(5, 5, &tb);
        let combo = a.add_scaled(2.0, &b, -0.5);
        let dense = 2.0 * dense_of(&ta, 5, 5) - 0.5 * dense_of(&tb, 5, 5);
        assert!((combo.to_dense() - &dense).abs().max() <= 1e-14);

        let sym = a.add_scaled(1.0, &a.transpose(), 1.0);
        assert!(sym.max_asymmetry() <= 1e-15);
        let expected_asym = (dense_of(&ta, 5, 5) - dense_of(&ta, 5, 5).transpose()).abs().max();
        assert!((a.max_asymmetry() - expected_asym).abs() <= 1e-15);
    }

    #[test]
    fn zero_matrix_behaves() {
        let z = CsrMatrix::zeros(3, 4);
        assert_eq!(z.nnz(), 0);
        assert_eq!(z.matvec(&[1.0; 4]), vec![0.0; 3]);
        assert_eq!(z.get(1, 2), 0.0);
    }
}
