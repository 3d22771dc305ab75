//! Sparse assembly buffers and the direct solver used by every discrete system.
//!
//! Matrices are accumulated as triplets in a deterministic order, compressed to
//! column storage, and factorized with a supernodal LU with partial pivoting.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par};

use crate::error::{Error, Result};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker count used by assembly loops and factorizations.
///
/// One thread (the default) gives bitwise-reproducible results.
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Maps `f` over consecutive index ranges of length `chunk` covering `0..n`
/// and returns the results in range order, on `threads()` workers.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..n.div_ceil(chunk.max(1)))
        .map(|k| k * chunk..((k + 1) * chunk).min(n))
        .collect();
    let nt = threads();
    if nt == 1 || ranges.len() < 2 {
        return ranges.into_iter().map(f).collect();
    }
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(nt).build() {
        Ok(pool) => pool.install(|| ranges.into_par_iter().map(&f).collect()),
        Err(_) => ranges.into_iter().map(f).collect(),
    }
}

fn par() -> Par {
    match threads() {
        1 => Par::Seq,
        n => Par::rayon(n),
    }
}

/// Sparse matrix under construction.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        Self::rect(n, n)
    }

    pub fn rect(nrows: usize, ncols: usize) -> Self {
        Self {
            n: nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            ncols: n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.ncols);
        self.entries.push((row, col, val));
    }

    pub fn extend(&mut self, other: TripletMatrix) {
        self.entries.extend(other.entries);
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Compresses to CSR-like row lists with duplicates summed.
    pub fn compress(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n + 1];
        for &(r, _, _) in &self.entries {
            counts[r + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        let mut next = counts.clone();
        for &(r, c, v) in &self.entries {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut out_cols = Vec::with_capacity(cols.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        for r in 0..self.n {
            let mut row: Vec<(usize, f64)> = (counts[r]..counts[r + 1])
                .map(|k| (cols[k], vals[k]))
                .collect();
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr[r + 1] = out_cols.len();
        }
        CsrMatrix {
            n: self.n,
            ncols: self.ncols,
            row_ptr,
            cols: out_cols,
            vals: out_vals,
        }
    }
}

/// Compressed sparse row matrix with sorted, unique column indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Number of rows.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.n == self.ncols
    }

    /// Nonzeros as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let s = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match s.binary_search(&c) {
            Ok(k) => self.vals[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Row-wise sums of |a_rc x_c|; the magnitude of the terms behind each residual entry.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| (v * x[c]).abs()).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// True when the nonzero pattern equals the pattern of the transpose.
    pub fn pattern_is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.n).all(|r| {
            self.row(r).all(|(c, _)| {
                let s = &self.cols[self.row_ptr[c]..self.row_ptr[c + 1]];
                s.binary_search(&r).is_ok()
            })
        })
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n).map(|r| self.row_nnz(r)).max().unwrap_or(0)
    }

    fn to_faer(&self, row_scale: &[f64], col_scale: &[f64]) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                trip.push(Triplet::new(r, c, row_scale[r] * v * col_scale[c]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

/// LU factorization of an equilibrated matrix `D_r A D_c`.
pub struct Factorization {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
    symbolic: SymbolicLu<usize>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("dim", &self.matrix.dim())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl Factorization {
    /// Factorizes `a` after scaling rows and columns by the given factors.
    ///
    /// Passing `None` applies an infinity-norm row equilibration.
    pub fn new(a: CsrMatrix, row_scale: Option<Vec<f64>>, col_scale: Option<Vec<f64>>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Factorization(format!("matrix is {}x{}, not square", a.dim(), a.ncols())));
        }
        let n = a.dim();
        let col_scale = col_scale.unwrap_or_else(|| vec![1.0; n]);
        let row_scale = match row_scale {
            Some(s) => s,
            None => (0..n)
                .map(|r| {
                    let m = a.row(r).map(|(c, v)| (v * col_scale[c]).abs()).fold(0.0, f64::max);
                    if m > 0.0 {
                        1.0 / m
                    } else {
                        1.0
                    }
                })
                .collect(),
        };
        let scaled = a.to_faer(&row_scale, &col_scale)?;
        let symbolic = SymbolicLu::try_new(scaled.symbolic())
            .map_err(|e| Error::Factorization(format!("symbolic analysis: {e:?}")))?;
        faer::set_global_parallelism(par());
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), scaled.as_ref())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            matrix: a,
            lu,
            symbolic,
            row_scale,
            col_scale,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Refactorizes a matrix with the same pattern and scaling.
    pub fn refactor(&mut self, a: CsrMatrix) -> Result<()> {
        let scaled = a.to_faer(&self.row_scale, &self.col_scale)?;
        faer::set_global_parallelism(par());
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), scaled.as_ref())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        self.matrix = a;
        Ok(())
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i] * self.row_scale[i]);
        self.lu.solve_in_place(b.as_mut());
        (0..n).map(|i| b[(i, 0)] * self.col_scale[i]).collect()
    }

    /// Solves `A x = rhs` with iterative refinement.
    ///
    /// Fails when the result is not finite, which is how a numerically singular
    /// pivot shows up.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.raw_solve(rhs);
        for _ in 0..2 {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = self.raw_solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Factorization(format!(
                "non-finite solution entry at unknown {i} (singular pivot)"
            )));
        }
        Ok(x)
    }

    /// Relative residual `||b - A x|| / (|| |A| |x| || + ||b||)`.
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        relative_residual(&self.matrix, x, rhs)
    }
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = norm(&rhs.iter().zip(&ax).map(|(b, v)| b - v).collect::<Vec<_>>());
    let scale = norm(&a.abs_matvec(x)) + norm(rhs);
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let mut t = TripletMatrix::new(2);
        t.push(0, 1, 1.0);
        t.push(0, 0, 2.0);
        t.push(0, 1, 3.0);
        t.push(1, 0, -1.0);
        let a = t.compress();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.row(0).map(|e| e.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn solves_saddle_point_with_zero_diagonal() {
        // [[2, 1], [1, 0]] x = [3, 1] -> x = [1, 1]
        let mut t = TripletMatrix::new(2);
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        let f = Factorization::new(t.compress(), None, None).unwrap();
        let x = f.solve(&[3.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!(f.relative_residual(&x, &[3.0, 1.0]) < 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut t = TripletMatrix::new(2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        let res = Factorization::new(t.compress(), None, None).and_then(|f| f.solve(&[1.0, 2.0]));
        assert!(res.is_err());
    }
}
