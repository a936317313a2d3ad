//! Dense linear-algebra helpers on top of faer: LU with pivot reporting,
//! flop accounting, and the column-pivoted QR / interpolative decomposition
//! used for skeletonization.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Accum, Mat, MatMut, MatRef, Par};
use num_complex::Complex64 as C64;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

#[inline]
pub fn par() -> Par {
    faer::get_global_parallelism()
}

/// `A x` for a dense matrix and a slice.
pub fn matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    let xm = MatRef::from_column_major_slice(x, x.len(), 1);
    let mut y = Mat::<C64>::zeros(a.nrows(), 1);
    matmul(y.as_mut(), Accum::Replace, a, xm, C64::new(1.0, 0.0), par());
    (0..a.nrows()).map(|i| y[(i, 0)]).collect()
}

/// `C = A B` as a new matrix.
pub fn mul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let mut c = Mat::zeros(a.nrows(), b.ncols());
    matmul(c.as_mut(), Accum::Replace, a, b, C64::new(1.0, 0.0), par());
    c
}

/// `C += alpha A B`.
pub fn mul_add(c: MatMut<'_, C64>, a: MatRef<'_, C64>, b: MatRef<'_, C64>, alpha: C64) {
    matmul(c, Accum::Add, a, b, alpha, par());
}

pub fn column(v: &[C64]) -> CMat {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn to_vec(m: MatRef<'_, C64>) -> Vec<C64> {
    assert_eq!(m.ncols(), 1);
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frob(m: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Relative 2-norm distance `‖a − b‖ / ‖b‖`.
pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    num / norm2(b)
}

/// Real floating-point operation counter with analytic per-call formulas.
///
/// Complex gemm of `m×k` by `k×n` is `8mnk` real flops, LU of order `n` is
/// `(8/3)n³`, and a pair of triangular solves with `r` right-hand sides is
/// `8n²r`. The normalized count divides by four, matching the usual
/// convention where a gemm of order `n` costs `2n³` and an LU `(2/3)n³`.
#[derive(Debug, Default)]
pub struct FlopCounter {
    raw: AtomicU64,
}

impl FlopCounter {
    pub fn new() -> FlopCounter {
        FlopCounter::default()
    }

    fn add(&self, v: f64) {
        self.raw.fetch_add(v.round() as u64, Ordering::Relaxed);
    }

    pub fn gemm(&self, m: usize, n: usize, k: usize) {
        self.add(8.0 * m as f64 * n as f64 * k as f64);
    }

    pub fn lu(&self, n: usize) {
        let n = n as f64;
        self.add(8.0 / 3.0 * n * n * n);
    }

    pub fn lu_solve(&self, n: usize, nrhs: usize) {
        self.add(8.0 * (n * n) as f64 * nrhs as f64);
    }

    /// Householder step on a `p × q` trailing block (normalized units `4pq`).
    pub fn householder(&self, p: usize, q: usize) {
        self.add(16.0 * p as f64 * q as f64);
    }

    pub fn raw(&self) -> u64 {
        self.raw.load(Ordering::Relaxed)
    }

    pub fn normalized(&self) -> f64 {
        self.raw() as f64 / 4.0
    }

    pub fn add_raw(&self, v: u64) {
        self.raw.fetch_add(v, Ordering::Relaxed);
    }

    pub fn merge(&self, other: &FlopCounter) {
        self.raw.fetch_add(other.raw(), Ordering::Relaxed);
    }
}

/// Partial-pivot LU with the smallest pivot magnitude retained for
/// conditioning diagnostics.
pub struct Lu {
    inner: faer::linalg::solvers::PartialPivLu<C64>,
    pub min_pivot: f64,
    pub max_pivot: f64,
    n: usize,
}

impl Lu {
    pub fn new(a: MatRef<'_, C64>) -> Lu {
        assert_eq!(a.nrows(), a.ncols());
        let inner = a.partial_piv_lu();
        let u = inner.U();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        for i in 0..a.nrows() {
            let p = u[(i, i)].norm();
            let p = if p.is_finite() { p } else { 0.0 };
            min_pivot = min_pivot.min(p);
            max_pivot = max_pivot.max(p);
        }
        Lu { inner, min_pivot, max_pivot, n: a.nrows() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Ratio of smallest to largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        if self.max_pivot > 0.0 {
            self.min_pivot / self.max_pivot
        } else {
            0.0
        }
    }

    /// Fail with a near-resonance error when the pivot ratio drops below `tol`.
    pub fn check(&self, omega: C64, tol: f64) -> Result<()> {
        if !(self.pivot_ratio() > tol) {
            return Err(Error::NearResonance { omega, pivot: self.min_pivot });
        }
        Ok(())
    }

    pub fn solve(&self, b: MatRef<'_, C64>) -> CMat {
        self.inner.solve(b)
    }

    pub fn solve_in_place(&self, b: MatMut<'_, C64>) {
        self.inner.solve_in_place(b);
    }

    pub fn inverse(&self) -> CMat {
        self.inner.inverse()
    }
}

/// Result of a truncated column-pivoted QR.
#[derive(Clone, Debug)]
pub struct Cpqr {
    /// Column permutation: `perm[j]` is the original column at position `j`.
    pub perm: Vec<usize>,
    /// Upper trapezoidal factor, `rank × ncols` in permuted column order.
    pub r: CMat,
    pub rank: usize,
}

/// Householder QR with column pivoting, stopped after `max_rank` steps or when
/// the next pivot norm falls below `tol` times the first one.
///
/// Pivots are chosen by largest remaining column 2-norm, lowest index on ties.
pub fn cpqr(a: MatRef<'_, C64>, max_rank: usize, tol: f64, flops: Option<&FlopCounter>) -> Cpqr {
    let (m, n) = (a.nrows(), a.ncols());
    let steps = max_rank.min(m).min(n);
    let mut w = a.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| col_norm2(w.as_ref(), j, 0)).collect();
    let mut exact: Vec<f64> = norms.clone();
    let mut first = 0.0;
    let mut rank = 0;

    for j in 0..steps {
        // Pivot choice; `>` keeps the first index among equal norms.
        let mut best = j;
        for c in (j + 1)..n {
            if norms[c] > norms[best] {
                best = c;
            }
        }
        if j == 0 {
            first = norms[best].sqrt();
        }
        let pnorm = norms[best].sqrt();
        if pnorm == 0.0 || pnorm <= tol * first {
            break;
        }
        if best != j {
            swap_cols(w.as_mut(), j, best);
            perm.swap(j, best);
            norms.swap(j, best);
            exact.swap(j, best);
        }

        // Householder vector for column j, rows j..m.
        let alpha = col_norm2(w.as_ref(), j, j).sqrt();
        let x0 = w[(j, j)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let beta = -phase * alpha;
        let mut v = Mat::<C64>::zeros(m - j, 1);
        v[(0, 0)] = x0 - beta;
        for i in (j + 1)..m {
            v[(i - j, 0)] = w[(i, j)];
        }
        let vnorm2: f64 = (0..m - j).map(|i| v[(i, 0)].norm_sqr()).sum();
        w[(j, j)] = beta;
        for i in (j + 1)..m {
            w[(i, j)] = C64::new(0.0, 0.0);
        }
        if vnorm2 > 0.0 && j + 1 < n {
            let tau = 2.0 / vnorm2;
            let mut row = Mat::<C64>::zeros(1, n - j - 1);
            let trail = w.as_ref().submatrix(j, j + 1, m - j, n - j - 1);
            matmul(row.as_mut(), Accum::Replace, v.as_ref().adjoint(), trail, C64::new(1.0, 0.0), Par::Seq);
            let trail = w.as_mut().submatrix_mut(j, j + 1, m - j, n - j - 1);
            matmul(trail, Accum::Add, v.as_ref(), row.as_ref(), C64::new(-tau, 0.0), Par::Seq);
        }
        if let Some(f) = flops {
            f.householder(m - j, n - j);
        }
        rank = j + 1;

        // Downdate remaining column norms; recompute when cancellation bites.
        for c in (j + 1)..n {
            let rjc = w[(j, c)].norm_sqr();
            norms[c] -= rjc;
            if norms[c] <= 1e-10 * exact[c] || norms[c] < 0.0 {
                norms[c] = col_norm2(w.as_ref(), c, j + 1);
                exact[c] = norms[c];
            }
        }
    }

    let r = Mat::from_fn(rank, n, |i, j| if j >= i { w[(i, j)] } else { C64::new(0.0, 0.0) });
    Cpqr { perm, r, rank }
}

fn col_norm2(a: MatRef<'_, C64>, j: usize, from: usize) -> f64 {
    (from..a.nrows()).map(|i| a[(i, j)].norm_sqr()).sum()
}

fn swap_cols(mut a: MatMut<'_, C64>, i: usize, j: usize) {
    for r in 0..a.nrows() {
        let t = a[(r, i)];
        a[(r, i)] = a[(r, j)];
        a[(r, j)] = t;
    }
}

/// Column interpolative decomposition `A ≈ A[:, skel] · proj`.
#[derive(Clone, Debug)]
pub struct InterpDecomp {
    pub skel: Vec<usize>,
    /// `rank × ncols`; columns at `skel` form the identity.
    pub proj: CMat,
}

/// Interpolative decomposition from the leading `k` pivots of a column-pivoted QR.
pub fn interp_decomp(a: MatRef<'_, C64>, k: usize, tol: f64, flops: Option<&FlopCounter>) -> InterpDecomp {
    let n = a.ncols();
    let qr = cpqr(a, k, tol, flops);
    let rank = qr.rank;
    let mut proj = Mat::<C64>::zeros(rank, n);
    if rank > 0 {
        // T = R11^{-1} R12 by back substitution.
        let r11 = qr.r.as_ref().submatrix(0, 0, rank, rank);
        let mut t = qr.r.as_ref().submatrix(0, rank, rank, n - rank).to_owned();
        for c in 0..t.ncols() {
            for i in (0..rank).rev() {
                let mut s = t[(i, c)];
                for l in (i + 1)..rank {
                    s -= r11[(i, l)] * t[(l, c)];
                }
                t[(i, c)] = s / r11[(i, i)];
            }
        }
        for (pos, &col) in qr.perm.iter().enumerate() {
            if pos < rank {
                proj[(pos, col)] = C64::new(1.0, 0.0);
            } else {
                for i in 0..rank {
                    proj[(i, col)] = t[(i, pos - rank)];
                }
            }
        }
    }
    InterpDecomp { skel: qr.perm[..rank].to_vec(), proj }
}
