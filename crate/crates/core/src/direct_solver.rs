//! Dense direct solvers.
//!
//! The mixed system is eliminated through its Schur complement
//! `T = −M31 M13 − M32 M23`: two order-N products and one order-N LU, about
//! `14/3 N³` operations against `16/3 N³` for the LU of the 2N ordinary system.

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{matvec, mul, mul_add, CMat, FlopCounter, Lu};
use crate::systems::{MixedSystem, OrdinarySystem};

/// Pivot ratio below which a factorization is reported as singular.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-14;

#[derive(Clone, Debug, Serialize)]
pub struct FlopReport {
    pub label: &'static str,
    pub n: usize,
    /// Real floating-point operations.
    pub raw: u64,
    /// `raw / 4`, the convention in which an order-n gemm costs `2n³`.
    pub normalized: f64,
    /// Leading-order prediction in normalized units.
    pub theoretical: f64,
}

pub struct MixedFactorization {
    pub n: usize,
    pub omega: C64,
    m13: CMat,
    m23: CMat,
    m31: CMat,
    m32: CMat,
    lu: Lu,
    flops: FlopCounter,
}

#[derive(Clone, Debug)]
pub struct MixedSolution {
    pub u: Vec<C64>,
    pub q: Vec<C64>,
    pub phi: Vec<C64>,
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("system size N = {n} is below the minimum of 2")));
    }
    Ok(())
}

fn check_rows(n: usize, m: MatRef<'_, C64>) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
    }
    Ok(())
}

pub fn factor_mixed(system: MixedSystem) -> Result<MixedFactorization> {
    factor_mixed_with_tol(system, DEFAULT_PIVOT_TOL)
}

pub fn factor_mixed_with_tol(system: MixedSystem, pivot_tol: f64) -> Result<MixedFactorization> {
    let MixedSystem { n, omega, m13, m23, m31, m32, .. } = system;
    check_n(n)?;
    let flops = FlopCounter::new();
    let mut t = Mat::<C64>::zeros(n, n);
    mul_add(t.as_mut(), m31.as_ref(), m13.as_ref(), C64::new(-1.0, 0.0));
    mul_add(t.as_mut(), m32.as_ref(), m23.as_ref(), C64::new(-1.0, 0.0));
    flops.gemm(n, n, n);
    flops.gemm(n, n, n);
    let lu = Lu::new(t.as_ref());
    drop(t);
    flops.lu(n);
    lu.check(omega, pivot_tol)?;
    Ok(MixedFactorization { n, omega, m13, m23, m31, m32, lu, flops })
}

impl MixedFactorization {
    pub fn min_pivot(&self) -> f64 {
        self.lu.min_pivot
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }

    pub fn flop_report(&self) -> FlopReport {
        let n = self.n as f64;
        FlopReport {
            label: "mixed",
            n: self.n,
            raw: self.flops.raw(),
            normalized: self.flops.normalized(),
            theoretical: 14.0 / 3.0 * n * n * n,
        }
    }

    /// `T⁻¹ B` for a block of right-hand sides.
    pub fn schur_solve(&self, b: MatRef<'_, C64>) -> Result<CMat> {
        check_rows(self.n, b)?;
        self.flops.lu_solve(self.n, b.ncols());
        Ok(self.lu.solve(b))
    }

    /// `T` rebuilt from the stored blocks (diagnostics only).
    pub fn schur_matrix(&self) -> CMat {
        let mut t = Mat::<C64>::zeros(self.n, self.n);
        mul_add(t.as_mut(), self.m31.as_ref(), self.m13.as_ref(), C64::new(-1.0, 0.0));
        mul_add(t.as_mut(), self.m32.as_ref(), self.m23.as_ref(), C64::new(-1.0, 0.0));
        t
    }

    /// Solve with right-hand side `[0; 0; b3]`.
    pub fn solve(&self, b3: &[C64]) -> Result<MixedSolution> {
        if b3.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b3.len() });
        }
        let x3 = self.schur_solve(MatRef::from_column_major_slice(b3, self.n, 1))?;
        let phi: Vec<C64> = (0..self.n).map(|i| x3[(i, 0)]).collect();
        let u = matvec(self.m13.as_ref(), &phi).into_iter().map(|v| -v).collect();
        let q = matvec(self.m23.as_ref(), &phi).into_iter().map(|v| -v).collect();
        self.flops.gemm(self.n, 1, self.n);
        self.flops.gemm(self.n, 1, self.n);
        Ok(MixedSolution { u, q, phi })
    }

    /// Solve with an arbitrary right-hand side, one system per column.
    pub fn solve_general_mat(&self, b1: MatRef<'_, C64>, b2: MatRef<'_, C64>, b3: MatRef<'_, C64>) -> Result<[CMat; 3]> {
        for b in [b1, b2, b3] {
            check_rows(self.n, b)?;
        }
        let c = b1.ncols();
        if b2.ncols() != c || b3.ncols() != c {
            return Err(Error::DimensionMismatch { expected: c, got: if b2.ncols() != c { b2.ncols() } else { b3.ncols() } });
        }
        let n = self.n;
        let mut r = b3.to_owned();
        mul_add(r.as_mut(), self.m31.as_ref(), b1, C64::new(-1.0, 0.0));
        mul_add(r.as_mut(), self.m32.as_ref(), b2, C64::new(-1.0, 0.0));
        self.flops.gemm(n, c, n);
        self.flops.gemm(n, c, n);
        let z3 = self.schur_solve(r.as_ref())?;
        let mut x1 = b1.to_owned();
        mul_add(x1.as_mut(), self.m13.as_ref(), z3.as_ref(), C64::new(-1.0, 0.0));
        let mut x2 = b2.to_owned();
        mul_add(x2.as_mut(), self.m23.as_ref(), z3.as_ref(), C64::new(-1.0, 0.0));
        self.flops.gemm(n, c, n);
        self.flops.gemm(n, c, n);
        Ok([x1, x2, z3])
    }

    pub fn solve_general(&self, b1: &[C64], b2: &[C64], b3: &[C64]) -> Result<MixedSolution> {
        let n = self.n;
        for b in [b1, b2, b3] {
            if b.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.len() });
            }
        }
        let col = |b: &[C64]| MatRef::from_column_major_slice(b, n, 1).to_owned();
        let (c1, c2, c3) = (col(b1), col(b2), col(b3));
        let [x1, x2, x3] = self.solve_general_mat(c1.as_ref(), c2.as_ref(), c3.as_ref())?;
        let v = |m: &CMat| (0..n).map(|i| m[(i, 0)]).collect::<Vec<_>>();
        Ok(MixedSolution { u: v(&x1), q: v(&x2), phi: v(&x3) })
    }

    /// Solve with the block-diagonal right-hand side `diag(B1, B2, B3)`.
    ///
    /// `x[i][j]` is block row `i` of the solution for block column `j`, of size
    /// `N × c_j`.
    pub fn solve_blockdiag(&self, b1: MatRef<'_, C64>, b2: MatRef<'_, C64>, b3: MatRef<'_, C64>) -> Result<[[CMat; 3]; 3]> {
        for b in [b1, b2, b3] {
            check_rows(self.n, b)?;
        }
        let n = self.n;
        let (c1, c2, c3) = (b1.ncols(), b2.ncols(), b3.ncols());
        let ct = c1 + c2 + c3;
        // [−M31 B1, −M32 B2, B3] solved in one pass.
        let mut r = Mat::<C64>::zeros(n, ct);
        if c1 > 0 {
            mul_add(r.as_mut().submatrix_mut(0, 0, n, c1), self.m31.as_ref(), b1, C64::new(-1.0, 0.0));
            self.flops.gemm(n, c1, n);
        }
        if c2 > 0 {
            mul_add(r.as_mut().submatrix_mut(0, c1, n, c2), self.m32.as_ref(), b2, C64::new(-1.0, 0.0));
            self.flops.gemm(n, c2, n);
        }
        r.as_mut().submatrix_mut(0, c1 + c2, n, c3).copy_from(b3);
        let z = self.schur_solve(r.as_ref())?;
        drop(r);
        let mut x1 = mul(self.m13.as_ref(), z.as_ref());
        let mut x2 = mul(self.m23.as_ref(), z.as_ref());
        self.flops.gemm(n, ct, n);
        self.flops.gemm(n, ct, n);
        for j in 0..ct {
            for i in 0..n {
                x1[(i, j)] = -x1[(i, j)];
                x2[(i, j)] = -x2[(i, j)];
            }
        }
        for j in 0..c1 {
            for i in 0..n {
                x1[(i, j)] += b1[(i, j)];
            }
        }
        for j in 0..c2 {
            for i in 0..n {
                x2[(i, c1 + j)] += b2[(i, j)];
            }
        }
        let split = |m: &CMat| -> [CMat; 3] {
            [
                m.as_ref().submatrix(0, 0, n, c1).to_owned(),
                m.as_ref().submatrix(0, c1, n, c2).to_owned(),
                m.as_ref().submatrix(0, c1 + c2, n, c3).to_owned(),
            ]
        };
        Ok([split(&x1), split(&x2), split(&z)])
    }
}

/// Dense partial-pivot LU of the 2N ordinary system.
pub struct OrdinaryFactorization {
    pub n: usize,
    pub omega: C64,
    lu: Lu,
    flops: FlopCounter,
}

pub fn factor_ordinary(system: &OrdinarySystem) -> Result<OrdinaryFactorization> {
    factor_ordinary_with_tol(system, DEFAULT_PIVOT_TOL)
}

pub fn factor_ordinary_with_tol(system: &OrdinarySystem, pivot_tol: f64) -> Result<OrdinaryFactorization> {
    check_n(system.n)?;
    let flops = FlopCounter::new();
    let lu = Lu::new(system.matrix.as_ref());
    flops.lu(2 * system.n);
    lu.check(system.omega, pivot_tol)?;
    Ok(OrdinaryFactorization { n: system.n, omega: system.omega, lu, flops })
}

impl OrdinaryFactorization {
    pub fn min_pivot(&self) -> f64 {
        self.lu.min_pivot
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }

    pub fn solve_mat(&self, b: MatRef<'_, C64>) -> Result<CMat> {
        check_rows(2 * self.n, b)?;
        self.flops.lu_solve(2 * self.n, b.ncols());
        Ok(self.lu.solve(b))
    }

    /// Returns `(u, q)`.
    pub fn solve(&self, rhs: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let n = self.n;
        if rhs.len() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: rhs.len() });
        }
        let x = self.solve_mat(MatRef::from_column_major_slice(rhs, 2 * n, 1))?;
        Ok(((0..n).map(|i| x[(i, 0)]).collect(), (n..2 * n).map(|i| x[(i, 0)]).collect()))
    }

    pub fn flop_report(&self) -> FlopReport {
        let n = self.n as f64;
        FlopReport {
            label: "ordinary",
            n: self.n,
            raw: self.flops.raw(),
            normalized: self.flops.normalized(),
            theoretical: 16.0 / 3.0 * n * n * n,
        }
    }
}

/// Factor and solve the ordinary system with its own right-hand side.
pub fn solve_ordinary_dense(system: &OrdinarySystem) -> Result<(Vec<C64>, Vec<C64>, FlopReport)> {
    let f = factor_ordinary(system)?;
    let (u, q) = f.solve(&system.rhs)?;
    Ok((u, q, f.flop_report()))
}

/// Factor and solve the mixed system with its own right-hand side.
pub fn solve_mixed_dense(system: MixedSystem) -> Result<(MixedSolution, FlopReport)> {
    let b3 = system.b3.clone();
    let f = factor_mixed(system)?;
    let sol = f.solve(&b3)?;
    Ok((sol, f.flop_report()))
}
