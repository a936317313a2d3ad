//! Nyström matrices for the single-layer, double-layer, adjoint double-layer
//! and hypersingular operators of the 2D Helmholtz equation.
//!
//! Two corrected trapezoidal schemes are provided:
//!
//! * order 1: the punctured trapezoidal rule with a single corrected weight on
//!   the diagonal. The corrections come from the zeta-function expansion of the
//!   trapezoidal error for `f(τ) ln|τ|` and the finite part of `f(τ)/τ²`, giving
//!   O(h³) for `S`, `D`, `D*` and O(h) for `N`. Off-diagonal entries are plain
//!   trapezoidal samples, which keeps every off-diagonal block low rank.
//! * order 31 (high order): logarithmic splitting with trigonometric
//!   interpolation weights for the log part and for the `csc²` part of the
//!   hypersingular kernel. Converges spectrally on analytic curves.

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Grid, Point};
use crate::special_functions::{cyl01, Cyl01, EULER_GAMMA, MIN_SINGULAR_ARG};

/// Correction order of the low-order scheme.
pub const LOW_ORDER: usize = 1;
/// Nominal order of the high-order scheme.
pub const HIGH_ORDER: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    S,
    D,
    Dstar,
    N,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 4] = [OperatorKind::S, OperatorKind::D, OperatorKind::Dstar, OperatorKind::N];

    fn slot(self) -> usize {
        self as usize
    }

    /// Kind whose kernel is this one's with the two points exchanged.
    fn transposed(self) -> OperatorKind {
        match self {
            OperatorKind::D => OperatorKind::Dstar,
            OperatorKind::Dstar => OperatorKind::D,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::S => "S",
            OperatorKind::D => "D",
            OperatorKind::Dstar => "Dstar",
            OperatorKind::N => "N",
        }
    }
}

/// Dense discretization of one layer operator.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub k: C64,
    pub order: usize,
    pub entries: Mat<C64>,
}

/// Geometric quantities of an ordered point pair `(x, y)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairGeom {
    pub r: f64,
    /// `ν(x)·(x − y)`
    pub a: f64,
    /// `ν(y)·(x − y)`
    pub b: f64,
    /// `ν(x)·ν(y)`
    pub nn: f64,
}

impl PairGeom {
    #[inline]
    pub fn new(x: Point, nx: Point, y: Point, ny: Point) -> PairGeom {
        let d = [x[0] - y[0], x[1] - y[1]];
        PairGeom {
            r: d[0].hypot(d[1]),
            a: nx[0] * d[0] + nx[1] * d[1],
            b: ny[0] * d[0] + ny[1] * d[1],
            nn: nx[0] * ny[0] + nx[1] * ny[1],
        }
    }
}

/// Kernel values `[S, D, D*, N]` at a pair, given the Bessel data at `k r`.
#[inline]
pub(crate) fn kernels(k: C64, g: &PairGeom, c: &Cyl01) -> [C64; 4] {
    let h0 = c.h0();
    let h1 = c.h1();
    let ik4 = C64::new(0.0, 0.25) * k;
    let inv_r = 1.0 / g.r;
    let h1r = h1 * inv_r;
    [
        C64::new(0.0, 0.25) * h0,
        ik4 * h1r * g.b,
        -ik4 * h1r * g.a,
        ik4 * ((k * h0 - 2.0 * h1r) * (g.a * g.b * inv_r * inv_r) + h1r * g.nn),
    ]
}

/// Coefficients of `ln(4 sin²((t−s)/2))` in the kernels `[S, D, D*, N]`,
/// without the source Jacobian.
#[inline]
fn log_parts(k: C64, g: &PairGeom, c: &Cyl01) -> [C64; 4] {
    let inv_r = 1.0 / g.r;
    let f = -k / (4.0 * PI);
    [
        -c.j0 / (4.0 * PI),
        f * c.j1 * inv_r * g.b,
        -f * c.j1 * inv_r * g.a,
        f * (c.j1 * inv_r * g.nn - k * c.j2 * (g.a * g.b * inv_r * inv_r)),
    ]
}

fn check_arg(k: C64, r: f64) -> Result<Cyl01> {
    let z = k * r;
    if !(z.norm() >= MIN_SINGULAR_ARG) || z.norm() >= crate::special_functions::MAX_ARG || !z.re.is_finite() {
        return Err(Error::Domain { func: "kernel", z });
    }
    Ok(cyl01(z))
}

/// Kernel of one layer operator at target `x` (normal `nx`) and source `y`
/// (normal `ny`), using `G(x, y) = (i/4) H_0^{(1)}(k|x − y|)`.
pub fn kernel_eval(kind: OperatorKind, k: C64, x: Point, y: Point, nx: Point, ny: Point) -> Result<C64> {
    let g = PairGeom::new(x, nx, y, ny);
    if g.r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let c = check_arg(k, g.r)?;
    Ok(kernels(k, &g, &c)[kind.slot()])
}

/// All four kernels at one pair; used by the proxy compression.
#[inline]
pub(crate) fn kernel_all(k: C64, x: Point, nx: Point, y: Point, ny: Point) -> [C64; 4] {
    let g = PairGeom::new(x, nx, y, ny);
    kernels(k, &g, &cyl01(k * g.r))
}

/// `|x''|²/(4|x'|²) + x'·x'''/(6|x'|²) − (x'·x'')²/(2|x'|⁴)`: twice π|x'| times the
/// regular part of the Laplace hypersingular kernel on the diagonal.
fn hypersingular_curvature_term(d1: Point, d2: Point, d3: Point) -> f64 {
    let s2 = d1[0] * d1[0] + d1[1] * d1[1];
    let dd2 = d2[0] * d2[0] + d2[1] * d2[1];
    let d12 = d1[0] * d2[0] + d1[1] * d2[1];
    let d13 = d1[0] * d3[0] + d1[1] * d3[1];
    dd2 / (4.0 * s2) + d13 / (6.0 * s2) - d12 * d12 / (2.0 * s2 * s2)
}

/// Pointer wrapper for filling disjoint matrix entries from rayon workers.
#[derive(Clone, Copy)]
struct SharedCol(*mut C64, usize);
unsafe impl Send for SharedCol {}
unsafe impl Sync for SharedCol {}

impl SharedCol {
    /// # Safety
    /// Each `(i, j)` must be written by exactly one worker.
    #[inline]
    unsafe fn write(self, i: usize, j: usize, v: C64) {
        *self.0.add(i + j * self.1) = v;
    }
}

fn validate_order(order: usize, n: usize) -> Result<()> {
    match order {
        LOW_ORDER | HIGH_ORDER => {}
        _ => return Err(Error::invalid(format!("unsupported quadrature order {order} (use 1 or 31)"))),
    }
    if n <= 2 * order {
        return Err(Error::invalid(format!("N = {n} too small for quadrature order {order}")));
    }
    Ok(())
}

/// Assemble one operator.
pub fn assemble(kind: OperatorKind, k: C64, grid: &Grid, order: usize) -> Result<OperatorMatrix> {
    Ok(assemble_many(&[kind], k, grid, order)?.pop().unwrap())
}

/// Assemble several operators at one wavenumber, sharing the Bessel evaluations.
pub fn assemble_many(kinds: &[OperatorKind], k: C64, grid: &Grid, order: usize) -> Result<Vec<OperatorMatrix>> {
    validate_order(order, grid.n)?;
    if !(k.norm() > 0.0) || !k.re.is_finite() || !k.im.is_finite() {
        return Err(Error::invalid(format!("wavenumber must be finite and nonzero, got {k}")));
    }
    let n = grid.n;
    // The closest pair and the farthest pair bound every Bessel argument.
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let j = (i + 1) % n;
        let p = grid.points[i];
        let q = grid.points[j];
        rmin = rmin.min((p[0] - q[0]).hypot(p[1] - q[1]));
        rmax = rmax.max(p[0].hypot(p[1]));
    }
    check_arg(k, rmin)?;
    check_arg(k, 2.0 * rmax)?;

    let mut mats: Vec<Mat<C64>> = kinds.iter().map(|_| Mat::zeros(n, n)).collect();
    let ptrs: Vec<SharedCol> = mats.iter_mut().map(|m| SharedCol(m.as_ptr_mut(), m.col_stride() as usize)).collect();
    let high = order == HIGH_ORDER;
    let weights = if high { Some(SplitWeights::new(n)) } else { None };
    let h = grid.h;

    (0..n).into_par_iter().for_each(|i| {
        let (xi, ni, ji) = (grid.points[i], grid.normals[i], grid.jacobian[i]);
        for j in (i + 1)..n {
            let (xj, nj, jj) = (grid.points[j], grid.normals[j], grid.jacobian[j]);
            let g = PairGeom::new(xi, ni, xj, nj);
            let c = cyl01(k * g.r);
            let kv = kernels(k, &g, &c);
            match &weights {
                None => {
                    for (slot, kind) in kinds.iter().enumerate() {
                        let v_ij = kv[kind.slot()];
                        let v_ji = kv[kind.transposed().slot()];
                        unsafe {
                            ptrs[slot].write(i, j, v_ij * (h * jj));
                            ptrs[slot].write(j, i, v_ji * (h * ji));
                        }
                    }
                }
                Some(w) => {
                    let lp = log_parts(k, &g, &c);
                    let m = j - i;
                    let rw = w.r[m];
                    let lg = w.log4sin2[m];
                    for (slot, kind) in kinds.iter().enumerate() {
                        let (s_ij, s_ji) = (kind.slot(), kind.transposed().slot());
                        let mut v_ij = rw * lp[s_ij] * jj + h * (kv[s_ij] * jj - lp[s_ij] * jj * lg);
                        let mut v_ji = rw * lp[s_ji] * ji + h * (kv[s_ji] * ji - lp[s_ji] * ji * lg);
                        if *kind == OperatorKind::N {
                            let csc = w.csc2[m] / (8.0 * PI);
                            v_ij += 0.5 * w.t[m] / ji - h * csc / ji;
                            v_ji += 0.5 * w.t[m] / jj - h * csc / jj;
                        }
                        unsafe {
                            ptrs[slot].write(i, j, v_ij);
                            ptrs[slot].write(j, i, v_ji);
                        }
                    }
                }
            }
        }
    });

    for i in 0..n {
        let d = diagonal_parts(k, grid, i);
        let low = low_order_diagonal_from(&d, h);
        for (slot, kind) in kinds.iter().enumerate() {
            let v = match (&weights, kind) {
                (None, kind) => low[kind.slot()],
                (Some(w), OperatorKind::S) => w.r[0] * (-d.jac / (4.0 * PI)) + h * d.s_reg,
                (Some(_), OperatorKind::D | OperatorKind::Dstar) => C64::from(h * d.d_reg),
                (Some(w), OperatorKind::N) => {
                    0.5 * w.t[0] / d.jac + w.r[0] * (-d.k2 * d.jac / (8.0 * PI)) + h * (d.n_lap - 1.0 / (24.0 * PI * d.jac) + d.n_helm)
                }
            };
            unsafe { ptrs[slot].write(i, i, v) };
        }
    }

    Ok(kinds
        .iter()
        .zip(mats)
        .map(|(&kind, entries)| OperatorMatrix { kind, k, order, entries })
        .collect())
}

/// Smooth limits of the kernels at a node, shared by both schemes.
struct DiagonalParts {
    jac: f64,
    s_reg: C64,
    d_reg: f64,
    n_helm: C64,
    n_lap: f64,
    k2: C64,
}

fn diagonal_parts(k: C64, grid: &Grid, i: usize) -> DiagonalParts {
    let jac = grid.jacobian[i];
    let ln_k = (k * (jac / 2.0)).ln();
    let k2 = k * k;
    DiagonalParts {
        jac,
        s_reg: jac * (C64::new(0.0, 0.25) - (EULER_GAMMA + ln_k) / (2.0 * PI)),
        d_reg: -grid.curvature[i] * jac / (4.0 * PI),
        n_helm: jac * (C64::new(0.0, 1.0) * k2 / 8.0 - k2 / (4.0 * PI) * ln_k + k2 / (8.0 * PI) * (1.0 - 2.0 * EULER_GAMMA)),
        n_lap: hypersingular_curvature_term(grid.d1[i], grid.d2[i], grid.d3[i]) / (2.0 * PI * jac),
        k2,
    }
}

fn low_order_diagonal_from(d: &DiagonalParts, h: f64) -> [C64; 4] {
    let log_h = (h / (2.0 * PI)).ln();
    let dv = C64::from(h * d.d_reg);
    [
        h * (d.s_reg - d.jac * log_h / (2.0 * PI)),
        dv,
        dv,
        -PI / (6.0 * h * d.jac) + h * d.n_lap + h * d.n_helm - h * log_h * d.k2 * d.jac / (4.0 * PI),
    ]
}

/// Corrected diagonal entries `[S, D, D*, N]` of the low-order scheme at node `i`.
pub(crate) fn low_order_diagonal(k: C64, grid: &Grid, i: usize) -> [C64; 4] {
    low_order_diagonal_from(&diagonal_parts(k, grid, i), grid.h)
}

/// Circulant weight vectors of the high-order scheme, indexed by `(j − i) mod N`.
struct SplitWeights {
    /// log-interpolation weights
    r: Vec<f64>,
    /// finite-part `csc²` interpolation weights (scaled by `1/(4π)`)
    t: Vec<f64>,
    log4sin2: Vec<f64>,
    csc2: Vec<f64>,
}

impl SplitWeights {
    fn new(n_nodes: usize) -> SplitWeights {
        let n = n_nodes / 2;
        let nf = n as f64;
        let mut r = vec![0.0; n_nodes];
        let mut t = vec![0.0; n_nodes];
        let mut log4sin2 = vec![0.0; n_nodes];
        let mut csc2 = vec![0.0; n_nodes];
        for d in 0..n_nodes {
            let tau = PI * d as f64 / nf;
            let mut sr = 0.0;
            let mut st = 0.0;
            for m in 1..n {
                let c = (m as f64 * tau).cos();
                sr += c / m as f64;
                st += m as f64 * c;
            }
            let cn = (nf * tau).cos();
            r[d] = -2.0 * PI / nf * sr - PI / (nf * nf) * cn;
            t[d] = -st / nf - 0.5 * cn;
            if d > 0 {
                let s = (0.5 * tau).sin();
                log4sin2[d] = (4.0 * s * s).ln();
                csc2[d] = 1.0 / (s * s);
            }
        }
        SplitWeights { r, t, log4sin2, csc2 }
    }
}

/// Plain matrix–vector product.
pub fn apply(matrix: &OperatorMatrix, density: &[C64]) -> Result<Vec<C64>> {
    let n = matrix.entries.nrows();
    if density.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: density.len() });
    }
    Ok(crate::linalg::matvec(matrix.entries.as_ref(), density))
}

/// Write the entries row-major as little-endian complex128 pairs.
pub fn dump_operator(matrix: &OperatorMatrix, path: &Path) -> Result<()> {
    let m = &matrix.entries;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}
