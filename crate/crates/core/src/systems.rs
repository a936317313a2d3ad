//! The discretized transmission systems.
//!
//! Unknowns are the boundary traces `u` and `q = (1/ε) ∂u/∂ν` and, for the
//! mixed formulation, the interior single-layer density `φ`. The mixed system
//! is
//!
//! ```text
//! [ I    0    M13 ] [u]   [0 ]
//! [ 0    I    M23 ] [q] = [0 ]
//! [ M31  M32  0   ] [φ]   [b3]
//! ```
//!
//! and the ordinary system is `[[M31, M32], [D1 + I/2, −ε1 S1]] [u; q] = [b3; 0]`.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, Point};
use crate::linalg::CMat;
use crate::quadrature::{assemble_many, kernel_eval, OperatorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    Mixed,
    Ordinary,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Mixed => "mixed",
            Formulation::Ordinary => "ordinary",
        }
    }
}

/// Material constants, frequency and the Burton–Miller coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemParams {
    pub eps0: f64,
    pub eps1: f64,
    pub omega: C64,
    /// `None` selects `i / k0`.
    pub beta: Option<C64>,
}

impl ProblemParams {
    pub fn new(eps0: f64, eps1: f64, omega: C64) -> Result<ProblemParams> {
        let p = ProblemParams { eps0, eps1, omega, beta: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_beta(mut self, beta: C64) -> Result<ProblemParams> {
        self.beta = Some(beta);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) || !(self.eps1 > 0.0 && self.eps1.is_finite()) {
            return Err(Error::invalid(format!("material constants must be positive, got ({}, {})", self.eps0, self.eps1)));
        }
        if !(self.omega.norm() > 0.0) || !self.omega.re.is_finite() || !self.omega.im.is_finite() {
            return Err(Error::invalid(format!("angular frequency must be finite and nonzero, got {}", self.omega)));
        }
        let b = self.beta();
        if b.im == 0.0 || !b.re.is_finite() || !b.im.is_finite() {
            return Err(Error::invalid(format!("Burton-Miller constant needs a nonzero imaginary part, got {b}")));
        }
        Ok(())
    }

    pub fn k0(&self) -> C64 {
        self.omega * self.eps0.sqrt()
    }

    pub fn k1(&self) -> C64 {
        self.omega * self.eps1.sqrt()
    }

    pub fn beta(&self) -> C64 {
        self.beta.unwrap_or_else(|| C64::i() / self.k0())
    }
}

/// Incident field in the exterior medium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum IncidentField {
    PlaneWave { direction: Point },
    /// Outgoing point source `G(x, s; k0)` located at `s`, outside the scatterer.
    PointSource { location: Point },
}

impl Default for IncidentField {
    fn default() -> Self {
        IncidentField::PlaneWave { direction: [1.0, 0.0] }
    }
}

impl IncidentField {
    /// Traces `u_in` and `∂u_in/∂ν` at the grid nodes.
    pub fn evaluate(&self, k0: C64, grid: &Grid) -> Result<(Vec<C64>, Vec<C64>)> {
        match self {
            IncidentField::PlaneWave { direction } => incident_plane_wave(*direction, k0, grid),
            IncidentField::PointSource { location } => {
                let mut u = Vec::with_capacity(grid.n);
                let mut q = Vec::with_capacity(grid.n);
                for (x, nx) in grid.points.iter().zip(&grid.normals) {
                    // S kernel is G itself; D* differentiates in the target normal.
                    u.push(kernel_eval(OperatorKind::S, k0, *x, *location, *nx, [1.0, 0.0])?);
                    q.push(kernel_eval(OperatorKind::Dstar, k0, *x, *location, *nx, [1.0, 0.0])?);
                }
                Ok((u, q))
            }
        }
    }
}

/// `u_in = e^{i k0 d·x}`, `q_in = i k0 (d·ν) u_in`.
pub fn incident_plane_wave(direction: Point, k0: C64, grid: &Grid) -> Result<(Vec<C64>, Vec<C64>)> {
    let len = direction[0].hypot(direction[1]);
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("plane-wave direction must be a unit vector, |d| = {len}")));
    }
    let ik = C64::i() * k0;
    let mut u = Vec::with_capacity(grid.n);
    let mut q = Vec::with_capacity(grid.n);
    for (x, nu) in grid.points.iter().zip(&grid.normals) {
        let ui = (ik * (direction[0] * x[0] + direction[1] * x[1])).exp();
        u.push(ui);
        q.push(ik * (direction[0] * nu[0] + direction[1] * nu[1]) * ui);
    }
    Ok((u, q))
}

/// Operator matrices needed by one or both formulations.
#[derive(Clone, Debug)]
pub struct Operators {
    pub n: usize,
    pub order: usize,
    pub s0: CMat,
    pub d0: CMat,
    pub ds0: CMat,
    pub n0: CMat,
    pub s1: CMat,
    /// Only for the mixed formulation.
    pub ds1: Option<CMat>,
    /// Only for the ordinary formulation.
    pub d1: Option<CMat>,
}

pub fn assemble_operators(params: &ProblemParams, grid: &Grid, order: usize, formulations: &[Formulation]) -> Result<Operators> {
    params.validate()?;
    let mut ext = assemble_many(&OperatorKind::ALL, params.k0(), grid, order)?.into_iter().map(|m| m.entries);
    let (s0, d0, ds0, n0) = (ext.next().unwrap(), ext.next().unwrap(), ext.next().unwrap(), ext.next().unwrap());
    let mixed = formulations.contains(&Formulation::Mixed);
    let ordinary = formulations.contains(&Formulation::Ordinary);
    let mut kinds = vec![OperatorKind::S];
    if mixed {
        kinds.push(OperatorKind::Dstar);
    }
    if ordinary {
        kinds.push(OperatorKind::D);
    }
    let mut int = assemble_many(&kinds, params.k1(), grid, order)?.into_iter().map(|m| m.entries);
    let s1 = int.next().unwrap();
    let ds1 = if mixed { int.next() } else { None };
    let d1 = if ordinary { int.next() } else { None };
    Ok(Operators { n: grid.n, order, s0, d0, ds0, n0, s1, ds1, d1 })
}

/// The 3N mixed system stored as its four nonzero off-diagonal blocks.
#[derive(Clone, Debug)]
pub struct MixedSystem {
    pub n: usize,
    pub omega: C64,
    pub m13: CMat,
    pub m23: CMat,
    pub m31: CMat,
    pub m32: CMat,
    pub b3: Vec<C64>,
}

/// The 2N ordinary system as one dense matrix.
#[derive(Clone, Debug)]
pub struct OrdinarySystem {
    pub n: usize,
    pub omega: C64,
    pub matrix: CMat,
    pub rhs: Vec<C64>,
}

fn check_len(n: usize, v: &[C64]) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    Ok(())
}

/// `M31 = D0 − I/2 + β N0`, `M32 = −ε0 (S0 + β (D*0 + I/2))`: the exterior
/// Burton–Miller row shared by both formulations.
fn exterior_row(params: &ProblemParams, ops: &Operators) -> (CMat, CMat) {
    let n = ops.n;
    let beta = params.beta();
    let e0 = params.eps0;
    let m31 = Mat::from_fn(n, n, |i, j| {
        let v = ops.d0[(i, j)] + beta * ops.n0[(i, j)];
        if i == j {
            v - 0.5
        } else {
            v
        }
    });
    let m32 = Mat::from_fn(n, n, |i, j| {
        let v = ops.s0[(i, j)] + beta * ops.ds0[(i, j)];
        let v = if i == j { v + 0.5 * beta } else { v };
        -e0 * v
    });
    (m31, m32)
}

/// `b3 = −u_in − β q_in`.
pub fn exterior_rhs(params: &ProblemParams, u_in: &[C64], q_in: &[C64]) -> Vec<C64> {
    let beta = params.beta();
    u_in.iter().zip(q_in).map(|(u, q)| -u - beta * q).collect()
}

pub fn build_mixed(params: &ProblemParams, ops: &Operators, u_in: &[C64], q_in: &[C64]) -> Result<MixedSystem> {
    params.validate()?;
    let n = ops.n;
    check_len(n, u_in)?;
    check_len(n, q_in)?;
    let ds1 = ops.ds1.as_ref().ok_or_else(|| Error::invalid("mixed system needs D*_{k1}"))?;
    let m13 = Mat::from_fn(n, n, |i, j| -ops.s1[(i, j)]);
    let inv_e1 = 1.0 / params.eps1;
    let m23 = Mat::from_fn(n, n, |i, j| {
        let v = ds1[(i, j)];
        -inv_e1 * if i == j { v + 0.5 } else { v }
    });
    let (m31, m32) = exterior_row(params, ops);
    Ok(MixedSystem { n, omega: params.omega, m13, m23, m31, m32, b3: exterior_rhs(params, u_in, q_in) })
}

pub fn build_ordinary(params: &ProblemParams, ops: &Operators, u_in: &[C64], q_in: &[C64]) -> Result<OrdinarySystem> {
    params.validate()?;
    let n = ops.n;
    check_len(n, u_in)?;
    check_len(n, q_in)?;
    let d1 = ops.d1.as_ref().ok_or_else(|| Error::invalid("ordinary system needs D_{k1}"))?;
    let (m31, m32) = exterior_row(params, ops);
    let e1 = params.eps1;
    let matrix = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => m31[(i, j)],
        (true, false) => m32[(i, j - n)],
        (false, true) => {
            let v = d1[(i - n, j)];
            if i - n == j {
                v + 0.5
            } else {
                v
            }
        }
        (false, false) => -e1 * ops.s1[(i - n, j - n)],
    });
    let mut rhs = exterior_rhs(params, u_in, q_in);
    rhs.resize(2 * n, C64::new(0.0, 0.0));
    Ok(OrdinarySystem { n, omega: params.omega, matrix, rhs })
}

impl MixedSystem {
    /// The assembled `3N × 3N` matrix.
    pub fn full_matrix(&self) -> CMat {
        let n = self.n;
        Mat::from_fn(3 * n, 3 * n, |i, j| {
            let (bi, bj) = (i / n, j / n);
            let (r, c) = (i % n, j % n);
            match (bi, bj) {
                (0, 0) | (1, 1) => {
                    if r == c {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }
                (0, 2) => self.m13[(r, c)],
                (1, 2) => self.m23[(r, c)],
                (2, 0) => self.m31[(r, c)],
                (2, 1) => self.m32[(r, c)],
                _ => C64::new(0.0, 0.0),
            }
        })
    }

    pub fn full_rhs(&self) -> Vec<C64> {
        let mut f = vec![C64::new(0.0, 0.0); 2 * self.n];
        f.extend_from_slice(&self.b3);
        f
    }

    /// `A x` for `x = [x1; x2; x3]` without forming the full matrix.
    pub fn apply(&self, x1: &[C64], x2: &[C64], x3: &[C64]) -> Result<[Vec<C64>; 3]> {
        for v in [x1, x2, x3] {
            check_len(self.n, v)?;
        }
        use crate::linalg::matvec;
        let add = |a: &[C64], b: Vec<C64>| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
        let r1 = add(x1, matvec(self.m13.as_ref(), x3));
        let r2 = add(x2, matvec(self.m23.as_ref(), x3));
        let r3 = add(&matvec(self.m31.as_ref(), x1), matvec(self.m32.as_ref(), x2));
        Ok([r1, r2, r3])
    }
}
