//! Block Sakurai–Sugiura contour-integral eigensolver for `A(ω) v = 0`.
//!
//! With random probe blocks `U`, `V` and nodes `z_j` on a square around `γ`,
//!
//! ```text
//! M_s = Σ_j w_j ζ_j^s Uᴴ A(z_j)⁻¹ V,    ζ_j = (z_j − γ) / ρ,
//! ```
//!
//! where `ρ` is half the side length. The block Hankel matrices
//! `H₀ = [M_{s+t}]`, `H₁ = [M_{s+t+1}]` are reduced by a truncated SVD of `H₀`
//! and the small eigenproblem gives `ω = γ + ρξ`.

use std::num::NonZeroUsize;

use faer::Mat;
use gauss_quad::GaussLegendre;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::direct_solver::{factor_mixed_with_tol, factor_ordinary_with_tol, DEFAULT_PIVOT_TOL};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::linalg::{matvec, mul, norm2, CMat};
use crate::systems::{assemble_operators, build_mixed, build_ordinary, Formulation, ProblemParams};

/// Quadrature along each side of the square contour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContourRule {
    GaussLegendre,
    /// Equispaced nodes with shared corners.
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct SsmConfig {
    /// Contour center `[re, im]`.
    pub center: [f64; 2],
    pub side: f64,
    pub points_per_side: usize,
    pub moments: usize,
    pub block_size: usize,
    pub seed: u64,
    /// Relative singular-value cutoff for the Hankel matrix.
    pub sigma_tol: f64,
    pub rule: ContourRule,
    /// Candidates with a larger residual are dropped.
    pub residual_tol: f64,
}

impl Default for SsmConfig {
    fn default() -> Self {
        SsmConfig {
            center: [0.0, 0.0],
            side: 0.1,
            points_per_side: 48,
            moments: 4,
            block_size: 4,
            seed: 0,
            sigma_tol: 1e-10,
            rule: ContourRule::GaussLegendre,
            residual_tol: 1e-6,
        }
    }
}

impl SsmConfig {
    pub fn center(&self) -> C64 {
        C64::new(self.center[0], self.center[1])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side > 0.0 && self.side.is_finite()) || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("contour needs a finite center and a positive side"));
        }
        if self.points_per_side < 2 || self.moments == 0 || self.block_size == 0 {
            return Err(Error::invalid("points per side must be at least 2, moments and block size positive"));
        }
        if !(self.sigma_tol > 0.0 && self.sigma_tol < 1.0) {
            return Err(Error::invalid(format!("singular value cutoff must lie in (0, 1), got {}", self.sigma_tol)));
        }
        Ok(())
    }

    /// Whether `z` lies strictly inside the square.
    pub fn contains(&self, z: C64) -> bool {
        let d = z - self.center();
        d.re.abs() < 0.5 * self.side && d.im.abs() < 0.5 * self.side
    }

    /// Contour nodes and weights for `(1/2πi) ∮ f(z) dz`.
    pub fn nodes(&self) -> (Vec<C64>, Vec<C64>) {
        let h = 0.5 * self.side;
        let c = self.center();
        let corners = [C64::new(-h, -h), C64::new(h, -h), C64::new(h, h), C64::new(-h, h)].map(|v| c + v);
        let scale = 1.0 / (2.0 * PI * C64::i());
        let p = self.points_per_side;
        let mut z = Vec::new();
        let mut w = Vec::new();
        match self.rule {
            ContourRule::GaussLegendre => {
                let gl = GaussLegendre::new(NonZeroUsize::new(p).unwrap());
                for s in 0..4 {
                    let (a, b) = (corners[s], corners[(s + 1) % 4]);
                    for &(x, wt) in gl.as_node_weight_pairs() {
                        z.push(0.5 * (a + b) + 0.5 * (b - a) * x);
                        w.push(0.5 * (b - a) * wt * scale);
                    }
                }
            }
            ContourRule::Trapezoid => {
                for s in 0..4 {
                    let (a, b) = (corners[s], corners[(s + 1) % 4]);
                    for t in 0..p - 1 {
                        z.push(a + (b - a) * (t as f64 / (p - 1) as f64));
                    }
                }
                let m = z.len();
                for j in 0..m {
                    w.push(0.5 * (z[(j + 1) % m] - z[(j + m - 1) % m]) * scale);
                }
            }
        }
        (z, w)
    }
}

/// A holomorphic matrix family, possibly several sharing one evaluation per
/// contour node.
pub trait ContourOperator: Sync {
    fn members(&self) -> usize {
        1
    }

    fn dim(&self, member: usize) -> usize;

    /// `A_m(z)⁻¹ B_m` for every member. With `checked`, a nearly singular
    /// `A_m(z)` is an error.
    fn solve(&self, z: C64, rhs: &[CMat], checked: bool) -> Result<Vec<CMat>>;

    /// `A_m(z) v`.
    fn apply(&self, member: usize, z: C64, v: &[C64]) -> Result<Vec<C64>>;
}

#[derive(Clone, Debug, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    /// `‖A(ω) v‖ / ‖v‖`.
    pub residual: f64,
}

impl Eigenvalue {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<Eigenvalue>,
    /// Rank kept after the singular-value cutoff.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Reference size of the integrand for the singular-value cutoff.
    pub scale: f64,
    /// Candidates inside the contour whose residual exceeded the tolerance.
    pub rejected: usize,
}

fn random_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    Mat::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Eigenvalues of every member of `op` inside the contour.
pub fn sakurai_sugiura(op: &dyn ContourOperator, cfg: &SsmConfig) -> Result<Vec<EigenResult>> {
    cfg.validate()?;
    let (m, r) = (cfg.moments, cfg.block_size);
    let rho = 0.5 * cfg.side;
    let gamma = cfg.center();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes: Vec<(CMat, CMat)> = (0..op.members())
        .map(|i| {
            let d = op.dim(i);
            (random_block(&mut rng, d, r), random_block(&mut rng, d, r))
        })
        .collect();
    let vs: Vec<CMat> = probes.iter().map(|(_, v)| v.clone()).collect();

    let (z, w) = cfg.nodes();
    let solves: Vec<Vec<CMat>> = z.par_iter().map(|&zj| op.solve(zj, &vs, true)).collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(op.members());
    for (member, (u, _)) in probes.iter().enumerate() {
        let d = op.dim(member);
        let mut moments = vec![Mat::<C64>::zeros(r, r); 2 * m];
        let mut s_blocks = vec![Mat::<C64>::zeros(d, r); m];
        let uh = u.adjoint().to_owned();
        let mut scale = 0.0;
        for (j, sol) in solves.iter().enumerate() {
            let y = &sol[member];
            let uy = mul(uh.as_ref(), y.as_ref());
            scale += w[j].norm() * crate::linalg::frob(uy.as_ref());
            let zeta = (z[j] - gamma) / rho;
            let mut f = w[j];
            for s in 0..2 * m {
                moments[s] += faer::Scale(f) * &uy;
                if s < m {
                    s_blocks[s] += faer::Scale(f) * y;
                }
                f *= zeta;
            }
        }
        out.push(extract(op, member, cfg, &moments, &s_blocks, scale)?);
    }
    Ok(out)
}

/// `scale` is the contour integral of `‖Uᴴ A⁻¹ V‖`; singular values of `H₀`
/// below `sigma_tol · scale` are quadrature noise.
fn extract(op: &dyn ContourOperator, member: usize, cfg: &SsmConfig, moments: &[CMat], s_blocks: &[CMat], scale: f64) -> Result<EigenResult> {
    let (m, r) = (cfg.moments, cfg.block_size);
    let rho = 0.5 * cfg.side;
    let mr = m * r;
    let hankel = |shift: usize| Mat::from_fn(mr, mr, |i, j| moments[i / r + j / r + shift][(i % r, j % r)]);
    let (h0, h1) = (hankel(0), hankel(1));
    let svd = h0.svd().map_err(|e| Error::NoConvergence(format!("Hankel SVD: {e:?}")))?;
    let sv: Vec<f64> = (0..mr).map(|i| svd.S()[i].re).collect();
    let rank = sv.iter().filter(|&&s| s > cfg.sigma_tol * scale && s > 0.0).count();
    if rank == 0 {
        return Ok(EigenResult { eigenvalues: Vec::new(), rank, singular_values: sv, scale, rejected: 0 });
    }
    let uk = svd.U().submatrix(0, 0, mr, rank);
    let vk = svd.V().submatrix(0, 0, mr, rank);
    // W_k Σ_k⁻¹
    let vs = Mat::from_fn(mr, rank, |i, j| vk[(i, j)] / sv[j]);
    let b = mul(mul(uk.adjoint().to_owned().as_ref(), h1.as_ref()).as_ref(), vs.as_ref());
    let eig = b.eigen().map_err(|e| Error::NoConvergence(format!("projected eigenproblem: {e:?}")))?;

    let d = op.dim(member);
    let mut s = Mat::<C64>::zeros(d, mr);
    for (k, blk) in s_blocks.iter().enumerate() {
        s.as_mut().submatrix_mut(0, k * r, d, r).copy_from(blk);
    }
    let basis = mul(s.as_ref(), vs.as_ref());

    let mut eigenvalues = Vec::new();
    let mut rejected = 0;
    for i in 0..rank {
        let omega = cfg.center() + rho * eig.S()[i];
        if !cfg.contains(omega) {
            continue;
        }
        let t: Vec<C64> = (0..rank).map(|k| eig.U()[(k, i)]).collect();
        let v = matvec(basis.as_ref(), &t);
        let residual = residual(op, member, omega, &v)?;
        if residual <= cfg.residual_tol {
            eigenvalues.push(Eigenvalue { re: omega.re, im: omega.im, residual });
        } else {
            rejected += 1;
        }
    }
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(EigenResult { eigenvalues, rank, singular_values: sv, scale, rejected })
}

/// Residual after one step of inverse iteration from the contour eigenvector.
fn residual(op: &dyn ContourOperator, member: usize, omega: C64, v: &[C64]) -> Result<f64> {
    let mut rhs: Vec<CMat> = (0..op.members()).map(|i| Mat::zeros(op.dim(i), 1)).collect();
    rhs[member] = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let refined = match op.solve(omega, &rhs, false) {
        Ok(x) => (0..v.len()).map(|i| x[member][(i, 0)]).collect::<Vec<_>>(),
        Err(_) => v.to_vec(),
    };
    let refined = if refined.iter().all(|x| x.is_finite()) { refined } else { v.to_vec() };
    let av = op.apply(member, omega, &refined)?;
    Ok(norm2(&av) / norm2(&refined))
}

/// The mixed and ordinary systems with zero data as functions of `ω`.
pub struct BieEigenProblem<'a> {
    pub grid: &'a Grid,
    pub eps0: f64,
    pub eps1: f64,
    pub order: usize,
    pub formulations: Vec<Formulation>,
    /// Fixed coupling constant; `None` uses `i/k0(ω)`.
    pub beta: Option<C64>,
}

impl BieEigenProblem<'_> {
    fn params(&self, z: C64) -> Result<ProblemParams> {
        let p = ProblemParams::new(self.eps0, self.eps1, z)?;
        match self.beta {
            Some(b) => p.with_beta(b),
            None => Ok(p),
        }
    }
}

impl ContourOperator for BieEigenProblem<'_> {
    fn members(&self) -> usize {
        self.formulations.len()
    }

    fn dim(&self, member: usize) -> usize {
        match self.formulations[member] {
            Formulation::Mixed => 3 * self.grid.n,
            Formulation::Ordinary => 2 * self.grid.n,
        }
    }

    fn solve(&self, z: C64, rhs: &[CMat], checked: bool) -> Result<Vec<CMat>> {
        let p = self.params(z)?;
        let ops = assemble_operators(&p, self.grid, self.order, &self.formulations)?;
        let n = self.grid.n;
        let zero = vec![C64::new(0.0, 0.0); n];
        let tol = if checked { DEFAULT_PIVOT_TOL } else { 0.0 };
        self.formulations
            .iter()
            .zip(rhs)
            .map(|(&f, b)| match f {
                Formulation::Mixed => {
                    let fac = factor_mixed_with_tol(build_mixed(&p, &ops, &zero, &zero)?, tol)?;
                    let k = b.ncols();
                    let x = fac.solve_general_mat(b.as_ref().submatrix(0, 0, n, k), b.as_ref().submatrix(n, 0, n, k), b.as_ref().submatrix(2 * n, 0, n, k))?;
                    let mut out = Mat::zeros(3 * n, k);
                    for (i, blk) in x.iter().enumerate() {
                        out.as_mut().submatrix_mut(i * n, 0, n, k).copy_from(blk);
                    }
                    Ok(out)
                }
                Formulation::Ordinary => factor_ordinary_with_tol(&build_ordinary(&p, &ops, &zero, &zero)?, tol)?.solve_mat(b.as_ref()),
            })
            .collect()
    }

    fn apply(&self, member: usize, z: C64, v: &[C64]) -> Result<Vec<C64>> {
        let p = self.params(z)?;
        let f = self.formulations[member];
        let ops = assemble_operators(&p, self.grid, self.order, &[f])?;
        let n = self.grid.n;
        let zero = vec![C64::new(0.0, 0.0); n];
        match f {
            Formulation::Mixed => {
                let [a, b, c] = build_mixed(&p, &ops, &zero, &zero)?.apply(&v[..n], &v[n..2 * n], &v[2 * n..])?;
                Ok(a.into_iter().chain(b).chain(c).collect())
            }
            Formulation::Ordinary => Ok(matvec(build_ordinary(&p, &ops, &zero, &zero)?.matrix.as_ref(), v)),
        }
    }
}
