//! Closed-form references on a circle: the separation-of-variables solution
//! for a plane wave `e^{i k0 x1}`, the circle eigenvalue conditions and a
//! Newton root-finder for Hankel-function zeros.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::{Curve, Grid};
use crate::special_functions::{bessel_j_seq, derivative_seq, hankel1, hankel1_seq, bessel_j, bessel_j_prime};
use crate::systems::ProblemParams;

/// Mode coefficients of the circle solution,
/// `u0 = Σ (iⁿ J_n(k0 r) + a_n H_n(k0 r)) e^{inθ}`, `u1 = Σ b_n J_n(k1 r) e^{inθ}`.
#[derive(Clone, Debug)]
pub struct MieSolution {
    pub radius: f64,
    pub n_max: usize,
    pub k0: C64,
    pub k1: C64,
    pub eps0: f64,
    pub eps1: f64,
    /// `a_n` for `n = −n_max..=n_max`, stored at `n + n_max`.
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    /// `J_n(k1 a)` and `k1 J_n'(k1 a)` at `n = 0..=n_max`, kept for trace evaluation.
    jk1: Vec<C64>,
    djk1: Vec<C64>,
}

pub fn default_n_max(radius: f64, params: &ProblemParams) -> usize {
    let ka = params.k0().norm().max(params.k1().norm()) * radius;
    ka.ceil() as usize + 30
}

#[inline]
fn i_pow(n: i64) -> C64 {
    match n.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

pub fn mie_solve(radius: f64, params: &ProblemParams, n_max: Option<usize>) -> Result<MieSolution> {
    params.validate()?;
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    if params.omega.im != 0.0 || params.omega.re <= 0.0 {
        return Err(Error::invalid(format!("the circle solution needs a real positive frequency, got {}", params.omega)));
    }
    let n_max = n_max.unwrap_or_else(|| default_n_max(radius, params));
    let (k0, k1) = (params.k0(), params.k1());
    let (z0, z1) = (k0 * radius, k1 * radius);
    let j0 = bessel_j_seq(n_max + 1, z0)?;
    let j1 = bessel_j_seq(n_max + 1, z1)?;
    let h0 = hankel1_seq(n_max + 1, z0)?;
    let dj0 = derivative_seq(&j0, z0);
    let dj1 = derivative_seq(&j1, z1);
    let dh0 = derivative_seq(&h0, z0);
    let (c0, c1) = (k0 / params.eps0, k1 / params.eps1);

    let mut a = vec![C64::new(0.0, 0.0); 2 * n_max + 1];
    let mut b = a.clone();
    for m in 0..=n_max {
        // Mode -m carries (-1)^m on every cylinder function and i^{-m} on the
        // incident term, so a_{-m} = (-1)^m a_m and b_{-m} = (-1)^m b_m.
        let inc = i_pow(m as i64);
        // [H, −J1; c0 H', −c1 J1'] [a; b] = −iⁿ [J0; c0 J0']
        let (m11, m12, m21, m22) = (h0[m], -j1[m], c0 * dh0[m], -c1 * dj1[m]);
        let (r1, r2) = (-inc * j0[m], -inc * c0 * dj0[m]);
        let det = m11 * m22 - m12 * m21;
        let scale = (m11.norm() * m22.norm()).max(m12.norm() * m21.norm());
        if !(det.norm() > 1e-14 * scale) {
            return Err(Error::NearResonance { omega: params.omega, pivot: det.norm() });
        }
        let am = (r1 * m22 - m12 * r2) / det;
        let bm = (m11 * r2 - m21 * r1) / det;
        a[n_max + m] = am;
        b[n_max + m] = bm;
        let sgn = if m % 2 == 0 { 1.0 } else { -1.0 };
        a[n_max - m] = sgn * am;
        b[n_max - m] = sgn * bm;
    }
    let djk1 = dj1.iter().take(n_max + 1).map(|d| k1 * d).collect();
    Ok(MieSolution { radius, n_max, k0, k1, eps0: params.eps0, eps1: params.eps1, a, b, jk1: j1[..=n_max].to_vec(), djk1 })
}

impl MieSolution {
    pub fn coeff_a(&self, n: i64) -> C64 {
        self.a[(n + self.n_max as i64) as usize]
    }

    pub fn coeff_b(&self, n: i64) -> C64 {
        self.b[(n + self.n_max as i64) as usize]
    }

    /// Boundary traces `u(θ)` and `q(θ) = (1/ε1) ∂u1/∂r` at polar angle `θ`.
    pub fn trace_at(&self, theta: f64) -> (C64, C64) {
        let mut u = self.b[self.n_max] * self.jk1[0];
        let mut dr = self.b[self.n_max] * self.djk1[0];
        for m in 1..=self.n_max {
            // b_{-m} J_{-m} = b_m J_m, so the pair sums to 2 b_m J_m cos(mθ).
            let c = 2.0 * (m as f64 * theta).cos();
            u += c * self.b[self.n_max + m] * self.jk1[m];
            dr += c * self.b[self.n_max + m] * self.djk1[m];
        }
        (u, dr / self.eps1)
    }

    /// Far-field pattern `F(θ)` with `u_sc ~ e^{i k0 r} / √r · F(θ)`.
    pub fn far_field(&self, theta: f64) -> C64 {
        let pre = (2.0 / (std::f64::consts::PI * self.k0)).sqrt() * C64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
        let mut s = C64::new(0.0, 0.0);
        for n in -(self.n_max as i64)..=(self.n_max as i64) {
            s += self.coeff_a(n) * i_pow(-n) * C64::from_polar(1.0, n as f64 * theta);
        }
        pre * s
    }

    /// `Σ (|a_n|² + Re(a_n conj(iⁿ))) / Σ |a_n|²`: zero for a lossless
    /// scatterer (scattered power equals extinguished power).
    pub fn energy_balance(&self) -> f64 {
        let mut bal = 0.0;
        let mut sc = 0.0;
        for n in -(self.n_max as i64)..=(self.n_max as i64) {
            let a = self.coeff_a(n);
            bal += a.norm_sqr() + (a * i_pow(n).conj()).re;
            sc += a.norm_sqr();
        }
        if sc == 0.0 {
            0.0
        } else {
            bal / sc
        }
    }
}

/// Exact traces `(u, q)` at the nodes of a grid on the same circle.
pub fn mie_trace(sol: &MieSolution, grid: &Grid) -> Result<(Vec<C64>, Vec<C64>)> {
    match grid.curve {
        Curve::Circle { radius } if (radius - sol.radius).abs() <= 1e-12 * sol.radius => {}
        _ => return Err(Error::invalid("grid does not lie on the circle of the reference solution")),
    }
    Ok(grid.t.iter().map(|&t| sol.trace_at(t)).unzip())
}

/// `‖[u; q] − [u_ref; q_ref]‖₂ / ‖[u_ref; q_ref]‖₂`.
pub fn relative_error(u: &[C64], q: &[C64], u_ref: &[C64], q_ref: &[C64]) -> f64 {
    let num: f64 = u.iter().zip(u_ref).chain(q.iter().zip(q_ref)).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = u_ref.iter().chain(q_ref).map(|v| v.norm_sqr()).sum();
    (num / den).sqrt()
}

/// The two circle eigenvalue conditions for mode `n`:
/// `c1 = −ε0 k1 H_n(k0 a) J_n'(k1 a) + ε1 k0 H_n'(k0 a) J_n(k1 a)` (true
/// transmission eigenvalues) and `c2 = H_n(k1 a) (J_n(k0 a) + α k0 J_n'(k0 a))`
/// (eigenvalues introduced by the formulation).
pub fn eigencondition(n: i32, omega: C64, radius: f64, eps0: f64, eps1: f64, alpha: C64) -> Result<(C64, C64)> {
    if omega.norm() == 0.0 {
        return Err(Error::invalid("eigencondition needs a nonzero frequency"));
    }
    let k0 = omega * eps0.sqrt();
    let k1 = omega * eps1.sqrt();
    let (z0, z1) = (k0 * radius, k1 * radius);
    let h0 = hankel1(n, z0)?;
    let c1 = -eps0 * k1 * h0.value * bessel_j_prime(n, z1)? + eps1 * k0 * h0.derivative * bessel_j(n, z1)?;
    let c2 = hankel1(n, z1)?.value * (bessel_j(n, z0)? + alpha * k0 * bessel_j_prime(n, z0)?);
    Ok((c1, c2))
}

#[derive(Clone, Debug)]
pub struct NewtonTrace {
    pub root: C64,
    pub iterates: Vec<C64>,
}

/// Zero of `H_n^{(1)}` near `seed` by Newton's method.
pub fn hankel_zero(n: i32, seed: C64) -> Result<C64> {
    Ok(hankel_zero_trace(n, seed)?.root)
}

pub fn hankel_zero_trace(n: i32, seed: C64) -> Result<NewtonTrace> {
    let mut z = seed;
    let mut iterates = vec![z];
    for _ in 0..50 {
        let h = hankel1(n, z)?;
        if h.derivative.norm() == 0.0 {
            break;
        }
        let step = h.value / h.derivative;
        z -= step;
        iterates.push(z);
        if step.norm() <= 1e-14 * z.norm().max(1.0) {
            if hankel1(n, z)?.value.norm() <= 1e-12 {
                return Ok(NewtonTrace { root: z, iterates });
            }
            break;
        }
    }
    Err(Error::NoConvergence(format!("Newton iteration for a zero of H_{n} from {seed} did not converge")))
}
