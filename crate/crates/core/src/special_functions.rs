//! Integer-order Bessel and Hankel functions of complex argument.
//!
//! For `|z| <= 20` the `J_n` sequence comes from Miller's backward recurrence
//! normalized with the generating function `e^{∓iz} = Σ (∓i)^n J_n(z)`; the
//! same pass accumulates the Neumann series giving `Y_0` and `Y_1`. Beyond that
//! radius `H^{(1)}_{0,1}` and `H^{(2)}_{0,1}` come from the Hankel asymptotic
//! expansion, whose smallest term is about `e^{-2|z|}`. Higher `Y_n`, `H_n` use
//! upward recurrence, which is stable for those solutions.
//!
//! All functions are pure and allocation is limited to the sequence variants.

use num_complex::Complex64 as C64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest supported `|z|`.
pub const MAX_ARG: f64 = 1e4;
/// Smallest `|z|` for which `Y_n` and `H_n` are evaluated.
pub const MIN_SINGULAR_ARG: f64 = 1e-8;

const ASYMPTOTIC_RADIUS: f64 = 20.0;
const RESCALE_AT: f64 = 1e100;

/// Value and first derivative of `H_n^{(1)}(z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HankelValue {
    pub order: i32,
    pub arg: C64,
    pub value: C64,
    pub derivative: C64,
}

/// `J_0, J_1, J_2, Y_0, Y_1` at one argument, as needed by the layer kernels.
#[derive(Clone, Copy, Debug)]
pub struct Cyl01 {
    pub j0: C64,
    pub j1: C64,
    pub j2: C64,
    pub y0: C64,
    pub y1: C64,
}

impl Cyl01 {
    #[inline]
    pub fn h0(&self) -> C64 {
        self.j0 + C64::i() * self.y0
    }
    #[inline]
    pub fn h1(&self) -> C64 {
        self.j1 + C64::i() * self.y1
    }
}

fn check_range(func: &'static str, z: C64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() || z.norm() >= MAX_ARG {
        return Err(Error::Domain { func, z });
    }
    Ok(())
}

fn check_singular(func: &'static str, z: C64) -> Result<()> {
    check_range(func, z)?;
    if z.norm() < MIN_SINGULAR_ARG {
        return Err(Error::Domain { func, z });
    }
    Ok(())
}

#[inline]
fn sign(n: i32) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Output of one Miller pass: scaled `J_0..J_{out.len()-1}` are written into the
/// caller's buffer; the Neumann sums are returned already scaled.
struct MillerSums {
    even: C64,
    odd: C64,
}

/// Backward recurrence for `J_n(z)`, `n = 0..out.len()`. Requires `z != 0`.
fn miller(z: C64, out: &mut [C64]) -> MillerSums {
    let nmax = out.len().saturating_sub(1);
    let az = z.norm();
    let start = nmax.max(az.ceil() as usize) + 32 + (az.sqrt() * 2.0) as usize;
    let two_over_z = 2.0 / z;

    // e^{-iz} for Im z >= 0, e^{iz} otherwise; both have modulus >= 1.
    let s = if z.im >= 0.0 { -C64::i() } else { C64::i() };
    let target = (s * z).exp();
    // s^n for n = start, tracked downward through multiplication by 1/s = conj(s).
    let mut spow = s.powu(start as u32 % 4);
    let sinv = s.conj();

    let mut f_next = C64::new(0.0, 0.0);
    let mut f = C64::new(1e-30, 0.0);
    let mut norm = C64::new(0.0, 0.0);
    let mut even = C64::new(0.0, 0.0);
    let mut odd = C64::new(0.0, 0.0);

    let mut n = start;
    loop {
        if n <= nmax {
            out[n] = f;
        }
        if n == 0 {
            norm += f;
        } else {
            norm += 2.0 * spow * f;
            if n.is_multiple_of(2) {
                let k = (n / 2) as f64;
                even += sign((n / 2) as i32) * f / k;
            } else {
                // f_{2k-1} enters with (-1)^k/k, f_{2k+1} with -(-1)^k/k
                let kp = n.div_ceil(2) as f64;
                let mut c = sign(n.div_ceil(2) as i32) / kp;
                if n >= 3 {
                    let km = ((n - 1) / 2) as f64;
                    c -= sign(((n - 1) / 2) as i32) / km;
                }
                odd += c * f;
            }
        }
        if n == 0 {
            break;
        }
        let f_prev = two_over_z * (n as f64) * f - f_next;
        f_next = f;
        f = f_prev;
        spow *= sinv;
        n -= 1;
        if f.norm() > RESCALE_AT {
            let r = 1.0 / RESCALE_AT;
            f *= r;
            f_next *= r;
            norm *= r;
            even *= r;
            odd *= r;
            for v in out.iter_mut().skip(n + 1).take(nmax.saturating_sub(n)) {
                *v *= r;
            }
        }
    }
    let scale = target / norm;
    for v in out.iter_mut() {
        *v *= scale;
    }
    MillerSums { even: even * scale, odd: odd * scale }
}

/// `Y_0, Y_1` from the Neumann series using `J_0, J_1` and the Miller sums.
fn neumann_y01(z: C64, j0: C64, j1: C64, sums: &MillerSums) -> (C64, C64) {
    let lg = (z * 0.5).ln() + EULER_GAMMA;
    let y0 = (lg * j0 - 2.0 * sums.even) / FRAC_PI_2;
    let y1 = (-j0 / z + lg * j1 + sums.odd) / FRAC_PI_2;
    (y0, y1)
}

/// Hankel asymptotic expansion of `H^{(1)}_ν` and `H^{(2)}_ν`, ν ∈ {0, 1},
/// valid for `|z| > 20`, `Re z >= 0`.
fn hankel_asymptotic(nu: i32, z: C64) -> (C64, C64) {
    let mu = 4.0 * (nu * nu) as f64;
    let chi = z - (nu as f64) * FRAC_PI_2 - FRAC_PI_4;
    let pre = (2.0 / (PI * z)).sqrt();
    let mut sum1 = C64::new(1.0, 0.0);
    let mut sum2 = C64::new(1.0, 0.0);
    let mut term = C64::new(1.0, 0.0);
    let mut ipow = C64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (8.0 * k as f64 * z);
        let mag = term.norm();
        if mag == 0.0 || mag > last {
            break;
        }
        ipow *= C64::i();
        sum1 += ipow * term;
        sum2 += ipow.conj() * term;
        last = mag;
        if mag < 1e-17 {
            break;
        }
    }
    let e = (C64::i() * chi).exp();
    (pre * e * sum1, pre / e * sum2)
}

/// `J_0, J_1, Y_0, Y_1` in the asymptotic region, any sign of `Re z`.
fn asymptotic_jy01(z: C64) -> [C64; 4] {
    if z.re >= 0.0 {
        let (a0, b0) = hankel_asymptotic(0, z);
        let (a1, b1) = hankel_asymptotic(1, z);
        let half_i = 0.5 / C64::i();
        [(a0 + b0) * 0.5, (a1 + b1) * 0.5, (a0 - b0) * half_i, (a1 - b1) * half_i]
    } else {
        // z = w e^{±iπ} with Re w > 0 on the principal branch.
        let [j0, j1, y0, y1] = asymptotic_jy01(-z);
        let m = if z.im >= 0.0 { 1.0 } else { -1.0 };
        let two_i = C64::new(0.0, 2.0 * m);
        [j0, -j1, y0 + two_i * j0, -(y1 + two_i * j1)]
    }
}

/// Kernel-oriented evaluation of `J_0, J_1, J_2, Y_0, Y_1`.
///
/// Skips range checks; callers guarantee `1e-8 <= |z| < 1e4`.
pub fn cyl01(z: C64) -> Cyl01 {
    if z.norm() > ASYMPTOTIC_RADIUS {
        let [j0, j1, y0, y1] = asymptotic_jy01(z);
        Cyl01 { j0, j1, j2: 2.0 * j1 / z - j0, y0, y1 }
    } else {
        let mut j = [C64::new(0.0, 0.0); 3];
        let sums = miller(z, &mut j);
        let (y0, y1) = neumann_y01(z, j[0], j[1], &sums);
        Cyl01 { j0: j[0], j1: j[1], j2: j[2], y0, y1 }
    }
}

/// `J_0(z), ..., J_nmax(z)`.
pub fn bessel_j_seq(nmax: usize, z: C64) -> Result<Vec<C64>> {
    check_range("bessel_j", z)?;
    let mut out = vec![C64::new(0.0, 0.0); nmax + 1];
    if z.norm() < MIN_SINGULAR_ARG {
        // Leading two terms of the ascending series are exact to rounding here.
        let hz = z * 0.5;
        let mut lead = C64::new(1.0, 0.0);
        for (n, v) in out.iter_mut().enumerate() {
            if n > 0 {
                lead = lead * hz / n as f64;
            }
            *v = lead * (1.0 - hz * hz / (n + 1) as f64);
        }
        return Ok(out);
    }
    miller(z, &mut out);
    Ok(out)
}

/// `Y_0(z), ..., Y_nmax(z)`.
pub fn bessel_y_seq(nmax: usize, z: C64) -> Result<Vec<C64>> {
    check_singular("bessel_y", z)?;
    let (y0, y1) = if z.norm() > ASYMPTOTIC_RADIUS {
        let r = asymptotic_jy01(z);
        (r[2], r[3])
    } else {
        let mut j = [C64::new(0.0, 0.0); 2];
        let sums = miller(z, &mut j);
        neumann_y01(z, j[0], j[1], &sums)
    };
    Ok(upward(nmax, z, y0, y1))
}

/// `H^{(1)}_0(z), ..., H^{(1)}_nmax(z)`.
pub fn hankel1_seq(nmax: usize, z: C64) -> Result<Vec<C64>> {
    check_singular("hankel1", z)?;
    let (h0, h1) = if z.norm() > ASYMPTOTIC_RADIUS {
        let r = asymptotic_jy01(z);
        (r[0] + C64::i() * r[2], r[1] + C64::i() * r[3])
    } else {
        let mut j = [C64::new(0.0, 0.0); 2];
        let sums = miller(z, &mut j);
        let (y0, y1) = neumann_y01(z, j[0], j[1], &sums);
        (j[0] + C64::i() * y0, j[1] + C64::i() * y1)
    };
    Ok(upward(nmax, z, h0, h1))
}

fn upward(nmax: usize, z: C64, f0: C64, f1: C64) -> Vec<C64> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(f0);
    if nmax >= 1 {
        out.push(f1);
    }
    let two_over_z = 2.0 / z;
    for n in 1..nmax {
        let next = two_over_z * (n as f64) * out[n] - out[n - 1];
        out.push(next);
    }
    out
}

/// Derivatives `f_n'` from a sequence `f_0..f_nmax` of cylinder functions.
pub fn derivative_seq(f: &[C64], z: C64) -> Vec<C64> {
    let nmax = f.len() - 1;
    let mut d = Vec::with_capacity(f.len());
    for n in 0..=nmax {
        if n == 0 {
            // f_0' = -f_1; one extra upward step is not available for the last
            // element so the recurrence form is used there.
            d.push(if nmax >= 1 { -f[1] } else { C64::new(f64::NAN, f64::NAN) });
        } else {
            d.push(f[n - 1] - (n as f64) / z * f[n]);
        }
    }
    d
}

fn with_negative<F>(n: i32, z: C64, seq: F) -> Result<C64>
where
    F: Fn(usize, C64) -> Result<Vec<C64>>,
{
    let m = n.unsigned_abs() as usize;
    let v = seq(m, z)?[m];
    Ok(if n < 0 { sign(n) * v } else { v })
}

pub fn bessel_j(n: i32, z: C64) -> Result<C64> {
    with_negative(n, z, bessel_j_seq)
}

pub fn bessel_y(n: i32, z: C64) -> Result<C64> {
    with_negative(n, z, bessel_y_seq)
}

/// `J_n'(z)` for any integer order.
pub fn bessel_j_prime(n: i32, z: C64) -> Result<C64> {
    let m = n.unsigned_abs() as usize;
    let seq = bessel_j_seq(m + 1, z)?;
    let d = if m == 0 { -seq[1] } else { 0.5 * (seq[m - 1] - seq[m + 1]) };
    Ok(if n < 0 { sign(n) * d } else { d })
}

/// `H_n^{(1)}(z)` with its derivative `H_n' = H_{n-1} - (n/z) H_n`.
pub fn hankel1(n: i32, z: C64) -> Result<HankelValue> {
    let m = n.unsigned_abs() as usize;
    let seq = hankel1_seq(m.max(1), z)?;
    let (value, derivative) = if m == 0 {
        (seq[0], -seq[1])
    } else {
        (seq[m], seq[m - 1] - (m as f64) / z * seq[m])
    };
    let s = if n < 0 { sign(n) } else { 1.0 };
    Ok(HankelValue { order: n, arg: z, value: s * value, derivative: s * derivative })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Ascending power series for J_n, summed until terms stop contributing.
    fn j_series(n: u32, z: C64) -> C64 {
        let hz = z * 0.5;
        let mut term = C64::new(1.0, 0.0);
        for k in 1..=n {
            term = term * hz / k as f64;
        }
        let mut sum = term;
        let q = -hz * hz;
        for k in 1..400 {
            term = term * q / (k as f64 * (k + n) as f64);
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    }

    #[test]
    fn j0_at_one() {
        let v = bessel_j(0, c(1.0, 0.0)).unwrap();
        assert!((v.re - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
        assert_eq!(bessel_j(0, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn matches_power_series_small_arguments() {
        for &z in &[c(0.3, 0.0), c(1.0, 0.5), c(2.5, -1.2), c(6.0, 3.0), c(0.01, -0.02)] {
            for n in 0..6 {
                let a = bessel_j(n, z).unwrap();
                let b = j_series(n as u32, z);
                assert!((a - b).norm() <= 1e-13 * b.norm().max(1e-300), "n={n} z={z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hankel_at_one() {
        let h = hankel1(0, c(1.0, 0.0)).unwrap().value;
        assert!((h.re - 0.765_197_686_6).abs() < 1e-10);
        assert!((h.im - 0.088_256_964_2).abs() < 1e-10);
    }

    #[test]
    fn negative_order_parity() {
        let z = c(1.0, 0.5);
        let a = bessel_j(-2, z).unwrap();
        let b = bessel_j(2, z).unwrap();
        assert!((a - b).norm() < 1e-15);
        let a = hankel1(-3, z).unwrap().value;
        let b = hankel1(3, z).unwrap().value;
        assert!((a + b).norm() < 1e-14 * b.norm());
    }

    #[test]
    fn real_argument_gives_real_j_and_y() {
        for &x in &[0.2, 3.7, 11.9, 12.1, 19.9, 20.1, 44.0] {
            let z = c(x, 0.0);
            for n in 0..4 {
                let j = bessel_j(n, z).unwrap();
                let y = bessel_y(n, z).unwrap();
                assert!(j.im.abs() < 1e-14 * j.norm().max(1.0));
                assert!(y.im.abs() < 1e-14 * y.norm().max(1.0));
            }
        }
    }

    #[test]
    fn both_sides_of_asymptotic_switch_agree() {
        for &z in &[c(19.999, 0.0), c(14.0, -13.99), c(-19.999, 0.3), c(19.4, 4.85)] {
            let s = z * (20.001 / 19.999);
            for n in 0..3 {
                let a = hankel1(n, z).unwrap();
                let b = hankel1(n, s).unwrap();
                // second-order Taylor step across the switch using Bessel's equation
                let nf = n as f64;
                let h2 = -a.derivative / z - (1.0 - nf * nf / (z * z)) * a.value;
                let dz = s - z;
                let pred = a.value + a.derivative * dz + 0.5 * h2 * dz * dz;
                assert!((pred - b.value).norm() < 1e-8 * b.value.norm(), "n={n} z={z}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(hankel1(0, c(0.0, 0.0)).is_err());
        assert!(bessel_y(1, c(1e-9, 0.0)).is_err());
        assert!(bessel_j(0, c(2e4, 0.0)).is_err());
        assert!(bessel_j(0, c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn cyl01_matches_public_api() {
        for &z in &[c(0.05, 0.0), c(3.0, -1.0), c(25.0, 2.0), c(-30.0, -1.0)] {
            let k = cyl01(z);
            let j = bessel_j_seq(2, z).unwrap();
            let y = bessel_y_seq(1, z).unwrap();
            for (a, b) in [(k.j0, j[0]), (k.j1, j[1]), (k.j2, j[2]), (k.y0, y[0]), (k.y1, y[1])] {
                assert!((a - b).norm() <= 1e-12 * b.norm());
            }
        }
    }

    #[test]
    fn large_order_small_argument_is_finite() {
        let j = bessel_j(40, c(0.5, 0.1)).unwrap();
        assert!(j.norm() > 0.0 && j.norm() < 1e-60);
        let y = bessel_y(40, c(0.5, 0.1)).unwrap();
        assert!(y.norm().is_finite() && y.norm() > 1e60);
    }

    #[test]
    fn tiny_arguments_do_not_overflow_normalization() {
        for x in [1e-7, 1e-5, 1e-4, 1e-3] {
            let z = c(x, 0.0);
            let v = cyl01(z);
            assert!((v.j0 - (1.0 - x * x / 4.0)).norm() < 1e-13, "x={x} {v:?}");
            assert!((v.j1.re - (x / 2.0 - x.powi(3) / 16.0)).abs() < 1e-12 * x);
            let y0 = (2.0 / PI) * (((x / 2.0).ln() + EULER_GAMMA) * (1.0 - x * x / 4.0) + x * x / 4.0);
            assert!((v.y0.re - y0).abs() < 1e-13, "x={x} y0={}", v.y0);
            let y1 = -2.0 / (PI * x) + x / PI * ((x / 2.0).ln() + EULER_GAMMA - 0.5);
            assert!((v.y1.re - y1).abs() < 1e-12 * y1.abs(), "x={x} y1={}", v.y1);
        }
    }
}
