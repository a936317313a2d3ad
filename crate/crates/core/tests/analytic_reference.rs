//! The circle solution against a finite-difference solve of the radial ODE,
//! the optical theorem, truncation stability and the eigenvalue conditions.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use transbie::analytic_reference::{eigencondition, hankel_zero_trace, mie_solve, mie_trace, relative_error, MieSolution};
use transbie::direct_solver::solve_mixed_dense;
use transbie::geometry::{discretize, make_circle};
use transbie::quadrature::LOW_ORDER;
use transbie::special_functions::{bessel_j, bessel_j_prime, hankel1};
use transbie::systems::{assemble_operators, build_mixed, Formulation, IncidentField, ProblemParams};

fn params(omega: f64, eps1: f64) -> ProblemParams {
    ProblemParams::new(1.0, eps1, C64::new(omega, 0.0)).unwrap()
}

fn i_pow(n: i32) -> C64 {
    C64::new(0.0, 1.0).powi(n)
}

fn thomas(lo: &[C64], di: &[C64], up: &[C64], rhs: &[C64]) -> Vec<C64> {
    let m = di.len();
    let mut c = vec![C64::new(0.0, 0.0); m];
    let mut d = vec![C64::new(0.0, 0.0); m];
    c[0] = up[0] / di[0];
    d[0] = rhs[0] / di[0];
    for i in 1..m {
        let den = di[i] - lo[i] * c[i - 1];
        c[i] = if i + 1 < m { up[i] / den } else { C64::new(0.0, 0.0) };
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / den;
    }
    let mut x = d.clone();
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Mode `n ≥ 1` of `(1/r)(r a u')' − a n² u / r² + ω² u = 0` with `a = 1/ε`,
/// unit interface radius, regularity at 0 and the outgoing Dirichlet-to-Neumann
/// condition for the scattered part at `r = big_r`. Returns `(h, u at nodes)`.
fn radial_fd(n: i32, omega: f64, eps1: f64, big_r: f64, cells_per_unit: usize) -> (f64, Vec<C64>) {
    let m = (big_r * cells_per_unit as f64).round() as usize;
    let h = big_r / m as f64;
    let coef = |r: f64| if r < 1.0 { 1.0 / eps1 } else { 1.0 };
    let k0 = C64::new(omega, 0.0);
    let hk = hankel1(n, k0 * big_r).unwrap();
    let kappa = k0 * hk.derivative / hk.value;
    let g = i_pow(n) * (k0 * bessel_j_prime(n, k0 * big_r).unwrap() - kappa * bessel_j(n, k0 * big_r).unwrap());
    let nn = (n * n) as f64;
    // Unknowns u_1..u_m (u_0 = 0).
    let (mut lo, mut di, mut up, mut rhs) = (vec![C64::new(0.0, 0.0); m], vec![C64::new(0.0, 0.0); m], vec![C64::new(0.0, 0.0); m], vec![C64::new(0.0, 0.0); m]);
    for j in 1..=m {
        let r = j as f64 * h;
        let (rm, rp) = (r - 0.5 * h, r + 0.5 * h);
        let row = j - 1;
        if j < m {
            // Control volume [r − h/2, r + h/2]; the node coefficient is the
            // cell average so the interface node stays second order.
            let a_node = 0.5 * (coef(rm) + coef(rp));
            let vol = r * h;
            lo[row] = C64::new(rm * coef(rm) / h / vol, 0.0);
            up[row] = C64::new(rp * coef(rp) / h / vol, 0.0);
            di[row] = C64::new(-(rm * coef(rm) + rp * coef(rp)) / h / vol - a_node * nn / (r * r) + omega * omega, 0.0);
        } else {
            // Half volume [R − h/2, R] with the flux R u'(R) = R (κ u + g).
            let vol = 0.5 * h * (r - 0.25 * h);
            let a = coef(r);
            lo[row] = C64::new(rm * a / h / vol, 0.0);
            di[row] = C64::new(-rm * a / h / vol - a * nn / (r * r) + omega * omega, 0.0) + r * a * kappa / vol;
            rhs[row] = -r * a * g / vol;
        }
    }
    let mut u = vec![C64::new(0.0, 0.0)];
    u.extend(thomas(&lo, &di, &up, &rhs));
    (h, u)
}

fn mie_radial(sol: &MieSolution, n: i32, r: f64) -> C64 {
    if r < 1.0 {
        sol.coeff_b(n as i64) * bessel_j(n, sol.k1 * r).unwrap()
    } else {
        i_pow(n) * bessel_j(n, sol.k0 * r).unwrap() + sol.coeff_a(n as i64) * hankel1(n, sol.k0 * r).unwrap().value
    }
}

#[test]
fn modes_match_radial_finite_differences() {
    let (omega, eps1) = (1.0, 2.0);
    let sol = mie_solve(1.0, &params(omega, eps1), None).unwrap();
    for n in [1, 2] {
        let mut prev = None;
        for cells in [400, 800, 1600] {
            let (h, u) = radial_fd(n, omega, eps1, 2.0, cells);
            let mut num = 0.0;
            let mut den = 0.0;
            for (j, v) in u.iter().enumerate().skip(1) {
                let want = mie_radial(&sol, n, j as f64 * h);
                num += (v - want).norm_sqr();
                den += want.norm_sqr();
            }
            let e = (num / den).sqrt();
            eprintln!("n={n} cells={cells} err={e:.3e}");
            assert!(e < 1e-3, "n={n}: {e}");
            if let Some(p) = prev {
                let ratio: f64 = p / e;
                assert!(ratio > 3.0, "n={n}: error ratio {ratio}");
            }
            prev = Some(e);
        }
    }
}

#[test]
fn lossless_scatterer_conserves_energy() {
    for (omega, eps1) in [(1.0, 2.0), (2.0, 5.0), (10.0, 10.0), (0.3, 0.5)] {
        let s = mie_solve(1.0, &params(omega, eps1), None).unwrap();
        assert!(s.energy_balance().abs() < 1e-10, "ω={omega} ε1={eps1}: {}", s.energy_balance());
    }
}

#[test]
fn doubling_truncation_leaves_traces_unchanged() {
    let g = discretize(&make_circle(1.0).unwrap(), 64).unwrap();
    for (omega, eps1) in [(1.0, 2.0), (6.0, 4.0), (12.0, 1.0), (4.0, 9.0)] {
        let p = params(omega, eps1);
        let s1 = mie_solve(1.0, &p, None).unwrap();
        let s2 = mie_solve(1.0, &p, Some(2 * s1.n_max)).unwrap();
        let (u1, q1) = mie_trace(&s1, &g).unwrap();
        let (u2, q2) = mie_trace(&s2, &g).unwrap();
        let e = relative_error(&u1, &q1, &u2, &q2);
        assert!(e <= 1e-13, "ω={omega} ε1={eps1}: {e}");
    }
}

#[test]
fn coefficients_decay_at_truncation() {
    // Interior modes are compared through their trace b_n J_n(k1 a): b_n alone
    // only decays like (k0/k1)^n and equals iⁿ in a homogeneous medium.
    for (omega, eps1) in [(1.0, 2.0), (2.0, 5.0), (10.0, 10.0), (3.0, 1.0)] {
        let s = mie_solve(1.0, &params(omega, eps1), None).unwrap();
        let nm = s.n_max as i64;
        let amax = s.a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let bj = |n: i64| (s.coeff_b(n) * bessel_j(n as i32, s.k1).unwrap()).norm();
        let bmax = (-nm..=nm).map(bj).fold(0.0, f64::max);
        for n in [-nm, nm] {
            assert!(s.coeff_a(n).norm() <= 1e-14 * amax.max(bmax), "ω={omega} ε1={eps1}");
            assert!(bj(n) <= 1e-14 * bmax, "ω={omega} ε1={eps1}");
        }
    }
}

#[test]
fn trace_is_periodic_and_self_error_is_zero() {
    let s = mie_solve(1.0, &params(2.0, 5.0), None).unwrap();
    for t in [0.0, 0.3, 1.7, 4.0] {
        let (a, b) = (s.trace_at(t), s.trace_at(t + 2.0 * PI));
        assert!((a.0 - b.0).norm() <= 1e-12 * a.0.norm().max(1.0));
        assert!((a.1 - b.1).norm() <= 1e-12 * a.1.norm().max(1.0));
    }
    let g = discretize(&make_circle(1.0).unwrap(), 32).unwrap();
    let (u, q) = mie_trace(&s, &g).unwrap();
    assert_eq!(relative_error(&u, &q, &u, &q), 0.0);
    let other = discretize(&make_circle(2.0).unwrap(), 32).unwrap();
    assert!(mie_trace(&s, &other).is_err());
}

#[test]
fn traces_satisfy_transmission_conditions() {
    // Exterior trace and flux evaluated from the exterior expansion.
    let (omega, eps1) = (2.0, 5.0);
    let s = mie_solve(1.0, &params(omega, eps1), None).unwrap();
    let k0 = s.k0;
    for t in [0.0, 0.9, 2.5] {
        let mut u0 = C64::new(0.0, 0.0);
        let mut du0 = C64::new(0.0, 0.0);
        for n in -(s.n_max as i32)..=(s.n_max as i32) {
            let e = C64::from_polar(1.0, n as f64 * t);
            let h = hankel1(n, k0).unwrap();
            u0 += (i_pow(n) * bessel_j(n, k0).unwrap() + s.coeff_a(n as i64) * h.value) * e;
            du0 += k0 * (i_pow(n) * bessel_j_prime(n, k0).unwrap() + s.coeff_a(n as i64) * h.derivative) * e;
        }
        let (u, q) = s.trace_at(t);
        assert!((u - u0).norm() < 1e-12 * u.norm().max(1.0));
        assert!((q - du0 / s.eps0).norm() < 1e-12 * q.norm().max(1.0));
    }
}

#[test]
fn formulation_eigencondition_vanishes_at_hankel_zero() {
    let (a, eps1) = (0.5, 4.0);
    let alpha = C64::new(0.3, 0.1);
    for (n, z) in [(2, C64::new(0.429_484_965_2, -1.281_373_797_7)), (3, C64::new(1.308_012_032_3, -1.681_788_804_7))] {
        let (_, c2) = eigencondition(n, z, a, 1.0, eps1, alpha).unwrap();
        let (_, c2_off) = eigencondition(n, z + C64::new(0.05, 0.0), a, 1.0, eps1, alpha).unwrap();
        assert!(c2.norm() < 1e-8 * c2_off.norm(), "n={n}: {} vs {}", c2.norm(), c2_off.norm());
        let (_, c2m) = eigencondition(-n, z, a, 1.0, eps1, alpha).unwrap();
        assert!(c2m.norm() < 1e-8 * c2_off.norm());
        for w in [C64::new(0.7, -0.2), C64::new(1.9, -0.6)] {
            let p = eigencondition(n, w, a, 1.0, eps1, alpha).unwrap().1.norm();
            let m = eigencondition(-n, w, a, 1.0, eps1, alpha).unwrap().1.norm();
            assert!((p - m).abs() <= 1e-12 * p);
        }
    }
}

#[test]
fn transmission_condition_is_scaled_mode_determinant() {
    let (a, eps0, eps1) = (0.8, 1.3, 3.0);
    for (n, w) in [(0, C64::new(1.1, 0.0)), (2, C64::new(2.3, -0.4)), (5, C64::new(0.6, 0.2))] {
        let (c1, _) = eigencondition(n, w, a, eps0, eps1, C64::new(0.0, 1.0)).unwrap();
        let (k0, k1) = (w * eps0.sqrt(), w * eps1.sqrt());
        let h = hankel1(n, k0 * a).unwrap();
        let j1 = bessel_j(n, k1 * a).unwrap();
        let dj1 = bessel_j_prime(n, k1 * a).unwrap();
        // [H, −J1; (k0/ε0) H', −(k1/ε1) J1']
        let det = -h.value * (k1 / eps1) * dj1 + j1 * (k0 / eps0) * h.derivative;
        assert!((c1 - eps0 * eps1 * det).norm() <= 1e-12 * c1.norm());
    }
}

#[test]
fn homogeneous_transmission_condition_is_a_wronskian() {
    for (n, w) in [(0, 0.7), (1, 2.0), (4, 5.5)] {
        let (c1, _) = eigencondition(n, C64::new(w, 0.0), 1.0, 2.0, 2.0, C64::new(0.0, 1.0)).unwrap();
        let k0 = w * 2f64.sqrt();
        let want = C64::new(0.0, 2.0 * 2.0 * k0 / (PI * k0));
        assert!((c1 - want).norm() <= 1e-12 * want.norm(), "{c1} vs {want}");
        assert!(c1.norm() > 0.0);
    }
}

#[test]
fn hankel_newton_converges_quadratically() {
    for (n, seed, want) in [(2, C64::new(0.4, -1.3), C64::new(0.429_484_965_2, -1.281_373_797_7)), (3, C64::new(1.3, -1.7), C64::new(1.308_012_032_3, -1.681_788_804_7))] {
        let tr = hankel_zero_trace(n, seed).unwrap();
        assert!((tr.root - want).norm() < 1e-9);
        let errs: Vec<f64> = tr.iterates.iter().map(|z| (z - tr.root).norm()).filter(|&e| e > 1e-12).collect();
        assert!(errs.len() >= 3, "{errs:?}");
        for w in errs.windows(2) {
            assert!(w[1] <= 10.0 * w[0] * w[0], "{errs:?}");
        }
    }
}

#[test]
fn dense_solve_at_3200_agrees_with_circle_solution() {
    let n = 3200;
    let g = discretize(&make_circle(1.0).unwrap(), n).unwrap();
    let p = params(1.0, 2.0);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let (s, _) = solve_mixed_dense(build_mixed(&p, &ops, &ui, &qi).unwrap()).unwrap();
    let (ue, qe) = mie_trace(&mie_solve(1.0, &p, None).unwrap(), &g).unwrap();
    let e = relative_error(&s.u, &s.q, &ue, &qe);
    assert!(e <= 1e-3, "{e}");
}
