use num_complex::Complex64 as C64;
use transbie::analytic_reference::{mie_solve, mie_trace, relative_error};
use transbie::direct_solver::{factor_mixed, factor_ordinary, solve_mixed_dense, solve_ordinary_dense};
use transbie::geometry::{discretize, make_circle, Curve, Grid};
use transbie::linalg::{matvec, rel_err};
use transbie::quadrature::LOW_ORDER;
use transbie::systems::{assemble_operators, build_mixed, build_ordinary, Formulation, IncidentField, ProblemParams};

fn setup(n: usize, omega: f64, eps1: f64) -> (Grid, ProblemParams) {
    let g = discretize(&make_circle(1.0).unwrap(), n).unwrap();
    (g, ProblemParams::new(1.0, eps1, C64::new(omega, 0.0)).unwrap())
}

fn both_errors(n: usize, omega: f64, eps1: f64) -> (f64, f64) {
    let (g, p) = setup(n, omega, eps1);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed, Formulation::Ordinary]).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let mie = mie_solve(1.0, &p, None).unwrap();
    let (ue, qe) = mie_trace(&mie, &g).unwrap();
    let (sm, _) = solve_mixed_dense(build_mixed(&p, &ops, &ui, &qi).unwrap()).unwrap();
    let (uo, qo, _) = solve_ordinary_dense(&build_ordinary(&p, &ops, &ui, &qi).unwrap()).unwrap();
    (relative_error(&sm.u, &sm.q, &ue, &qe), relative_error(&uo, &qo, &ue, &qe))
}

#[test]
fn mixed_and_ordinary_converge_to_circle_solution() {
    let mut prev: Option<(f64, f64)> = None;
    for n in [100, 200, 400] {
        let (em, eo) = both_errors(n, 1.0, 2.0);
        eprintln!("N={n} mixed {em:.3e} ordinary {eo:.3e}");
        assert!(em < 0.05 && eo < 0.05);
        assert!(em / eo < 3.0 && eo / em < 3.0);
        if let Some((pm, po)) = prev {
            assert!(pm / em > 1.6 && po / eo > 1.6, "{pm} -> {em}, {po} -> {eo}");
        }
        prev = Some((em, eo));
    }
}

#[test]
fn formulations_agree_at_n800() {
    let (g, p) = setup(800, 2.0, 5.0);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed, Formulation::Ordinary]).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let (ue, qe) = mie_trace(&mie_solve(1.0, &p, None).unwrap(), &g).unwrap();
    let (sm, _) = solve_mixed_dense(build_mixed(&p, &ops, &ui, &qi).unwrap()).unwrap();
    let (uo, qo, _) = solve_ordinary_dense(&build_ordinary(&p, &ops, &ui, &qi).unwrap()).unwrap();
    let disc = relative_error(&sm.u, &sm.q, &ue, &qe);
    let diff = relative_error(&sm.u, &sm.q, &uo, &qo);
    assert!(diff <= 10.0 * disc, "difference {diff}, discretization error {disc}");
}

#[test]
fn homogeneous_medium_reproduces_incident_traces() {
    // With ε1 = ε0 the total field is the incident one: u = u_in, q = q_in / ε0.
    let curve = Curve::Fourier { cos: vec![1.0, 0.0, 0.1], sin: vec![0.05] };
    let g = discretize(&curve, 256).unwrap();
    let p = ProblemParams::new(1.5, 1.5, C64::new(1.3, 0.0)).unwrap();
    for inc in [IncidentField::PlaneWave { direction: [0.6, 0.8] }, IncidentField::PointSource { location: [2.5, -0.4] }] {
        let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
        let (ui, qi) = inc.evaluate(p.k0(), &g).unwrap();
        let (s, _) = solve_mixed_dense(build_mixed(&p, &ops, &ui, &qi).unwrap()).unwrap();
        let q_want: Vec<C64> = qi.iter().map(|v| v / p.eps0).collect();
        let e = relative_error(&s.u, &s.q, &ui, &q_want);
        assert!(e < 1e-2, "{inc:?}: {e}");
    }
}

#[test]
fn zero_incident_gives_zero_solution() {
    let (g, p) = setup(64, 1.0, 2.0);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed, Formulation::Ordinary]).unwrap();
    let z = vec![C64::new(0.0, 0.0); 64];
    let (s, _) = solve_mixed_dense(build_mixed(&p, &ops, &z, &z).unwrap()).unwrap();
    assert!(s.u.iter().chain(&s.q).chain(&s.phi).all(|v| v.norm() == 0.0));
    let (u, q, _) = solve_ordinary_dense(&build_ordinary(&p, &ops, &z, &z).unwrap()).unwrap();
    assert!(u.iter().chain(&q).all(|v| v.norm() == 0.0));
}

#[test]
fn solutions_scale_linearly_with_the_incident_field() {
    let (g, p) = setup(96, 2.0, 5.0);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed, Formulation::Ordinary]).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let alpha = C64::new(-0.3, 2.2);
    let (ua, qa): (Vec<C64>, Vec<C64>) = (ui.iter().map(|v| alpha * v).collect(), qi.iter().map(|v| alpha * v).collect());
    let m1 = factor_mixed(build_mixed(&p, &ops, &ui, &qi).unwrap()).unwrap();
    let b1 = build_mixed(&p, &ops, &ui, &qi).unwrap().b3;
    let b2 = build_mixed(&p, &ops, &ua, &qa).unwrap().b3;
    let (s1, s2) = (m1.solve(&b1).unwrap(), m1.solve(&b2).unwrap());
    let scaled: Vec<C64> = s1.u.iter().chain(&s1.q).map(|v| alpha * v).collect();
    let got: Vec<C64> = s2.u.iter().chain(&s2.q).copied().collect();
    assert!(rel_err(&got, &scaled) < 1e-12);

    let o1 = build_ordinary(&p, &ops, &ui, &qi).unwrap();
    let o2 = build_ordinary(&p, &ops, &ua, &qa).unwrap();
    let f = factor_ordinary(&o1).unwrap();
    let (u1, q1) = f.solve(&o1.rhs).unwrap();
    let (u2, q2) = f.solve(&o2.rhs).unwrap();
    let scaled: Vec<C64> = u1.iter().chain(&q1).map(|v| alpha * v).collect();
    let got: Vec<C64> = u2.iter().chain(&q2).copied().collect();
    assert!(rel_err(&got, &scaled) < 1e-12);
}

#[test]
fn representation_rows_hold_after_solve() {
    let (g, p) = setup(128, 1.0, 2.0);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let (s, _) = solve_mixed_dense(build_mixed(&p, &ops, &ui, &qi).unwrap()).unwrap();
    let u = matvec(ops.s1.as_ref(), &s.phi);
    let ds = matvec(ops.ds1.as_ref().unwrap().as_ref(), &s.phi);
    let q: Vec<C64> = ds.iter().zip(&s.phi).map(|(a, f)| (a + 0.5 * f) / p.eps1).collect();
    assert!(rel_err(&s.u, &u) < 1e-12);
    assert!(rel_err(&s.q, &q) < 1e-12);
}

#[test]
fn full_system_residual_is_small() {
    let (g, p) = setup(64, 1.0, 2.0);
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let sys = build_mixed(&p, &ops, &ui, &qi).unwrap();
    let f = factor_mixed(sys.clone()).unwrap();
    let s = f.solve(&sys.b3).unwrap();
    let [r1, r2, r3] = sys.apply(&s.u, &s.q, &s.phi).unwrap();
    let res: Vec<C64> = r1.into_iter().chain(r2).chain(r3).collect();
    assert!(rel_err(&res, &sys.full_rhs()) < 1e-10);
}

/// Fourier multiplier `(1 + |m|)^pw` on an equispaced periodic grid.
fn sobolev_weight(n: usize, pw: f64) -> faer::Mat<C64> {
    faer::Mat::from_fn(n, n, |i, j| {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..n {
            let m = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let phase = 2.0 * std::f64::consts::PI * m * (i as f64 - j as f64) / n as f64;
            s += (1.0 + m.abs()).powf(pw) * C64::from_polar(1.0, phase);
        }
        s / n as f64
    })
}

#[test]
fn smallest_singular_value_stays_bounded_at_real_frequency() {
    // The trace u lives one derivative above q and φ, so the u block is measured
    // in a discrete H¹ norm; in the plain Euclidean norm σ_min decays like 1/N
    // through u ~ 1/m near the Nyquist mode.
    let mut sig = Vec::new();
    for n in [32, 64, 128] {
        let (g, p) = setup(n, 2.0, 5.0);
        let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
        let z = vec![C64::new(0.0, 0.0); n];
        let a = build_mixed(&p, &ops, &z, &z).unwrap().full_matrix();
        let (w, wi) = (sobolev_weight(n, 1.0), sobolev_weight(n, -1.0));
        let mut left = faer::Mat::<C64>::identity(3 * n, 3 * n);
        let mut right = left.clone();
        left.as_mut().submatrix_mut(0, 0, n, n).copy_from(&w);
        right.as_mut().submatrix_mut(0, 0, n, n).copy_from(&wi);
        let b = &left * &a * &right;
        let s = b.singular_values().unwrap();
        sig.push(s.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    assert!(sig.iter().all(|&s| s > 0.8 * sig[0]), "{sig:?}");
}

#[test]
fn rejects_real_beta_and_mismatched_lengths() {
    let (g, p) = setup(32, 1.0, 2.0);
    assert!(p.with_beta(C64::new(0.5, 0.0)).is_err());
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
    let z = vec![C64::new(0.0, 0.0); 31];
    assert!(build_mixed(&p, &ops, &z, &z).is_err());
}
