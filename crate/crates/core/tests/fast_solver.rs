//! The skeletonization solver against dense solves of the same discretization,
//! the analytic circle solution, and structural properties of its factors.

use num_complex::Complex64 as C64;
use transbie::analytic_reference::{mie_solve, mie_trace, relative_error};
use transbie::direct_solver::{solve_mixed_dense, solve_ordinary_dense};
use transbie::fast_solver::{sample_offdiag_errors, skeleton_hierarchy, skeleton_qr_flops, skeletonize_leaves, solve_fast, FastConfig};
use transbie::geometry::{discretize, make_circle, Curve, Grid};
use transbie::linalg::{norm2, rel_err};
use transbie::quadrature::LOW_ORDER;
use transbie::systems::{assemble_operators, build_mixed, build_ordinary, Formulation, IncidentField, ProblemParams};

const BOTH: [Formulation; 2] = [Formulation::Mixed, Formulation::Ordinary];

fn params(omega: f64, eps1: f64) -> ProblemParams {
    ProblemParams::new(1.0, eps1, C64::new(omega, 0.0)).unwrap()
}

fn star() -> Curve {
    Curve::Fourier { cos: vec![1.0, 0.0, 0.0, 0.15], sin: vec![0.0, 0.0, 0.0, 0.1] }
}

fn dense(g: &Grid, p: &ProblemParams, f: Formulation) -> (Vec<C64>, Vec<C64>) {
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), g).unwrap();
    let ops = assemble_operators(p, g, LOW_ORDER, &[f]).unwrap();
    match f {
        Formulation::Mixed => {
            let (s, _) = solve_mixed_dense(build_mixed(p, &ops, &ui, &qi).unwrap()).unwrap();
            (s.u, s.q)
        }
        Formulation::Ordinary => {
            let (u, q, _) = solve_ordinary_dense(&build_ordinary(p, &ops, &ui, &qi).unwrap()).unwrap();
            (u, q)
        }
    }
}

#[test]
fn uncompressed_two_cells_reproduce_dense_solve() {
    let g = discretize(&star(), 64).unwrap();
    let p = params(1.3, 3.0);
    let cfg = FastConfig { leaf_size: 32, skeletons: 32, exact_far_field: true, ..Default::default() };
    for f in BOTH {
        let s = solve_fast(&g, &p, &IncidentField::default(), f, &cfg).unwrap();
        let (u, q) = dense(&g, &p, f);
        assert!(rel_err(&s.u, &u) < 1e-10, "{f:?} u {:e}", rel_err(&s.u, &u));
        assert!(rel_err(&s.q, &q) < 1e-10, "{f:?} q {:e}", rel_err(&s.q, &q));
    }
}

#[test]
fn interpolation_factors_are_identity_on_skeletons() {
    let g = discretize(&make_circle(1.0).unwrap(), 512).unwrap();
    let cfg = FastConfig { leaf_size: 64, skeletons: 20, ..Default::default() };
    for f in BOTH {
        let skels = skeletonize_leaves(&g, &params(1.0, 2.0), f, &cfg).unwrap();
        assert_eq!(skels.len(), 8);
        for s in &skels {
            for b in 0..s.r.len() {
                assert_eq!(s.r[b].nrows(), 20);
                assert_eq!(s.l[b].ncols(), 20);
                for (a, &c) in s.col_skel[b].iter().enumerate() {
                    for i in 0..20 {
                        assert_eq!(s.r[b][(i, c)], C64::new(if i == a { 1.0 } else { 0.0 }, 0.0));
                    }
                }
                for (a, &r) in s.row_skel[b].iter().enumerate() {
                    for i in 0..20 {
                        assert_eq!(s.l[b][(r, i)], C64::new(if i == a { 1.0 } else { 0.0 }, 0.0));
                    }
                }
            }
        }
    }
}

#[test]
fn far_blocks_are_captured_by_forty_skeletons() {
    let p = params(1.0, 2.0);
    let cfg = FastConfig { leaf_size: 128, ..Default::default() };
    for curve in [make_circle(1.0).unwrap(), star()] {
        let g = discretize(&curve, 2048).unwrap();
        for f in BOTH {
            let skels = skeletonize_leaves(&g, &p, f, &cfg).unwrap();
            for (i, j, e) in sample_offdiag_errors(&g, &p, f, &skels, 20, 7) {
                assert!(e <= 1e-6, "{f:?} pair ({i}, {j}): {e:e}");
            }
        }
    }
}

#[test]
fn skeleton_qr_cost_follows_block_counts() {
    let g = discretize(&make_circle(1.0).unwrap(), 512).unwrap();
    let p = params(1.0, 2.0);
    let cfg = FastConfig { leaf_size: 64, skeletons: 40, ..Default::default() };
    let (fm, n, np) = skeleton_qr_flops(&g, &p, Formulation::Mixed, &cfg, 3).unwrap();
    let (fo, n2, np2) = skeleton_qr_flops(&g, &p, Formulation::Ordinary, &cfg, 3).unwrap();
    assert_eq!((n, np), (n2, np2));
    assert!(np > n);
    let (n, np) = (n as f64, np as f64);
    let predicted = (14.0 * np * n * n - 4.0 * n.powi(3)) / (16.0 * np * n * n - 8.0 / 3.0 * n.powi(3));
    let ratio = fm / fo;
    assert!((ratio / predicted - 1.0).abs() < 0.02, "ratio {ratio} vs {predicted}");
    assert!(ratio < 1.0);
}

#[test]
fn compressed_dimension_is_blocks_times_skeletons_times_cells() {
    let g = discretize(&make_circle(1.0).unwrap(), 1024).unwrap();
    let p = params(1.0, 2.0);
    let cfg = FastConfig { leaf_size: 128, skeletons: 40, levels: Some(1), ..Default::default() };
    for (f, nb) in [(Formulation::Mixed, 3), (Formulation::Ordinary, 2)] {
        let s = solve_fast(&g, &p, &IncidentField::default(), f, &cfg).unwrap();
        assert_eq!(s.stats.levels.len(), 1);
        assert_eq!(s.stats.levels[0].unknowns_in, nb * 1024);
        assert_eq!(s.stats.levels[0].unknowns_out, nb * 40 * 8);
        assert_eq!(s.stats.top_dimension, nb * 40 * 8);
    }
}

fn is_subsequence(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

#[test]
fn upper_skeletons_nest_in_lower_ones() {
    let g = discretize(&star(), 1024).unwrap();
    let cfg = FastConfig { leaf_size: 64, skeletons: 16, ..Default::default() };
    for f in BOTH {
        let h = skeleton_hierarchy(&g, &params(1.0, 2.0), f, &cfg).unwrap();
        assert_eq!(h.len(), 4);
        for w in h.windows(2) {
            let (lower, upper) = (&w[0], &w[1]);
            assert_eq!(lower.len(), 2 * upper.len());
            for (c, cell) in upper.iter().enumerate() {
                let (a, b) = (&lower[2 * c], &lower[2 * c + 1]);
                let (ra, rb) = (a.row_skeleton_indices(), b.row_skeleton_indices());
                let (ca, cb) = (a.col_skeleton_indices(), b.col_skeleton_indices());
                for blk in 0..cell.rows.len() {
                    let rows: Vec<usize> = ra[blk].iter().chain(&rb[blk]).copied().collect();
                    let cols: Vec<usize> = ca[blk].iter().chain(&cb[blk]).copied().collect();
                    assert_eq!(cell.rows[blk], rows);
                    assert_eq!(cell.cols[blk], cols);
                    assert!(is_subsequence(&cell.row_skeleton_indices()[blk], &rows));
                    assert!(is_subsequence(&cell.col_skeleton_indices()[blk], &cols));
                }
            }
        }
    }
}

#[test]
fn single_level_matches_dense_solution_and_residual() {
    let g = discretize(&make_circle(1.0).unwrap(), 1024).unwrap();
    let p = params(1.0, 2.0);
    let cfg = FastConfig { leaf_size: 128, skeletons: 40, levels: Some(1), ..Default::default() };
    let s = solve_fast(&g, &p, &IncidentField::default(), Formulation::Mixed, &cfg).unwrap();
    let (ui, qi) = IncidentField::default().evaluate(p.k0(), &g).unwrap();
    let ops = assemble_operators(&p, &g, LOW_ORDER, &[Formulation::Mixed]).unwrap();
    let sys = build_mixed(&p, &ops, &ui, &qi).unwrap();
    let [r1, r2, r3] = sys.apply(&s.u, &s.q, &s.phi).unwrap();
    let res: Vec<C64> = r1.into_iter().chain(r2).chain(r3.iter().zip(&sys.b3).map(|(a, b)| a - b)).collect();
    assert!(norm2(&res) <= 1e-5 * norm2(&sys.b3), "residual {:e}", norm2(&res) / norm2(&sys.b3));
    let (d, _) = solve_mixed_dense(sys).unwrap();
    assert!(rel_err(&s.u, &d.u) <= 1e-5);
    assert!(rel_err(&s.q, &d.q) <= 1e-5);
    assert!(rel_err(&s.phi, &d.phi) <= 1e-5);
}

#[test]
fn multi_level_solution_matches_dense_on_a_star() {
    let g = discretize(&star(), 2048).unwrap();
    let p = params(2.0, 4.0);
    let cfg = FastConfig { leaf_size: 64, skeletons: 40, ..Default::default() };
    for f in BOTH {
        let s = solve_fast(&g, &p, &IncidentField::default(), f, &cfg).unwrap();
        assert_eq!(s.stats.levels.len(), 5);
        let (u, q) = dense(&g, &p, f);
        let e = rel_err(&s.u, &u).max(rel_err(&s.q, &q));
        assert!(e <= 1e-5, "{f:?}: {e:e}");
    }
}

#[test]
fn both_formulations_approach_the_circle_solution() {
    let p = params(1.0, 2.0);
    let mie = mie_solve(1.0, &p, None).unwrap();
    let cfg = FastConfig { leaf_size: 100, ..Default::default() };
    let mut errs = Vec::new();
    for n in [1600, 3200] {
        let g = discretize(&make_circle(1.0).unwrap(), n).unwrap();
        let (ur, qr) = mie_trace(&mie, &g).unwrap();
        let e: Vec<f64> = BOTH
            .iter()
            .map(|&f| {
                let s = solve_fast(&g, &p, &IncidentField::default(), f, &cfg).unwrap();
                relative_error(&s.u, &s.q, &ur, &qr)
            })
            .collect();
        assert!((e[0] / e[1] - 1.0).abs() < 0.05, "N = {n}: {e:?}");
        errs.push(e[0]);
    }
    // First-order convergence.
    let rate = errs[0] / errs[1];
    assert!(rate > 1.6 && rate < 2.5, "{errs:?}");
}

#[test]
fn rejects_bad_configurations() {
    let g = discretize(&make_circle(1.0).unwrap(), 512).unwrap();
    let p = params(1.0, 2.0);
    let inc = IncidentField::default();
    let bad = [
        FastConfig { leaf_size: 64, skeletons: 65, ..Default::default() },
        FastConfig { leaf_size: 96, ..Default::default() },
        FastConfig { leaf_size: 512, ..Default::default() },
        FastConfig { leaf_size: 64, proxy_scale: 0.9, ..Default::default() },
        FastConfig { leaf_size: 64, levels: Some(0), ..Default::default() },
        FastConfig { leaf_size: 64, tolerance: Some(0.0), ..Default::default() },
    ];
    for cfg in bad {
        assert!(solve_fast(&g, &p, &inc, Formulation::Mixed, &cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn tolerance_mode_keeps_equal_ranks_per_block() {
    let g = discretize(&make_circle(1.0).unwrap(), 1024).unwrap();
    let p = params(1.0, 2.0);
    let cfg = FastConfig { leaf_size: 128, skeletons: 60, tolerance: Some(1e-10), ..Default::default() };
    let skels = skeletonize_leaves(&g, &p, Formulation::Mixed, &cfg).unwrap();
    for s in &skels {
        let r = s.ranks();
        assert!(r.iter().all(|&k| k == r[0] && k > 0 && k <= 60), "{r:?}");
    }
    let s = solve_fast(&g, &p, &IncidentField::default(), Formulation::Mixed, &cfg).unwrap();
    let (u, q) = dense(&g, &p, Formulation::Mixed);
    assert!(rel_err(&s.u, &u).max(rel_err(&s.q, &q)) < 1e-7);
}
