//! Fast direct solver by recursive skeletonization.
//!
//! The unknowns of the blocked system are split over a binary tree of
//! contiguous node ranges. For every cell the off-diagonal interactions are
//! compressed with interpolative decompositions `A_ij ≈ L_i S_ij R_j`, where
//! `S_ij` is the original matrix restricted to skeleton rows and columns and
//! the skeletons come from column-pivoted QR of small proxy matrices. With
//! `y_i = R_i x_i` the system becomes
//!
//! ```text
//! D_i y_i + Σ_{j≠i} S_ij y_j = D_i R_i A_ii⁻¹ f_i,   D_i = (R_i A_ii⁻¹ L_i)⁻¹,
//! ```
//!
//! which has the same form as the original one on the skeleton indices.
//! Sibling cells are merged and the process repeats up the tree; the top
//! system is solved densely and the leaf unknowns are recovered from
//! `x_i = A_ii⁻¹ (f_i − L_i Σ_{j≠i} S_ij y_j)`.
//!
//! At the leaves of the mixed formulation `A_ii` is itself a mixed system, so
//! `A_ii⁻¹ L_i` and `A_ii⁻¹ f_i` use the structured block solver.

mod blocks;
mod tree;

pub use tree::{build_tree, IndexTree};

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;
use std::time::Instant;

use crate::direct_solver::{factor_mixed, MixedFactorization};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::linalg::{cpqr, interp_decomp, InterpDecomp, matvec, mul, CMat, FlopCounter, Lu};
use crate::systems::{Formulation, IncidentField, MixedSystem, ProblemParams};
use blocks::{offsets, BlockSystem, Probe};

/// Parameters of the skeletonization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct FastConfig {
    /// Nodes per leaf cell.
    pub leaf_size: usize,
    /// Skeletons per unknown block at the leaf level.
    pub skeletons: usize,
    /// Skeleton count ratio between a level and the one below it.
    pub growth: f64,
    /// Proxy circle diameter over cell diameter.
    pub proxy_scale: f64,
    pub min_proxy_points: usize,
    /// Truncate the pivoted QR at this relative pivot size instead of using
    /// the fixed count alone.
    pub tolerance: Option<f64>,
    /// Number of compressed levels; `None` compresses up to level 1.
    pub levels: Option<usize>,
    /// Skeletonize against every other cell instead of a proxy circle.
    pub exact_far_field: bool,
}

impl Default for FastConfig {
    fn default() -> Self {
        FastConfig { leaf_size: 128, skeletons: 40, growth: 1.15, proxy_scale: 1.5, min_proxy_points: 64, tolerance: None, levels: None, exact_far_field: false }
    }
}

impl FastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.skeletons == 0 {
            return Err(Error::invalid("skeleton count must be positive"));
        }
        if !(self.growth >= 1.0) || !self.growth.is_finite() {
            return Err(Error::invalid(format!("skeleton growth must be at least 1, got {}", self.growth)));
        }
        if !(self.proxy_scale > 1.0) || !self.proxy_scale.is_finite() {
            return Err(Error::invalid(format!("proxy scale must exceed 1, got {}", self.proxy_scale)));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!("skeleton tolerance must lie in (0, 1), got {t}")));
            }
        }
        if self.levels == Some(0) {
            return Err(Error::invalid("at least one level must be compressed"));
        }
        Ok(())
    }

    fn skeletons_at(&self, leaf_level: usize, level: usize) -> usize {
        (self.skeletons as f64 * self.growth.powi((leaf_level - level) as i32)).round() as usize
    }
}

/// Interpolative factors of one cell.
#[derive(Clone, Debug)]
pub struct CellSkeleton {
    /// Row and column index sets per unknown block (global node indices).
    pub rows: Vec<Vec<usize>>,
    pub cols: Vec<Vec<usize>>,
    /// Skeleton positions within `rows[b]` and `cols[b]`.
    pub row_skel: Vec<Vec<usize>>,
    pub col_skel: Vec<Vec<usize>>,
    /// `L_i^b`, `|rows[b]| × k_b`, identity on the row skeletons.
    pub l: Vec<CMat>,
    /// `R_i^b`, `k_b × |cols[b]|`, identity on the column skeletons.
    pub r: Vec<CMat>,
    /// Number of probe points used on the column and row sides.
    pub probe_sizes: (usize, usize),
}

impl CellSkeleton {
    pub fn ranks(&self) -> Vec<usize> {
        self.col_skel.iter().map(|s| s.len()).collect()
    }

    pub fn row_skeleton_indices(&self) -> Vec<Vec<usize>> {
        self.rows.iter().zip(&self.row_skel).map(|(r, s)| s.iter().map(|&p| r[p]).collect()).collect()
    }

    pub fn col_skeleton_indices(&self) -> Vec<Vec<usize>> {
        self.cols.iter().zip(&self.col_skel).map(|(c, s)| s.iter().map(|&p| c[p]).collect()).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub cells: usize,
    pub rank_min: usize,
    pub rank_max: usize,
    pub probe_min: usize,
    pub probe_max: usize,
    pub unknowns_in: usize,
    pub unknowns_out: usize,
    pub compression_ratio: f64,
    pub flops: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FastStats {
    pub n: usize,
    pub formulation: Formulation,
    pub leaf_size: usize,
    pub leaf_level: usize,
    pub levels: Vec<LevelStats>,
    pub top_dimension: usize,
    pub flops_raw: u64,
    pub flops_normalized: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FastSolution {
    pub u: Vec<C64>,
    pub q: Vec<C64>,
    /// Interior density; empty for the ordinary formulation.
    pub phi: Vec<C64>,
    pub stats: FastStats,
}

/// A cell of the current level: its node range, index sets, and the system
/// block it carries.
struct Cell {
    range: Range<usize>,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
    /// Dense diagonal block above the leaves.
    diag: Option<CMat>,
    rhs: Vec<C64>,
}

/// What recovery needs from one compressed cell.
struct Record {
    cols: Vec<Vec<usize>>,
    ranks: Vec<usize>,
    ainv_l: CMat,
    ainv_f: Vec<C64>,
    d: CMat,
    g: Vec<C64>,
}

enum DiagFactor {
    Mixed(MixedFactorization),
    Dense(Lu),
}

pub fn solve_fast(grid: &Grid, params: &ProblemParams, incident: &IncidentField, formulation: Formulation, cfg: &FastConfig) -> Result<FastSolution> {
    let (u_in, q_in) = incident.evaluate(params.k0(), grid)?;
    solve_fast_traces(grid, params, formulation, &u_in, &q_in, cfg)
}

/// Fast solve for given incident traces.
pub fn solve_fast_traces(grid: &Grid, params: &ProblemParams, formulation: Formulation, u_in: &[C64], q_in: &[C64], cfg: &FastConfig) -> Result<FastSolution> {
    Ok(run(grid, params, formulation, u_in, q_in, cfg, false)?.0)
}

/// Skeletons of every compressed level, leaf level first.
pub fn skeleton_hierarchy(grid: &Grid, params: &ProblemParams, formulation: Formulation, cfg: &FastConfig) -> Result<Vec<Vec<CellSkeleton>>> {
    let zero = vec![C64::new(0.0, 0.0); grid.n];
    Ok(run(grid, params, formulation, &zero, &zero, cfg, true)?.1)
}

fn run(grid: &Grid, params: &ProblemParams, formulation: Formulation, u_in: &[C64], q_in: &[C64], cfg: &FastConfig, keep: bool) -> Result<(FastSolution, Vec<Vec<CellSkeleton>>)> {
    params.validate()?;
    if u_in.len() != grid.n || q_in.len() != grid.n {
        return Err(Error::DimensionMismatch { expected: grid.n, got: u_in.len().min(q_in.len()) });
    }
    let tree = leaf_tree(grid, cfg)?;
    let sys = BlockSystem::new(grid, params, formulation, u_in, q_in);
    let start = Instant::now();
    let flops = FlopCounter::new();
    let nlev = cfg.levels.unwrap_or(tree.leaf_level).min(tree.leaf_level);
    let stop_level = tree.leaf_level - nlev + 1;

    let mut cells = leaf_cells(&sys, &tree);
    let mut records: Vec<Vec<Record>> = Vec::new();
    let mut hierarchy = Vec::new();
    let mut level_stats = Vec::new();
    let mut level = tree.leaf_level;
    let top_y;
    loop {
        let t0 = Instant::now();
        let lf = FlopCounter::new();
        let k = cfg.skeletons_at(tree.leaf_level, level);
        let skels = skeletonize_level(&sys, &cells, k, cfg, Some(&lf))?;
        let recs: Vec<Record> = cells.par_iter().zip(skels.par_iter()).map(|(c, s)| compress_cell(&sys, c, s, &lf)).collect::<Result<_>>()?;
        let ranks: Vec<usize> = skels.iter().flat_map(|s| s.ranks()).collect();
        let probes: Vec<usize> = skels.iter().flat_map(|s| [s.probe_sizes.0, s.probe_sizes.1]).collect();
        let unknowns_in: usize = cells.iter().map(|c| c.cols.iter().map(|v| v.len()).sum::<usize>()).sum();
        let unknowns_out: usize = ranks.iter().sum();

        if level == stop_level {
            let y = solve_top(&sys, &skels, &recs, &lf)?;
            top_y = y;
            records.push(recs);
            level_stats.push(stats_row(level, cells.len(), &ranks, &probes, unknowns_in, unknowns_out, &lf, t0));
            flops.merge(&lf);
            if keep {
                hierarchy.push(skels);
            }
            break;
        }
        let parents = merge_level(&sys, &cells, &skels, &recs);
        records.push(recs);
        level_stats.push(stats_row(level, cells.len(), &ranks, &probes, unknowns_in, unknowns_out, &lf, t0));
        flops.merge(&lf);
        if keep {
            hierarchy.push(skels);
        }
        cells = parents;
        level -= 1;
    }
    let top_dimension = top_y.iter().map(|v| v.len()).sum();

    // Downward pass.
    let nb = sys.nb;
    let mut out = vec![vec![C64::new(0.0, 0.0); grid.n]; nb];
    let mut ys = top_y;
    for (depth, recs) in records.iter().enumerate().rev() {
        let xs: Vec<Vec<C64>> = recs.par_iter().zip(ys.par_iter()).map(|(r, y)| recover(r, y)).collect();
        if depth == 0 {
            for (r, x) in recs.iter().zip(&xs) {
                let off = offsets(r.cols.iter().map(|v| v.len()));
                for b in 0..nb {
                    for (p, &g) in r.cols[b].iter().enumerate() {
                        out[b][g] = x[off[b] + p];
                    }
                }
            }
            break;
        }
        let below = &records[depth - 1];
        let mut next = Vec::with_capacity(below.len());
        for (pi, x) in xs.iter().enumerate() {
            let (ra, rb) = (&below[2 * pi].ranks, &below[2 * pi + 1].ranks);
            let (ma, mb) = merge_maps(ra, rb);
            next.push(ma.iter().map(|&p| x[p]).collect::<Vec<_>>());
            next.push(mb.iter().map(|&p| x[p]).collect::<Vec<_>>());
        }
        ys = next;
    }

    let mut it = out.into_iter();
    let u = it.next().unwrap();
    let q = it.next().unwrap();
    let phi = it.next().unwrap_or_default();
    let stats = FastStats {
        n: grid.n,
        formulation,
        leaf_size: cfg.leaf_size,
        leaf_level: tree.leaf_level,
        levels: level_stats,
        top_dimension,
        flops_raw: flops.raw(),
        flops_normalized: flops.normalized(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((FastSolution { u, q, phi, stats }, hierarchy))
}

fn leaf_tree(grid: &Grid, cfg: &FastConfig) -> Result<IndexTree> {
    cfg.validate()?;
    let tree = build_tree(grid.n, cfg.leaf_size)?;
    if cfg.skeletons > cfg.leaf_size {
        return Err(Error::invalid(format!("{} skeletons exceed the leaf size {}", cfg.skeletons, cfg.leaf_size)));
    }
    Ok(tree)
}

/// Leaf-level interpolative factors of the system with zero data.
pub fn skeletonize_leaves(grid: &Grid, params: &ProblemParams, formulation: Formulation, cfg: &FastConfig) -> Result<Vec<CellSkeleton>> {
    params.validate()?;
    let tree = leaf_tree(grid, cfg)?;
    let zero = vec![C64::new(0.0, 0.0); grid.n];
    let sys = BlockSystem::new(grid, params, formulation, &zero, &zero);
    skeletonize_level(&sys, &leaf_cells(&sys, &tree), cfg.skeletons, cfg, None)
}

/// `‖A_ij − L_i S_ij R_j‖_F / ‖A_ij‖_F` for leaf cells `i ≠ j`.
pub fn offdiag_error(grid: &Grid, params: &ProblemParams, formulation: Formulation, skels: &[CellSkeleton], i: usize, j: usize) -> f64 {
    let zero = vec![C64::new(0.0, 0.0); grid.n];
    let sys = BlockSystem::new(grid, params, formulation, &zero, &zero);
    let (si, sj) = (&skels[i], &skels[j]);
    let a = sys.block(&si.rows, &sj.cols);
    let s = sys.block(&si.row_skeleton_indices(), &sj.col_skeleton_indices());
    let approx = mul(mul(block_diag(&si.l).as_ref(), s.as_ref()).as_ref(), block_diag(&sj.r).as_ref());
    crate::linalg::frob((&a - &approx).as_ref()) / crate::linalg::frob(a.as_ref())
}

/// Off-diagonal errors on `count` random leaf pairs that are not neighbours
/// along the curve.
pub fn sample_offdiag_errors(grid: &Grid, params: &ProblemParams, formulation: Formulation, skels: &[CellSkeleton], count: usize, seed: u64) -> Vec<(usize, usize, f64)> {
    use rand::{Rng, SeedableRng};
    let p = skels.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count && p > 3 {
        let (i, j) = (rng.random_range(0..p), rng.random_range(0..p));
        let gap = i.abs_diff(j).min(p - i.abs_diff(j));
        if gap >= 2 {
            pairs.push((i, j));
        }
    }
    pairs.into_par_iter().map(|(i, j)| (i, j, offdiag_error(grid, params, formulation, skels, i, j))).collect()
}

/// Counted flops (normalized) of full-rank pivoted QR on every skeletonization
/// target of leaf `cell`, with the cell size `n` and the probe size `n′`.
pub fn skeleton_qr_flops(grid: &Grid, params: &ProblemParams, formulation: Formulation, cfg: &FastConfig, cell: usize) -> Result<(f64, usize, usize)> {
    params.validate()?;
    let tree = leaf_tree(grid, cfg)?;
    let zero = vec![C64::new(0.0, 0.0); grid.n];
    let sys = BlockSystem::new(grid, params, formulation, &zero, &zero);
    let cells = leaf_cells(&sys, &tree);
    let all: Vec<Vec<usize>> = cells.iter().map(|c| c.range.clone().collect()).collect();
    let c = &cells[cell];
    let nproxy = cfg.min_proxy_points.max(2 * cfg.skeletons);
    let (center, radius) = proxy_circle(grid, c, cfg.proxy_scale)?;
    let probe = proxy_probe(&sys, center, radius, nproxy, &all, cell);
    let flops = FlopCounter::new();
    let n = c.range.len();
    for t in sys.col_targets(&c.cols, &probe).iter().chain(&sys.row_targets(&c.rows, &probe)) {
        cpqr(t.as_ref(), n, 0.0, Some(&flops));
    }
    Ok((flops.normalized(), n, probe.len()))
}

#[allow(clippy::too_many_arguments)]
fn stats_row(level: usize, cells: usize, ranks: &[usize], probes: &[usize], unknowns_in: usize, unknowns_out: usize, lf: &FlopCounter, t0: Instant) -> LevelStats {
    LevelStats {
        level,
        cells,
        rank_min: ranks.iter().copied().min().unwrap_or(0),
        rank_max: ranks.iter().copied().max().unwrap_or(0),
        probe_min: probes.iter().copied().min().unwrap_or(0),
        probe_max: probes.iter().copied().max().unwrap_or(0),
        unknowns_in,
        unknowns_out,
        compression_ratio: unknowns_out as f64 / unknowns_in as f64,
        flops: lf.raw(),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn leaf_cells(sys: &BlockSystem, tree: &IndexTree) -> Vec<Cell> {
    let rb = sys.rhs_block();
    (0..tree.leaf_cells())
        .map(|c| {
            let range = tree.range(tree.leaf_level, c);
            let idx: Vec<usize> = range.clone().collect();
            let n = idx.len();
            let mut rhs = vec![C64::new(0.0, 0.0); sys.nb * n];
            for (p, &i) in idx.iter().enumerate() {
                rhs[rb * n + p] = sys.rhs_at(i);
            }
            Cell { range, rows: vec![idx.clone(); sys.nb], cols: vec![idx; sys.nb], diag: None, rhs }
        })
        .collect()
}

/// Skeletonize every cell of a level against its proxy circle and near field.
fn skeletonize_level(sys: &BlockSystem, cells: &[Cell], k: usize, cfg: &FastConfig, flops: Option<&FlopCounter>) -> Result<Vec<CellSkeleton>> {
    let union = |sets: &[Vec<usize>]| {
        let mut v: Vec<usize> = sets.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let row_pts: Vec<Vec<usize>> = cells.iter().map(|c| union(&c.rows)).collect();
    let col_pts: Vec<Vec<usize>> = cells.iter().map(|c| union(&c.cols)).collect();
    (0..cells.len())
        .into_par_iter()
        .map(|ci| {
            let cell = &cells[ci];
            let (col_probe, row_probe) = if cfg.exact_far_field {
                (exact_probe(sys, &row_pts, ci), exact_probe(sys, &col_pts, ci))
            } else {
                let nproxy = cfg.min_proxy_points.max(2 * k);
                let (center, radius) = proxy_circle(sys.grid, cell, cfg.proxy_scale)?;
                (proxy_probe(sys, center, radius, nproxy, &row_pts, ci), proxy_probe(sys, center, radius, nproxy, &col_pts, ci))
            };
            skeletonize_cell(sys, cell, &col_probe, &row_probe, k, cfg.tolerance, flops)
        })
        .collect()
}

fn skeletonize_cell(sys: &BlockSystem, cell: &Cell, col_probe: &Probe, row_probe: &Probe, k: usize, tol: Option<f64>, flops: Option<&FlopCounter>) -> Result<CellSkeleton> {
    let ct = sys.col_targets(&cell.cols, col_probe);
    let rt = sys.row_targets(&cell.rows, row_probe);
    let nb = sys.nb;
    let mut l = Vec::with_capacity(nb);
    let mut r = Vec::with_capacity(nb);
    let mut row_skel = Vec::with_capacity(nb);
    let mut col_skel = Vec::with_capacity(nb);
    // One rank for every block of the cell.
    let cap = (0..nb).map(|b| k.min(ct[b].nrows()).min(ct[b].ncols()).min(rt[b].nrows()).min(rt[b].ncols())).min().unwrap();
    let kb = match tol {
        None => cap,
        Some(t) => (0..nb).map(|b| cpqr(ct[b].as_ref(), cap, t, None).rank.max(cpqr(rt[b].as_ref(), cap, t, None).rank)).max().unwrap().max(1),
    };
    for b in 0..nb {
        let cid = interp_decomp(ct[b].as_ref(), kb, 0.0, flops);
        let rid = interp_decomp(rt[b].as_ref(), kb, 0.0, flops);
        if cid.skel.len() != kb || rid.skel.len() != kb {
            return Err(Error::invalid(format!("skeletonization lost rank in block {b}: wanted {kb}, got {} / {}", cid.skel.len(), rid.skel.len())));
        }
        let (rs, rp) = sorted(rid);
        let (cs, cp) = sorted(cid);
        l.push(rp.adjoint().to_owned());
        r.push(cp);
        row_skel.push(rs);
        col_skel.push(cs);
    }
    Ok(CellSkeleton { rows: cell.rows.clone(), cols: cell.cols.clone(), row_skel, col_skel, l, r, probe_sizes: (col_probe.len(), row_probe.len()) })
}

/// Skeletons in increasing index order, so sequences stay ordered up the tree.
fn sorted(id: InterpDecomp) -> (Vec<usize>, CMat) {
    let mut order: Vec<usize> = (0..id.skel.len()).collect();
    order.sort_by_key(|&a| id.skel[a]);
    let skel = order.iter().map(|&a| id.skel[a]).collect();
    let proj = Mat::from_fn(order.len(), id.proj.ncols(), |i, j| id.proj[(order[i], j)]);
    (skel, proj)
}

/// Proxy circle centered at the node centroid of the cell's range.
fn proxy_circle(grid: &Grid, cell: &Cell, scale: f64) -> Result<([f64; 2], f64)> {
    let pts = &grid.points[cell.range.clone()];
    let m = pts.len() as f64;
    let center = [pts.iter().map(|p| p[0]).sum::<f64>() / m, pts.iter().map(|p| p[1]).sum::<f64>() / m];
    // Diameter over a subsample (endpoints always included).
    let stride = (pts.len() / 256).max(1);
    let mut sample: Vec<[f64; 2]> = pts.iter().step_by(stride).copied().collect();
    sample.push(*pts.last().unwrap());
    let mut diam = 0.0f64;
    for (a, p) in sample.iter().enumerate() {
        for q in &sample[a + 1..] {
            diam = diam.max((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    let radius = 0.5 * scale * diam;
    let reach = pts.iter().map(|p| (p[0] - center[0]).hypot(p[1] - center[1])).fold(0.0, f64::max);
    if !(diam > 0.0) || reach >= radius {
        return Err(Error::invalid(format!("proxy circle of radius {radius:.3e} does not enclose its cell (reach {reach:.3e})")));
    }
    Ok((center, radius))
}

fn proxy_probe(sys: &BlockSystem, center: [f64; 2], radius: f64, nproxy: usize, pts: &[Vec<usize>], own: usize) -> Probe {
    let mut p = Probe::default();
    let w = 2.0 * PI * radius / nproxy as f64;
    for j in 0..nproxy {
        let (s, c) = (2.0 * PI * j as f64 / nproxy as f64).sin_cos();
        p.x.push([center[0] + radius * c, center[1] + radius * s]);
        p.nx.push([c, s]);
        p.w.push(w);
    }
    let g = sys.grid;
    for (ci, set) in pts.iter().enumerate() {
        if ci == own {
            continue;
        }
        for &i in set {
            let x = g.points[i];
            if (x[0] - center[0]).hypot(x[1] - center[1]) < radius {
                p.x.push(x);
                p.nx.push(g.normals[i]);
                p.w.push(g.h * g.jacobian[i]);
            }
        }
    }
    p
}

fn exact_probe(sys: &BlockSystem, pts: &[Vec<usize>], own: usize) -> Probe {
    let g = sys.grid;
    let mut p = Probe::default();
    for (ci, set) in pts.iter().enumerate() {
        if ci != own {
            for &i in set {
                p.x.push(g.points[i]);
                p.nx.push(g.normals[i]);
                p.w.push(g.h * g.jacobian[i]);
            }
        }
    }
    p
}

/// Block-diagonal matrix `diag(M_0, M_1, …)`.
fn block_diag(blocks: &[CMat]) -> CMat {
    let ro = offsets(blocks.iter().map(|m| m.nrows()));
    let co = offsets(blocks.iter().map(|m| m.ncols()));
    let mut out = Mat::zeros(*ro.last().unwrap(), *co.last().unwrap());
    for (b, m) in blocks.iter().enumerate() {
        out.as_mut().submatrix_mut(ro[b], co[b], m.nrows(), m.ncols()).copy_from(m);
    }
    out
}

fn factor_diag(sys: &BlockSystem, cell: &Cell, flops: &FlopCounter) -> Result<DiagFactor> {
    match (&cell.diag, sys.formulation) {
        (Some(d), _) => {
            let lu = Lu::new(d.as_ref());
            flops.lu(d.nrows());
            lu.check(sys.omega, 1e-14)?;
            Ok(DiagFactor::Dense(lu))
        }
        (None, Formulation::Mixed) => {
            let idx = &cell.cols[0];
            let t = sys.terms();
            let mut b = sys.term_blocks(&t[2..6], idx, idx).into_iter();
            let (m13, m23, m31, m32) = (b.next().unwrap(), b.next().unwrap(), b.next().unwrap(), b.next().unwrap());
            let n = idx.len();
            let f = factor_mixed(MixedSystem { n, omega: sys.omega, m13, m23, m31, m32, b3: vec![C64::new(0.0, 0.0); n] })?;
            Ok(DiagFactor::Mixed(f))
        }
        (None, Formulation::Ordinary) => {
            let a = sys.block(&cell.rows, &cell.cols);
            let lu = Lu::new(a.as_ref());
            flops.lu(a.nrows());
            lu.check(sys.omega, 1e-14)?;
            Ok(DiagFactor::Dense(lu))
        }
    }
}

fn compress_cell(sys: &BlockSystem, cell: &Cell, sk: &CellSkeleton, flops: &FlopCounter) -> Result<Record> {
    let nb = sys.nb;
    let fac = factor_diag(sys, cell, flops)?;
    let ranks = sk.ranks();
    let kt: usize = ranks.iter().sum();
    let dim = cell.rhs.len();
    let (ainv_l, ainv_f) = match &fac {
        DiagFactor::Mixed(f) => {
            let x = f.solve_blockdiag(sk.l[0].as_ref(), sk.l[1].as_ref(), sk.l[2].as_ref())?;
            let n = f.n;
            let koff = offsets(ranks.iter().copied());
            let mut m = Mat::zeros(3 * n, kt);
            for (i, row) in x.iter().enumerate() {
                for (j, blk) in row.iter().enumerate() {
                    m.as_mut().submatrix_mut(i * n, koff[j], n, blk.ncols()).copy_from(blk);
                }
            }
            let s = f.solve_general(&cell.rhs[..n], &cell.rhs[n..2 * n], &cell.rhs[2 * n..])?;
            let v: Vec<C64> = s.u.into_iter().chain(s.q).chain(s.phi).collect();
            flops.add_raw(f.flop_report().raw);
            (m, v)
        }
        DiagFactor::Dense(lu) => {
            let l = block_diag(&sk.l);
            let m = lu.solve(l.as_ref());
            let v = lu.solve(MatRef::from_column_major_slice(&cell.rhs, dim, 1));
            flops.lu_solve(dim, kt + 1);
            (m, (0..dim).map(|i| v[(i, 0)]).collect())
        }
    };
    // R A⁻¹ L and R A⁻¹ f, block row by block row.
    let coff = offsets(cell.cols.iter().map(|v| v.len()));
    let koff = offsets(ranks.iter().copied());
    let mut ral = Mat::<C64>::zeros(kt, kt);
    let mut raf = vec![C64::new(0.0, 0.0); kt];
    for b in 0..nb {
        let rows = ainv_l.as_ref().submatrix(coff[b], 0, coff[b + 1] - coff[b], kt);
        let prod = mul(sk.r[b].as_ref(), rows);
        ral.as_mut().submatrix_mut(koff[b], 0, ranks[b], kt).copy_from(&prod);
        let pf = matvec(sk.r[b].as_ref(), &ainv_f[coff[b]..coff[b + 1]]);
        raf[koff[b]..koff[b + 1]].copy_from_slice(&pf);
        flops.gemm(ranks[b], kt + 1, coff[b + 1] - coff[b]);
    }
    let lu = Lu::new(ral.as_ref());
    lu.check(sys.omega, 1e-14)?;
    let d = lu.inverse();
    flops.lu(kt);
    flops.lu_solve(kt, kt);
    let g = matvec(d.as_ref(), &raf);
    Ok(Record { cols: cell.cols.clone(), ranks, ainv_l, ainv_f, d, g })
}

/// Parent-level positions of the entries of two siblings with per-block
/// sizes `la` and `lb`, both in block-major order.
fn merge_maps(la: &[usize], lb: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut ma = Vec::new();
    let mut mb = Vec::new();
    let mut off = 0;
    for b in 0..la.len() {
        ma.extend(off..off + la[b]);
        mb.extend(off + la[b]..off + la[b] + lb[b]);
        off += la[b] + lb[b];
    }
    (ma, mb)
}

fn merge_level(sys: &BlockSystem, cells: &[Cell], skels: &[CellSkeleton], recs: &[Record]) -> Vec<Cell> {
    (0..skels.len() / 2)
        .into_par_iter()
        .map(|p| {
            let (a, b) = (2 * p, 2 * p + 1);
            let (sa, sb) = (&skels[a], &skels[b]);
            let (ra_rows, rb_rows) = (sa.row_skeleton_indices(), sb.row_skeleton_indices());
            let (ra_cols, rb_cols) = (sa.col_skeleton_indices(), sb.col_skeleton_indices());
            let cat = |x: &[Vec<usize>], y: &[Vec<usize>]| x.iter().zip(y).map(|(u, v)| u.iter().chain(v).copied().collect()).collect::<Vec<Vec<usize>>>();
            let rows = cat(&ra_rows, &rb_rows);
            let cols = cat(&ra_cols, &rb_cols);
            let (ma, mb) = merge_maps(&recs[a].ranks, &recs[b].ranks);
            let dim = ma.len() + mb.len();
            let mut diag = Mat::<C64>::zeros(dim, dim);
            let s_ab = sys.block(&ra_rows, &rb_cols);
            let s_ba = sys.block(&rb_rows, &ra_cols);
            let place = |diag: &mut CMat, m: &CMat, ri: &[usize], ci: &[usize]| {
                for (j, &cj) in ci.iter().enumerate() {
                    for (i, &rr) in ri.iter().enumerate() {
                        diag[(rr, cj)] = m[(i, j)];
                    }
                }
            };
            place(&mut diag, &recs[a].d, &ma, &ma);
            place(&mut diag, &recs[b].d, &mb, &mb);
            place(&mut diag, &s_ab, &ma, &mb);
            place(&mut diag, &s_ba, &mb, &ma);
            let mut rhs = vec![C64::new(0.0, 0.0); dim];
            for (i, &p) in ma.iter().enumerate() {
                rhs[p] = recs[a].g[i];
            }
            for (i, &p) in mb.iter().enumerate() {
                rhs[p] = recs[b].g[i];
            }
            let range = cells[a].range.start..cells[b].range.end;
            Cell { range, rows, cols, diag: Some(diag), rhs }
        })
        .collect()
}

/// Dense solve of the compressed system of the top compressed level.
fn solve_top(sys: &BlockSystem, skels: &[CellSkeleton], recs: &[Record], flops: &FlopCounter) -> Result<Vec<Vec<C64>>> {
    let dims: Vec<usize> = recs.iter().map(|r| r.d.nrows()).collect();
    let off = offsets(dims.iter().copied());
    let total = *off.last().unwrap();
    let rows: Vec<Vec<Vec<usize>>> = skels.iter().map(|s| s.row_skeleton_indices()).collect();
    let cols: Vec<Vec<Vec<usize>>> = skels.iter().map(|s| s.col_skeleton_indices()).collect();
    let blocks: Vec<(usize, usize, CMat)> = (0..recs.len())
        .flat_map(|i| (0..recs.len()).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| (i, j, if i == j { recs[i].d.clone() } else { sys.block(&rows[i], &cols[j]) }))
        .collect();
    let mut a = Mat::<C64>::zeros(total, total);
    for (i, j, m) in blocks {
        a.as_mut().submatrix_mut(off[i], off[j], dims[i], dims[j]).copy_from(&m);
    }
    let rhs: Vec<C64> = recs.iter().flat_map(|r| r.g.iter().copied()).collect();
    let lu = Lu::new(a.as_ref());
    flops.lu(total);
    lu.check(sys.omega, 1e-14)?;
    let y = lu.solve(MatRef::from_column_major_slice(&rhs, total, 1));
    flops.lu_solve(total, 1);
    Ok((0..recs.len()).map(|i| (off[i]..off[i + 1]).map(|p| y[(p, 0)]).collect()).collect())
}

/// `x = A⁻¹ f − A⁻¹ L (g − D y)`, using `Σ_{j≠i} S_ij y_j = g − D y`.
fn recover(r: &Record, y: &[C64]) -> Vec<C64> {
    let dy = matvec(r.d.as_ref(), y);
    let t: Vec<C64> = r.g.iter().zip(dy).map(|(g, v)| g - v).collect();
    let lt = matvec(r.ainv_l.as_ref(), &t);
    r.ainv_f.iter().zip(lt).map(|(a, b)| a - b).collect()
}
