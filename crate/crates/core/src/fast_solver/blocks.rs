//! Entries of the mixed and ordinary systems on arbitrary index sets.
//!
//! Every nonzero block of either system is a combination `c · [S, D, D*, N]`
//! of the four kernels at one wavenumber, times the source weight, plus an
//! identity multiple on the diagonal. The low-order quadrature only corrects
//! diagonal entries, so any off-diagonal block is a plain kernel sample.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::geometry::{Grid, Point};
use crate::linalg::CMat;
use crate::quadrature::{kernel_all, low_order_diagonal};
use crate::systems::{exterior_rhs, Formulation, ProblemParams};

/// One nonzero block `(row block, column block)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub rb: usize,
    pub cb: usize,
    /// 0 for the exterior wavenumber, 1 for the interior one.
    pub wave: usize,
    pub c: [C64; 4],
    /// Identity multiple added on coincident indices.
    pub id: C64,
    /// Whether the column skeletonization of `cb` samples this kernel.
    pub col_proxy: bool,
}

/// Sample points for skeletonization: proxy-circle points plus near nodes.
#[derive(Clone, Debug, Default)]
pub(crate) struct Probe {
    pub x: Vec<Point>,
    pub nx: Vec<Point>,
    /// Source weights used when the probe acts as a source.
    pub w: Vec<f64>,
}

impl Probe {
    pub fn len(&self) -> usize {
        self.x.len()
    }
}

pub(crate) struct BlockSystem<'a> {
    pub grid: &'a Grid,
    pub formulation: Formulation,
    pub nb: usize,
    pub omega: C64,
    k: [C64; 2],
    weights: Vec<f64>,
    terms: Vec<Term>,
    /// Exterior Burton–Miller right-hand side per node.
    b: Vec<C64>,
}

fn z() -> C64 {
    C64::new(0.0, 0.0)
}

fn r(v: f64) -> C64 {
    C64::new(v, 0.0)
}

impl<'a> BlockSystem<'a> {
    pub fn new(grid: &'a Grid, params: &ProblemParams, formulation: Formulation, u_in: &[C64], q_in: &[C64]) -> BlockSystem<'a> {
        let beta = params.beta();
        let (e0, e1) = (params.eps0, params.eps1);
        let t = |rb, cb, wave, c, id, col_proxy| Term { rb, cb, wave, c, id, col_proxy };
        let bm_u = [z(), r(1.0), z(), beta];
        let bm_q = [r(-e0), z(), -e0 * beta, z()];
        let terms = match formulation {
            Formulation::Mixed => vec![
                t(0, 0, 0, [z(); 4], r(1.0), false),
                t(1, 1, 0, [z(); 4], r(1.0), false),
                t(0, 2, 1, [r(-1.0), z(), z(), z()], z(), true),
                t(1, 2, 1, [z(), z(), r(-1.0 / e1), z()], r(-0.5 / e1), false),
                t(2, 0, 0, bm_u, r(-0.5), true),
                t(2, 1, 0, bm_q, -0.5 * e0 * beta, true),
            ],
            Formulation::Ordinary => vec![
                t(0, 0, 0, bm_u, r(-0.5), true),
                t(0, 1, 0, bm_q, -0.5 * e0 * beta, true),
                t(1, 0, 1, [z(), r(1.0), z(), z()], r(0.5), true),
                t(1, 1, 1, [r(-e1), z(), z(), z()], z(), true),
            ],
        };
        let nb = match formulation {
            Formulation::Mixed => 3,
            Formulation::Ordinary => 2,
        };
        BlockSystem { grid, formulation, nb, omega: params.omega, k: [params.k0(), params.k1()], weights: grid.weights(), terms, b: exterior_rhs(params, u_in, q_in) }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Block of the right-hand side holding the exterior data.
    pub fn rhs_block(&self) -> usize {
        match self.formulation {
            Formulation::Mixed => 2,
            Formulation::Ordinary => 0,
        }
    }

    pub fn rhs_at(&self, i: usize) -> C64 {
        self.b[i]
    }

    /// Entries of several terms sharing one row set and one column set,
    /// evaluating the Bessel functions once per pair and wavenumber.
    pub fn term_blocks(&self, terms: &[Term], rows: &[usize], cols: &[usize]) -> Vec<CMat> {
        let mut out: Vec<CMat> = terms.iter().map(|_| Mat::zeros(rows.len(), cols.len())).collect();
        let g = self.grid;
        let waves: Vec<usize> = {
            let mut w: Vec<usize> = terms.iter().filter(|t| t.c.iter().any(|c| c.norm() != 0.0)).map(|t| t.wave).collect();
            w.sort_unstable();
            w.dedup();
            w
        };
        for (jc, &j) in cols.iter().enumerate() {
            let (y, ny, wy) = (g.points[j], g.normals[j], self.weights[j]);
            for (ir, &i) in rows.iter().enumerate() {
                if i == j {
                    let mut d = [[z(); 4]; 2];
                    for &w in &waves {
                        d[w] = low_order_diagonal(self.k[w], g, i);
                    }
                    for (t, m) in terms.iter().zip(out.iter_mut()) {
                        m[(ir, jc)] = dot(&t.c, &d[t.wave]) + t.id;
                    }
                    continue;
                }
                let mut kv = [[z(); 4]; 2];
                for &w in &waves {
                    kv[w] = kernel_all(self.k[w], g.points[i], g.normals[i], y, ny);
                }
                for (t, m) in terms.iter().zip(out.iter_mut()) {
                    m[(ir, jc)] = dot(&t.c, &kv[t.wave]) * wy;
                }
            }
        }
        out
    }

    /// Block-major matrix with rows `rows[b]` and columns `cols[b]`.
    pub fn block(&self, rows: &[Vec<usize>], cols: &[Vec<usize>]) -> CMat {
        let roff = offsets(rows.iter().map(|v| v.len()));
        let coff = offsets(cols.iter().map(|v| v.len()));
        let mut m = Mat::zeros(roff[self.nb], coff[self.nb]);
        for t in &self.terms {
            let (rs, cs) = (&rows[t.rb], &cols[t.cb]);
            if rs.is_empty() || cs.is_empty() {
                continue;
            }
            let b = self.term_blocks(std::slice::from_ref(t), rs, cs).pop().unwrap();
            m.as_mut().submatrix_mut(roff[t.rb], coff[t.cb], rs.len(), cs.len()).copy_from(&b);
        }
        m
    }

    /// Column-skeletonization targets, one per column block: kernels from the
    /// probe points to the cell's sources, stacked over the sampled terms.
    pub fn col_targets(&self, cols: &[Vec<usize>], probe: &Probe) -> Vec<CMat> {
        (0..self.nb)
            .map(|cb| {
                let ts: Vec<&Term> = self.terms.iter().filter(|t| t.cb == cb && t.col_proxy).collect();
                let np = probe.len();
                let cs = &cols[cb];
                let mut m = Mat::zeros(np * ts.len(), cs.len());
                for (jc, &j) in cs.iter().enumerate() {
                    let (y, ny, wy) = (self.grid.points[j], self.grid.normals[j], self.weights[j]);
                    let mut kv = [[z(); 4]; 2];
                    for p in 0..np {
                        for w in 0..2 {
                            if ts.iter().any(|t| t.wave == w) {
                                kv[w] = kernel_all(self.k[w], probe.x[p], probe.nx[p], y, ny);
                            }
                        }
                        for (s, t) in ts.iter().enumerate() {
                            m[(s * np + p, jc)] = dot(&t.c, &kv[t.wave]) * wy;
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// Row-skeletonization targets `(A[rows, probe])ᴴ`, one per row block.
    pub fn row_targets(&self, rows: &[Vec<usize>], probe: &Probe) -> Vec<CMat> {
        (0..self.nb)
            .map(|rb| {
                let ts: Vec<&Term> = self.terms.iter().filter(|t| t.rb == rb && t.c.iter().any(|c| c.norm() != 0.0)).collect();
                let np = probe.len();
                let rs = &rows[rb];
                let mut m = Mat::zeros(np * ts.len(), rs.len());
                for (ir, &i) in rs.iter().enumerate() {
                    let (x, nx) = (self.grid.points[i], self.grid.normals[i]);
                    let mut kv = [[z(); 4]; 2];
                    for p in 0..np {
                        for w in 0..2 {
                            if ts.iter().any(|t| t.wave == w) {
                                kv[w] = kernel_all(self.k[w], x, nx, probe.x[p], probe.nx[p]);
                            }
                        }
                        for (s, t) in ts.iter().enumerate() {
                            m[(s * np + p, ir)] = (dot(&t.c, &kv[t.wave]) * probe.w[p]).conj();
                        }
                    }
                }
                m
            })
            .collect()
    }
}

#[inline]
fn dot(c: &[C64; 4], k: &[C64; 4]) -> C64 {
    c[0] * k[0] + c[1] * k[1] + c[2] * k[2] + c[3] * k[3]
}

/// Prefix sums `[0, l0, l0 + l1, …]`.
pub(crate) fn offsets(lens: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v = vec![0];
    for l in lens {
        v.push(v.last().unwrap() + l);
    }
    v
}
