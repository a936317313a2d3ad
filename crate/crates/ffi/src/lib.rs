//! C ABI for the transbie solver.
//!
//! Objects cross the boundary as opaque handles created by `tb_*_new`-style
//! functions and released by the matching `tb_*_free`. Every fallible call
//! returns a [`TbStatus`]; the message of the most recent failure on the
//! calling thread is available from [`tb_last_error`]. Complex arrays are
//! interleaved `(re, im)` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use transbie::analytic_reference::{mie_solve, mie_trace, relative_error};
use transbie::direct_solver::{solve_mixed_dense, solve_ordinary_dense};
use transbie::eigensolver::{sakurai_sugiura, BieEigenProblem, SsmConfig};
use transbie::fast_solver::{solve_fast, FastConfig};
use transbie::geometry::{discretize, Curve, Grid};
use transbie::systems::{assemble_operators, build_mixed, build_ordinary, Formulation, IncidentField, ProblemParams};
use transbie::{Error, C64};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NearResonance = 3,
    NoConvergence = 4,
    DomainError = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TbFormulation {
    Mixed = 0,
    Ordinary = 1,
}

/// Which trace of a solution to copy out.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TbField {
    U = 0,
    Q = 1,
    /// Interior density; empty for the ordinary formulation.
    Phi = 2,
}

/// Discretized boundary curve.
pub struct TbGrid(Grid);

/// Material constants, frequency and coupling constant.
pub struct TbProblem(ProblemParams);

/// Boundary traces from a solve.
pub struct TbSolution {
    u: Vec<C64>,
    q: Vec<C64>,
    phi: Vec<C64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TbStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::DimensionMismatch { .. } | Error::Io(_) => TbStatus::InvalidArgument,
        Error::NearResonance { .. } => TbStatus::NearResonance,
        Error::NoConvergence(_) => TbStatus::NoConvergence,
        Error::Domain { .. } | Error::CoincidentPoints => TbStatus::DomainError,
    }
}

/// Run `f`, recording errors and containing panics.
fn guard(f: impl FnOnce() -> Result<(), (TbStatus, String)>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            TbStatus::Internal
        }
    }
}

fn lib(e: Error) -> (TbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TbStatus, String) {
    (TbStatus::NullPointer, format!("{what} is null"))
}

fn formulation(f: TbFormulation) -> Formulation {
    match f {
        TbFormulation::Mixed => Formulation::Mixed,
        TbFormulation::Ordinary => Formulation::Ordinary,
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TbStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (TbStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tb_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
        None => 0,
    })
}

/// Grid of `n` nodes on a circle of the given radius.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tb_grid_circle(radius: f64, n: usize, out: *mut *mut TbGrid) -> TbStatus {
    guard(|| {
        let g = discretize(&Curve::Circle { radius }, n).map_err(lib)?;
        put(out, TbGrid(g))
    })
}

/// Grid on the star-shaped curve with radius
/// `r(t) = c[0] + Σ_{m≥1} c[m] cos(mt) + Σ_{m≥1} s[m-1] sin(mt)`, where `c` are
/// the cosine and `s` the sine coefficients.
///
/// # Safety
/// `cos_coeffs` must point to `ncos` doubles, `sin_coeffs` to `nsin`
/// doubles (or be null when `nsin` is 0), and `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tb_grid_fourier(cos_coeffs: *const f64, ncos: usize, sin_coeffs: *const f64, nsin: usize, n: usize, out: *mut *mut TbGrid) -> TbStatus {
    guard(|| {
        if cos_coeffs.is_null() || ncos == 0 {
            return Err(null("cosine coefficients"));
        }
        if sin_coeffs.is_null() && nsin > 0 {
            return Err(null("sine coefficients"));
        }
        let c = std::slice::from_raw_parts(cos_coeffs, ncos).to_vec();
        let s = if nsin == 0 { Vec::new() } else { std::slice::from_raw_parts(sin_coeffs, nsin).to_vec() };
        let g = discretize(&Curve::Fourier { cos: c, sin: s }, n).map_err(lib)?;
        put(out, TbGrid(g))
    })
}

/// Number of nodes of a grid, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn tb_grid_len(grid: *const TbGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.n)
}

/// # Safety
/// `grid` must be null or a handle from `tb_grid_*`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_grid_free(grid: *mut TbGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Problem with exterior/interior constants and complex angular frequency;
/// the coupling constant defaults to `i/k0`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn tb_problem_new(eps0: f64, eps1: f64, omega_re: f64, omega_im: f64, out: *mut *mut TbProblem) -> TbStatus {
    guard(|| {
        let p = ProblemParams::new(eps0, eps1, C64::new(omega_re, omega_im)).map_err(lib)?;
        put(out, TbProblem(p))
    })
}

/// Set the Burton–Miller coupling constant; its imaginary part must be nonzero.
///
/// # Safety
/// `problem` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn tb_problem_set_beta(problem: *mut TbProblem, re: f64, im: f64) -> TbStatus {
    guard(|| {
        let p = problem.as_mut().ok_or_else(|| null("problem"))?;
        p.0 = p.0.with_beta(C64::new(re, im)).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from `tb_problem_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_problem_free(problem: *mut TbProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Dense solve for a plane wave travelling along +x. `order` selects the
/// quadrature (1 for the low-order scheme, 31 for the high-order one).
///
/// # Safety
/// `grid` and `problem` must be live handles; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn tb_solve(grid: *const TbGrid, problem: *const TbProblem, form: TbFormulation, order: usize, out: *mut *mut TbSolution) -> TbStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        let p = &as_ref(problem, "problem")?.0;
        let f = formulation(form);
        let (ui, qi) = IncidentField::default().evaluate(p.k0(), g).map_err(lib)?;
        let ops = assemble_operators(p, g, order, &[f]).map_err(lib)?;
        let sol = match f {
            Formulation::Mixed => {
                let (s, _) = solve_mixed_dense(build_mixed(p, &ops, &ui, &qi).map_err(lib)?).map_err(lib)?;
                TbSolution { u: s.u, q: s.q, phi: s.phi }
            }
            Formulation::Ordinary => {
                let (u, q, _) = solve_ordinary_dense(&build_ordinary(p, &ops, &ui, &qi).map_err(lib)?).map_err(lib)?;
                TbSolution { u, q, phi: Vec::new() }
            }
        };
        put(out, sol)
    })
}

/// Fast direct solve (low-order quadrature) for a plane wave along +x.
/// The grid size must be `leaf_size · 2^L` with `L ≥ 1`.
///
/// # Safety
/// `grid` and `problem` must be live handles; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn tb_solve_fast(grid: *const TbGrid, problem: *const TbProblem, form: TbFormulation, leaf_size: usize, skeletons: usize, out: *mut *mut TbSolution) -> TbStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        let p = &as_ref(problem, "problem")?.0;
        let cfg = FastConfig { leaf_size, skeletons, ..Default::default() };
        let s = solve_fast(g, p, &IncidentField::default(), formulation(form), &cfg).map_err(lib)?;
        put(out, TbSolution { u: s.u, q: s.q, phi: s.phi })
    })
}

/// Length of one field of a solution, or 0 for a null handle.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn tb_solution_len(sol: *const TbSolution, field: TbField) -> usize {
    sol.as_ref().map_or(0, |s| field_of(s, field).len())
}

fn field_of(s: &TbSolution, f: TbField) -> &[C64] {
    match f {
        TbField::U => &s.u,
        TbField::Q => &s.q,
        TbField::Phi => &s.phi,
    }
}

/// Copy a field into `buf` as `2·len` interleaved doubles; `len` is the
/// capacity in complex values.
///
/// # Safety
/// `sol` must be a live solution handle and `buf` point to `2·len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tb_solution_copy(sol: *const TbSolution, field: TbField, buf: *mut f64, len: usize) -> TbStatus {
    guard(|| {
        let s = as_ref(sol, "solution")?;
        let v = field_of(s, field);
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len < v.len() {
            return Err((TbStatus::BufferTooSmall, format!("buffer holds {len} values, field has {}", v.len())));
        }
        let out = std::slice::from_raw_parts_mut(buf, 2 * v.len());
        for (i, z) in v.iter().enumerate() {
            out[2 * i] = z.re;
            out[2 * i + 1] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a handle from `tb_solve*`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_solution_free(sol: *mut TbSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Relative 2-norm error of `(u, q)` against the circle solution. The grid
/// must be a circle and the frequency real.
///
/// # Safety
/// All handles must be live; `err` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tb_mie_error(grid: *const TbGrid, problem: *const TbProblem, sol: *const TbSolution, err: *mut f64) -> TbStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        let p = &as_ref(problem, "problem")?.0;
        let s = as_ref(sol, "solution")?;
        if err.is_null() {
            return Err(null("error output"));
        }
        let radius = match g.curve {
            Curve::Circle { radius } => radius,
            _ => return Err((TbStatus::InvalidArgument, "the circle solution needs a circle grid".into())),
        };
        let mie = mie_solve(radius, p, None).map_err(lib)?;
        let (ur, qr) = mie_trace(&mie, g).map_err(lib)?;
        *err = relative_error(&s.u, &s.q, &ur, &qr);
        Ok(())
    })
}

/// Eigenvalues inside the square of side `side` centered at
/// `center_re + i center_im`, using the default contour settings. Up to
/// `capacity` values are written; `count` receives the number found.
///
/// # Safety
/// `grid` must be live; `re`, `im` must hold `capacity` doubles; `count` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn tb_eigenvalues(
    grid: *const TbGrid,
    eps0: f64,
    eps1: f64,
    order: usize,
    form: TbFormulation,
    center_re: f64,
    center_im: f64,
    side: f64,
    re: *mut f64,
    im: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> TbStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        if count.is_null() || (capacity > 0 && (re.is_null() || im.is_null())) {
            return Err(null("output buffers"));
        }
        let op = BieEigenProblem { grid: g, eps0, eps1, order, formulations: vec![formulation(form)], beta: None };
        let cfg = SsmConfig { center: [center_re, center_im], side, ..Default::default() };
        let r = sakurai_sugiura(&op, &cfg).map_err(lib)?.remove(0);
        *count = r.eigenvalues.len();
        if r.eigenvalues.len() > capacity {
            return Err((TbStatus::BufferTooSmall, format!("{} eigenvalues found, capacity {capacity}", r.eigenvalues.len())));
        }
        for (i, e) in r.eigenvalues.iter().enumerate() {
            *re.add(i) = e.re;
            *im.add(i) = e.im;
        }
        Ok(())
    })
}
