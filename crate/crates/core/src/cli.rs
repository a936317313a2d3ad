//! Command-line front end: configuration, experiment drivers and output.
//!
//! Configuration is flat kebab-case JSON; command-line flags override the
//! file. Tabular results are CSV with the effective configuration in leading
//! `#` comment lines, structured results are JSON with a `config` member.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic_reference::{mie_solve, mie_trace, relative_error};
use crate::direct_solver::{solve_mixed_dense, solve_ordinary_dense, FlopReport};
use crate::eigensolver::{sakurai_sugiura, BieEigenProblem, ContourRule, SsmConfig};
use crate::error::{Error, Result};
use crate::fast_solver::{solve_fast, FastConfig, FastStats};
use crate::geometry::{discretize, Curve, Grid};
use crate::quadrature::{dump_operator, OperatorKind, OperatorMatrix};
use crate::systems::{assemble_operators, build_mixed, build_ordinary, Formulation, IncidentField, ProblemParams};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Dense,
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Mixed,
    Ordinary,
}

/// Every setting of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub curve: Curve,
    pub eps0: f64,
    pub eps1: f64,
    /// `[re, im]`.
    pub omega: [f64; 2],
    /// `[re, im]`; absent selects `i/k0`.
    pub beta: Option<[f64; 2]>,
    pub incident: IncidentField,
    pub formulation: Formulation,
    pub solver: SolverKind,
    pub n: usize,
    /// Grid sizes for `convergence` and `benchmark`; empty means `[n]`.
    pub n_sweep: Vec<usize>,
    pub order: usize,
    pub leaf_size: usize,
    pub skeletons: usize,
    pub growth: f64,
    pub proxy_scale: f64,
    pub min_proxy_points: usize,
    pub skeleton_tol: Option<f64>,
    pub levels: Option<usize>,
    pub exact_far_field: bool,
    pub contour_center: [f64; 2],
    pub contour_side: f64,
    pub points_per_side: usize,
    pub moments: usize,
    pub block_size: usize,
    pub sigma_tol: f64,
    pub contour_rule: ContourRule,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub dump_operators: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fast = FastConfig::default();
        let ssm = SsmConfig::default();
        RunConfig {
            schema_version: SCHEMA_VERSION,
            curve: Curve::Circle { radius: 1.0 },
            eps0: 1.0,
            eps1: 2.0,
            omega: [1.0, 0.0],
            beta: None,
            incident: IncidentField::default(),
            formulation: Formulation::Mixed,
            solver: SolverKind::Dense,
            n: 400,
            n_sweep: Vec::new(),
            order: crate::quadrature::LOW_ORDER,
            leaf_size: 100,
            skeletons: fast.skeletons,
            growth: fast.growth,
            proxy_scale: fast.proxy_scale,
            min_proxy_points: fast.min_proxy_points,
            skeleton_tol: None,
            levels: None,
            exact_far_field: false,
            contour_center: [0.43, -1.28],
            contour_side: ssm.side,
            points_per_side: ssm.points_per_side,
            moments: ssm.moments,
            block_size: ssm.block_size,
            sigma_tol: ssm.sigma_tol,
            contour_rule: ssm.rule,
            seed: 0,
            threads: None,
            out: None,
            dump_operators: None,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ProblemParams> {
        let p = ProblemParams::new(self.eps0, self.eps1, C64::new(self.omega[0], self.omega[1]))?;
        match self.beta {
            Some([re, im]) => p.with_beta(C64::new(re, im)),
            None => Ok(p),
        }
    }

    pub fn sweep(&self) -> Vec<usize> {
        if self.n_sweep.is_empty() {
            vec![self.n]
        } else {
            self.n_sweep.clone()
        }
    }

    pub fn fast(&self) -> FastConfig {
        FastConfig {
            leaf_size: self.leaf_size,
            skeletons: self.skeletons,
            growth: self.growth,
            proxy_scale: self.proxy_scale,
            min_proxy_points: self.min_proxy_points,
            tolerance: self.skeleton_tol,
            levels: self.levels,
            exact_far_field: self.exact_far_field,
        }
    }

    pub fn ssm(&self) -> SsmConfig {
        SsmConfig {
            center: self.contour_center,
            side: self.contour_side,
            points_per_side: self.points_per_side,
            moments: self.moments,
            block_size: self.block_size,
            seed: self.seed,
            sigma_tol: self.sigma_tol,
            rule: self.contour_rule,
            ..Default::default()
        }
    }

    /// Checks that do not need any assembly.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema version {}", self.schema_version)));
        }
        self.params()?;
        for &n in &self.sweep() {
            if n % 2 != 0 {
                return Err(Error::Config(format!("N must be even, got {n}")));
            }
            if n < 8 {
                return Err(Error::Config(format!("N must be at least 8, got {n}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        self.fast().validate()?;
        self.ssm().validate()?;
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "transbie", version, about = "2D Helmholtz transmission solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Solve one scattering problem.
    Solve,
    /// Solve with the fast direct solver.
    SolveFast,
    /// Eigenvalues inside a square contour.
    Eig,
    /// Flops and wall time of both formulations over an N sweep.
    Benchmark,
    /// Circle solution coefficients and traces.
    MieReference,
    /// Error against the circle solution over an N sweep.
    Convergence,
}

#[derive(clap::Args, Debug, Default, Clone)]
pub struct Flags {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub formulation: Option<FormulationArg>,
    #[arg(long, global = true)]
    pub solver: Option<SolverKind>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// `re` or `re,im`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub omega: Option<String>,
    #[arg(long, global = true)]
    pub eps1: Option<f64>,
    /// `re,im`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub dump_operators: Option<PathBuf>,
    /// Fail with exit code 4 when the convergence checks do not hold.
    #[arg(long, global = true)]
    pub assert: bool,
}

fn parse_complex(s: &str, what: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| Error::Config(format!("--{what}: cannot parse {p:?} as a number")));
    match parts.as_slice() {
        [re] => Ok([num(re)?, 0.0]),
        [re, im] => Ok([num(re)?, num(im)?]),
        _ => Err(Error::Config(format!("--{what} expects re or re,im, got {s:?}"))),
    }
}

/// Read the file (if any), apply flag overrides and validate.
pub fn parse_config(file: Option<&Path>, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            parse_config_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(f) = flags.formulation {
        cfg.formulation = match f {
            FormulationArg::Mixed => Formulation::Mixed,
            FormulationArg::Ordinary => Formulation::Ordinary,
        };
    }
    if let Some(s) = flags.solver {
        cfg.solver = s;
    }
    if let Some(n) = flags.n {
        cfg.n = n;
        cfg.n_sweep.clear();
    }
    if let Some(w) = &flags.omega {
        cfg.omega = parse_complex(w, "omega")?;
    }
    if let Some(e) = flags.eps1 {
        cfg.eps1 = e;
    }
    if let Some(b) = &flags.beta {
        let v = parse_complex(b, "beta")?;
        cfg.beta = Some(v);
    }
    if let Some(o) = &flags.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(t) = flags.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = &flags.dump_operators {
        cfg.dump_operators = Some(d.clone());
    }
    cfg.validate().map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })?;
    Ok(cfg)
}

/// Parse JSON text; serde reports unknown keys and type errors with line and column.
pub fn parse_config_str(text: &str) -> std::result::Result<RunConfig, serde_json::Error> {
    if text.trim().is_empty() {
        return Ok(RunConfig::default());
    }
    serde_json::from_str(text)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::DimensionMismatch { .. } | Error::Io(_) => EXIT_CONFIG,
        Error::NearResonance { .. } | Error::NoConvergence(_) | Error::Domain { .. } | Error::CoincidentPoints => EXIT_NUMERICAL,
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match parse_config(cli.flags.config.as_deref(), &cli.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(t) = cfg.threads {
        // A second initialization (e.g. in tests) keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli.command, &cfg, cli.flags.assert) {
        Ok(Outcome { text, checks_passed }) => {
            if let Err(e) = emit(&cfg, &text) {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
            if checks_passed {
                EXIT_OK
            } else {
                eprintln!("error: convergence checks failed");
                EXIT_ASSERT
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub struct Outcome {
    pub text: String,
    pub checks_passed: bool,
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, assert: bool) -> Result<Outcome> {
    let done = |text: String| Ok(Outcome { text, checks_passed: true });
    match cmd {
        Command::Solve => done(run_solve(cfg, cfg.solver)?),
        Command::SolveFast => done(run_solve(cfg, SolverKind::Fast)?),
        Command::Eig => done(run_eig(cfg)?),
        Command::Benchmark => done(run_benchmark(cfg)?),
        Command::MieReference => done(run_mie(cfg)?),
        Command::Convergence => {
            let (text, ok) = run_convergence(cfg)?;
            Ok(Outcome { text, checks_passed: ok || !assert })
        }
    }
}

fn config_json(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn pairs(v: &[C64]) -> Value {
    Value::Array(v.iter().map(|z| json!([z.re, z.im])).collect())
}

fn csv_header(cfg: &RunConfig) -> String {
    format!("# schema-version: {SCHEMA_VERSION}\n# config: {}\n", serde_json::to_string(cfg).expect("config serializes"))
}

/// Mie reference traces when the run is plane-wave scattering by a circle.
fn mie_reference(cfg: &RunConfig, grid: &Grid, p: &ProblemParams) -> Result<Option<(Vec<C64>, Vec<C64>)>> {
    match (&cfg.curve, &cfg.incident) {
        (Curve::Circle { radius }, IncidentField::PlaneWave { direction }) if *direction == [1.0, 0.0] && p.omega.im == 0.0 => {
            let sol = mie_solve(*radius, p, None)?;
            Ok(Some(mie_trace(&sol, grid)?))
        }
        _ => Ok(None),
    }
}

pub struct SolveResult {
    pub u: Vec<C64>,
    pub q: Vec<C64>,
    pub phi: Vec<C64>,
    pub flops: Option<FlopReport>,
    pub fast_stats: Option<FastStats>,
    pub seconds: f64,
}

pub fn solve_once(cfg: &RunConfig, grid: &Grid, p: &ProblemParams, formulation: Formulation, solver: SolverKind) -> Result<SolveResult> {
    let t0 = Instant::now();
    if solver == SolverKind::Fast {
        let s = solve_fast(grid, p, &cfg.incident, formulation, &cfg.fast())?;
        return Ok(SolveResult { u: s.u, q: s.q, phi: s.phi, flops: None, fast_stats: Some(s.stats), seconds: t0.elapsed().as_secs_f64() });
    }
    let (ui, qi) = cfg.incident.evaluate(p.k0(), grid)?;
    let ops = assemble_operators(p, grid, cfg.order, &[formulation])?;
    if let Some(dir) = &cfg.dump_operators {
        dump_all(dir, &ops, p, grid.n)?;
    }
    let (u, q, phi, flops) = match formulation {
        Formulation::Mixed => {
            let (s, f) = solve_mixed_dense(build_mixed(p, &ops, &ui, &qi)?)?;
            (s.u, s.q, s.phi, f)
        }
        Formulation::Ordinary => {
            let (u, q, f) = solve_ordinary_dense(&build_ordinary(p, &ops, &ui, &qi)?)?;
            (u, q, Vec::new(), f)
        }
    };
    Ok(SolveResult { u, q, phi, flops: Some(flops), fast_stats: None, seconds: t0.elapsed().as_secs_f64() })
}

fn dump_all(dir: &Path, ops: &crate::systems::Operators, p: &ProblemParams, n: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut list = vec![
        ("S_k0", OperatorKind::S, p.k0(), &ops.s0),
        ("D_k0", OperatorKind::D, p.k0(), &ops.d0),
        ("Dstar_k0", OperatorKind::Dstar, p.k0(), &ops.ds0),
        ("N_k0", OperatorKind::N, p.k0(), &ops.n0),
        ("S_k1", OperatorKind::S, p.k1(), &ops.s1),
    ];
    if let Some(m) = &ops.ds1 {
        list.push(("Dstar_k1", OperatorKind::Dstar, p.k1(), m));
    }
    if let Some(m) = &ops.d1 {
        list.push(("D_k1", OperatorKind::D, p.k1(), m));
    }
    let mut files = Vec::new();
    for (name, kind, k, m) in list {
        let file = format!("{name}.bin");
        dump_operator(&OperatorMatrix { kind, k, order: ops.order, entries: m.clone() }, &dir.join(&file))?;
        files.push(json!({"file": file, "operator": kind.name(), "k": [k.re, k.im]}));
    }
    let manifest = json!({
        "schema-version": SCHEMA_VERSION,
        "n": n,
        "order": ops.order,
        "layout": "row-major, little-endian complex128 (re, im) pairs",
        "operators": files,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json"))?;
    Ok(())
}

fn run_solve(cfg: &RunConfig, solver: SolverKind) -> Result<String> {
    let grid = discretize(&cfg.curve, cfg.n)?;
    let p = cfg.params()?;
    let r = solve_once(cfg, &grid, &p, cfg.formulation, solver)?;
    let err = mie_reference(cfg, &grid, &p)?.map(|(ur, qr)| relative_error(&r.u, &r.q, &ur, &qr));
    let out = json!({
        "schema-version": SCHEMA_VERSION,
        "config": config_json(&RunConfig { solver, ..cfg.clone() }),
        "formulation": cfg.formulation,
        "solver": solver,
        "n": cfg.n,
        "wall-seconds": r.seconds,
        "rel-error-vs-mie": err,
        "flops": r.flops,
        "fast-stats": r.fast_stats,
        "u": pairs(&r.u),
        "q": pairs(&r.q),
        "phi": pairs(&r.phi),
    });
    Ok(serde_json::to_string_pretty(&out).expect("json") + "\n")
}

fn run_eig(cfg: &RunConfig) -> Result<String> {
    let grid = discretize(&cfg.curve, cfg.n)?;
    let op = BieEigenProblem { grid: &grid, eps0: cfg.eps0, eps1: cfg.eps1, order: cfg.order, formulations: vec![cfg.formulation], beta: cfg.beta.map(|[re, im]| C64::new(re, im)) };
    let r = sakurai_sugiura(&op, &cfg.ssm())?.remove(0);
    let out = json!({
        "schema-version": SCHEMA_VERSION,
        "eigenvalues": r.eigenvalues,
        "rank": r.rank,
        "rejected": r.rejected,
        "singular-values": r.singular_values,
        "config": config_json(cfg),
    });
    Ok(serde_json::to_string_pretty(&out).expect("json") + "\n")
}

fn run_mie(cfg: &RunConfig) -> Result<String> {
    let radius = match cfg.curve {
        Curve::Circle { radius } => radius,
        _ => return Err(Error::Config("mie-reference needs a circle".into())),
    };
    let p = cfg.params()?;
    let sol = mie_solve(radius, &p, None)?;
    let grid = discretize(&cfg.curve, cfg.n)?;
    let (u, q) = mie_trace(&sol, &grid)?;
    let nm = sol.n_max as i64;
    let out = json!({
        "schema-version": SCHEMA_VERSION,
        "config": config_json(cfg),
        "n-max": sol.n_max,
        "modes": (-nm..=nm).collect::<Vec<_>>(),
        "a": pairs(&sol.a),
        "b": pairs(&sol.b),
        "energy-balance": sol.energy_balance(),
        "u": pairs(&u),
        "q": pairs(&q),
    });
    Ok(serde_json::to_string_pretty(&out).expect("json") + "\n")
}

/// Least-squares slope of `log e` against `log N`.
pub fn loglog_slope(ns: &[usize], errs: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Number of consecutive increases in a sequence expected to decrease.
pub fn inversions(errs: &[f64]) -> usize {
    errs.windows(2).filter(|w| w[1] > w[0]).count()
}

fn run_convergence(cfg: &RunConfig) -> Result<(String, bool)> {
    let p = cfg.params()?;
    let mut text = csv_header(cfg);
    text.push_str("formulation,solver,N,omega,eps1,rel_error,wall_seconds\n");
    let ns = cfg.sweep();
    let mut errs = Vec::new();
    for &n in &ns {
        let grid = discretize(&cfg.curve, n)?;
        let (ur, qr) = mie_reference(cfg, &grid, &p)?.ok_or_else(|| Error::Config("convergence needs plane-wave scattering by a circle at real frequency".into()))?;
        let r = solve_once(cfg, &grid, &p, cfg.formulation, cfg.solver)?;
        let e = relative_error(&r.u, &r.q, &ur, &qr);
        errs.push(e);
        writeln!(text, "{},{},{},{},{},{:.6e},{:.3}", cfg.formulation.name(), solver_name(cfg.solver), n, cfg.omega[0], cfg.eps1, e, r.seconds).unwrap();
    }
    let ok = if ns.len() >= 2 {
        let slope = loglog_slope(&ns, &errs);
        writeln!(text, "# slope: {slope:.4}").unwrap();
        (slope + 1.0).abs() <= 0.35 && inversions(&errs) <= 1
    } else {
        true
    };
    Ok((text, ok))
}

fn solver_name(s: SolverKind) -> &'static str {
    match s {
        SolverKind::Dense => "dense",
        SolverKind::Fast => "fast",
    }
}

fn run_benchmark(cfg: &RunConfig) -> Result<String> {
    if cfg.omega[1] != 0.0 {
        return Err(Error::Config("benchmark expects a real frequency".into()));
    }
    let p = cfg.params()?;
    let mut text = csv_header(cfg);
    text.push_str("formulation,N,omega,eps1,flops_counted,flops_theoretical,wall_seconds,rel_error_vs_mie\n");
    let mut ratios = Vec::new();
    for &n in &cfg.sweep() {
        let grid = discretize(&cfg.curve, n)?;
        let mie = mie_reference(cfg, &grid, &p)?;
        let mut row = Vec::new();
        for f in [Formulation::Mixed, Formulation::Ordinary] {
            let r = solve_once(cfg, &grid, &p, f, cfg.solver)?;
            let (counted, theory) = match (&r.flops, &r.fast_stats) {
                (Some(fl), _) => (fl.normalized, fl.theoretical),
                (None, Some(st)) => (st.flops_normalized, f64::NAN),
                _ => (f64::NAN, f64::NAN),
            };
            let err = mie.as_ref().map(|(ur, qr)| format!("{:.6e}", relative_error(&r.u, &r.q, ur, qr))).unwrap_or_default();
            let theory = if theory.is_finite() { format!("{theory:.6e}") } else { String::new() };
            writeln!(text, "{},{},{},{},{:.6e},{},{:.4},{}", f.name(), n, cfg.omega[0], cfg.eps1, counted, theory, r.seconds, err).unwrap();
            row.push((counted, r.seconds));
        }
        ratios.push((n, row[1].0 / row[0].0, row[1].1 / row[0].1));
    }
    for (n, fr, tr) in ratios {
        writeln!(text, "# N={n} flops ordinary/mixed={fr:.4} time ordinary/mixed={tr:.4}").unwrap();
    }
    Ok(text)
}
