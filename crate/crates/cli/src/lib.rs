//! Command-line front end for the IRJBD solver.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use irjbd::driver::{Criterion, RestartMode, SolveOutcome, SolverConfig, Status};
use irjbd::sparsemat::{read_matrix_market, second_order_l};
use irjbd::{irjbd_solve, SparseMatrix};
use serde::Serialize;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Implicit,
    Thick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Pq,
    W,
}

/// Extreme GSVD components of a sparse pair {A, L}.
#[derive(Debug, Parser)]
#[command(name = "irjbd", version, allow_negative_numbers = true)]
pub struct Args {
    /// Matrix Market file for A.
    #[arg(long = "A", value_name = "PATH")]
    pub a: PathBuf,
    /// Matrix Market file, `identity` or `second-order`.
    #[arg(long = "L", value_name = "PATH|identity|second-order")]
    pub l: String,
    /// Number of components; positive for the largest, negative for the smallest.
    #[arg(long)]
    pub target: i64,
    #[arg(long, default_value_t = 30)]
    pub kmax: usize,
    #[arg(long, default_value_t = 3)]
    pub adjust: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Maximum number of restarts.
    #[arg(long, default_value_t = 1000)]
    pub maxit: usize,
    #[arg(long = "lsqr-tol")]
    pub lsqr_tol: Option<f64>,
    #[arg(long = "lsqr-maxit")]
    pub lsqr_maxit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "restart-mode", value_enum, default_value_t = ModeArg::Implicit)]
    pub restart_mode: ModeArg,
    #[arg(long, value_enum, default_value_t = CriterionArg::Pq)]
    pub criterion: CriterionArg,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-restart convergence data.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Include x, y and z in the report.
    #[arg(long)]
    pub vectors: bool,
}

#[derive(Serialize)]
struct MatrixInfo {
    source: String,
    rows: usize,
    cols: usize,
    nnz: usize,
}

#[derive(Serialize)]
struct ConfigEcho {
    a: MatrixInfo,
    l: MatrixInfo,
    target: i64,
    kmax: usize,
    kmax_used: usize,
    adjust: usize,
    adjust_used: usize,
    tol: f64,
    maxit: usize,
    lsqr_tol: f64,
    lsqr_maxit: usize,
    seed: u64,
    restart_mode: &'static str,
    criterion: &'static str,
}

#[derive(Serialize)]
struct Summary {
    status: &'static str,
    restarts: usize,
    rnorm_estimate: f64,
    lsqr_iterations: usize,
    lsqr_failures: usize,
    ritz_values: Vec<f64>,
}

#[derive(Serialize)]
struct ComponentReport {
    value: f64,
    c: f64,
    s: f64,
    residual_norm: f64,
    relative_residual: f64,
    bound: f64,
    converged: bool,
    reliable: bool,
    lsqr_converged: bool,
    lsqr_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct HistoryReport {
    restart: usize,
    max_bound: f64,
    diag_product: f64,
    lsqr_iters: usize,
    reliability_warning: bool,
    shifts: Vec<f64>,
}

#[derive(Serialize)]
struct Timing {
    load_seconds: f64,
    solve_seconds: f64,
}

/// The written report. Everything except `timing` is a function of the inputs.
#[derive(Serialize)]
struct RunReport {
    config: ConfigEcho,
    result: Summary,
    components: Vec<ComponentReport>,
    history: Vec<HistoryReport>,
    timing: Timing,
}

fn load_a(path: &Path) -> Result<SparseMatrix> {
    read_matrix_market(path).with_context(|| format!("cannot read A from {}", path.display()))
}

fn load_l(source: &str, n: usize) -> Result<SparseMatrix> {
    match source {
        "identity" => Ok(SparseMatrix::identity(n)),
        "second-order" => second_order_l(n).context("cannot build the second-order L"),
        path => read_matrix_market(path).with_context(|| format!("cannot read L from {path}")),
    }
}

fn info(source: &str, m: &SparseMatrix) -> MatrixInfo {
    MatrixInfo {
        source: source.to_string(),
        rows: m.nrows(),
        cols: m.ncols(),
        nnz: m.nnz(),
    }
}

fn solver_config(args: &Args) -> SolverConfig {
    let mut cfg = SolverConfig::new(args.target, args.kmax);
    cfg.adjust = args.adjust;
    cfg.tol = args.tol;
    cfg.maxit = args.maxit;
    cfg.lsqr_tol = args.lsqr_tol;
    cfg.lsqr_maxit = args.lsqr_maxit;
    cfg.seed = args.seed;
    cfg.restart_mode = match args.restart_mode {
        ModeArg::Implicit => RestartMode::Implicit,
        ModeArg::Thick => RestartMode::Thick,
    };
    cfg.criterion = match args.criterion {
        CriterionArg::Pq => Criterion::BoundPq,
        CriterionArg::W => Criterion::BoundW,
    };
    cfg
}

fn history_csv(out: &SolveOutcome) -> String {
    let mut s = String::from("restart,max_bound,diag_product,lsqr_iters\n");
    for h in &out.history {
        s.push_str(&format!(
            "{},{:e},{:e},{}\n",
            h.restart_index,
            h.max_bound(),
            h.diag_product,
            h.lsqr_iters_total
        ));
    }
    s
}

fn build_report(
    args: &Args,
    cfg: &SolverConfig,
    a: &SparseMatrix,
    l: &SparseMatrix,
    out: &SolveOutcome,
    timing: Timing,
) -> RunReport {
    let ls = cfg.lsqr_config(a.ncols());
    let vec = |v: &[f64]| args.vectors.then(|| v.to_vec());
    RunReport {
        config: ConfigEcho {
            a: info(&args.a.display().to_string(), a),
            l: info(&args.l, l),
            target: cfg.target,
            kmax: cfg.kmax,
            kmax_used: out.kmax,
            adjust: cfg.adjust,
            adjust_used: out.adjust,
            tol: cfg.tol,
            maxit: cfg.maxit,
            lsqr_tol: ls.tol,
            lsqr_maxit: ls.maxit,
            seed: cfg.seed,
            restart_mode: match cfg.restart_mode {
                RestartMode::Implicit => "implicit",
                RestartMode::Thick => "thick",
            },
            criterion: match cfg.criterion {
                Criterion::BoundPq => "pq",
                Criterion::BoundW => "w",
            },
        },
        result: Summary {
            status: out.status.as_str(),
            restarts: out.restarts,
            rnorm_estimate: out.rnorm_estimate,
            lsqr_iterations: out.lsqr_iterations,
            lsqr_failures: out.lsqr_failures,
            ritz_values: out.ritz_values.clone(),
        },
        components: out
            .components
            .iter()
            .map(|c| ComponentReport {
                value: c.value(),
                c: c.c,
                s: c.s,
                residual_norm: c.residual_norm,
                relative_residual: c.relative_residual,
                bound: c.bound,
                converged: c.converged,
                reliable: c.reliable,
                lsqr_converged: c.lsqr_converged,
                lsqr_iterations: c.lsqr_iterations,
                x: vec(c.x.as_slice()),
                y: vec(c.y.as_slice()),
                z: vec(c.z.as_slice()),
            })
            .collect(),
        history: out
            .history
            .iter()
            .map(|h| HistoryReport {
                restart: h.restart_index,
                max_bound: h.max_bound(),
                diag_product: h.diag_product,
                lsqr_iters: h.lsqr_iters_total,
                reliability_warning: h.reliability_warning,
                shifts: h.shifts_used.clone(),
            })
            .collect(),
        timing,
    }
}

/// Runs one invocation and returns the exit code.
pub fn run(args: &Args) -> Result<i32> {
    let t0 = Instant::now();
    let a = load_a(&args.a)?;
    let l = load_l(&args.l, a.ncols())?;
    if l.ncols() != a.ncols() {
        bail!(
            "dimension mismatch: A has {} columns but L has {}",
            a.ncols(),
            l.ncols()
        );
    }
    let load_seconds = t0.elapsed().as_secs_f64();

    let cfg = solver_config(args);
    let t1 = Instant::now();
    let out = irjbd_solve(&a, &l, &cfg).context("solver failed")?;
    let solve_seconds = t1.elapsed().as_secs_f64();

    let report = build_report(
        args,
        &cfg,
        &a,
        &l,
        &out,
        Timing {
            load_seconds,
            solve_seconds,
        },
    );
    let text = toml::to_string(&report).context("cannot serialize the report")?;
    match &args.out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(p) = &args.history {
        fs::write(p, history_csv(&out)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    log::info!("{} after {} restarts", out.status.as_str(), out.restarts);
    Ok(match out.status {
        Status::Converged => EXIT_CONVERGED,
        _ => EXIT_PARTIAL,
    })
}

/// Parses `argv` (including the program name), runs, and maps errors to exit code 1.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_CONVERGED };
        }
    };
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
