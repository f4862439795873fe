//! Command-line front end: `qap-solve`, `qap-bench`, `bw-solve`, `project`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bandwidth::{run_bi_lp, BandwidthResult};
use crate::birkhoff::{project_birkhoff, DEFAULT_TOL};
use crate::enhancements::{run_variant, EnhanceConfig, Variant};
use crate::error::{Error, Result};
use crate::io::{read_pattern, read_qaplib, write_reports, Report, ReportFormat};
use crate::matrix::SquareMatrix;
use crate::objective::Penalty;
use crate::solver::SolverConfig;

/// Exit code for bad input, bad flags or configuration errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit code when a solve ran but was flagged as not converged.
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "lpperm", version, about = "Lp-regularized solver for problems over permutation matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one QAPLIB instance and write a report.
    QapSolve(QapSolveArgs),
    /// Solve every `.dat` file in a directory and write one report row each.
    QapBench(QapBenchArgs),
    /// Minimize the bandwidth of a sparse symmetric pattern.
    BwSolve(BwSolveArgs),
    /// Project a dense matrix onto the doubly stochastic matrices.
    Project(ProjectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Lp,
    LpCp,
    LpNegprox,
    LpCpNegprox,
    L2,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Lp => Variant::Lp,
            VariantArg::LpCp => Variant::LpCp,
            VariantArg::LpNegprox => Variant::LpNegProx,
            VariantArg::LpCpNegprox => Variant::LpCpNegProx,
            VariantArg::L2 => Variant::L2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Lp,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => ReportFormat::JsonLines,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

fn defaults() -> SolverConfig {
    SolverConfig::default()
}

/// One flag per solver parameter.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Exponent of the Lp regularizer
    #[arg(long, default_value_t = defaults().p)]
    pub p: f64,
    /// Initial smoothing parameter
    #[arg(long, default_value_t = defaults().eps0)]
    pub eps0: f64,
    /// Floor of the smoothing parameter
    #[arg(long, default_value_t = defaults().eps_min)]
    pub eps_min: f64,
    /// Shrink factor of the smoothing parameter
    #[arg(long, default_value_t = defaults().gamma)]
    pub gamma: f64,
    /// Upper bound for the initial (negative) regularization weight
    #[arg(long, allow_hyphen_values = true, default_value_t = defaults().sigma_minus)]
    pub sigma_minus: f64,
    /// Cap on the regularization weight
    #[arg(long, default_value_t = defaults().sigma_max)]
    pub sigma_max: f64,
    /// Sparsity tolerance of the outer stopping test
    #[arg(long, default_value_t = defaults().tol)]
    pub tol: f64,
    /// First step size
    #[arg(long, default_value_t = defaults().alpha0)]
    pub alpha0: f64,
    /// Sufficient decrease constant of the line search
    #[arg(long, default_value_t = defaults().theta)]
    pub theta: f64,
    /// Backtracking factor of the line search
    #[arg(long, default_value_t = defaults().delta)]
    pub delta: f64,
    /// Averaging weight of the nonmonotone reference value
    #[arg(long, default_value_t = defaults().eta)]
    pub eta: f64,
    /// Initial step tolerance of the subproblems
    #[arg(long, default_value_t = defaults().tau0_x)]
    pub tau0_x: f64,
    /// Initial objective tolerance of the subproblems
    #[arg(long, default_value_t = defaults().tau0_f)]
    pub tau0_f: f64,
    /// Floor of the step tolerance
    #[arg(long, default_value_t = defaults().tau_min_x)]
    pub tau_min_x: f64,
    /// Floor of the objective tolerance
    #[arg(long, default_value_t = defaults().tau_min_f)]
    pub tau_min_f: f64,
    /// Outer iteration limit
    #[arg(long, default_value_t = defaults().max_outer)]
    pub max_outer: usize,
    /// Inner iteration limit per subproblem
    #[arg(long, default_value_t = defaults().max_inner)]
    pub max_inner: usize,
    /// Round and polish every this many inner iterations
    #[arg(long, default_value_t = defaults().local_search_every)]
    pub local_search_every: usize,
    /// Random seed
    #[arg(long, default_value_t = defaults().seed)]
    pub seed: u64,
    /// Sparsity term; `--variant l2` overrides it
    #[arg(long, value_enum, default_value_t = PenaltyArg::Lp)]
    pub penalty: PenaltyArg,
    /// Residual tolerance of every Birkhoff projection
    #[arg(long, default_value_t = defaults().proj_tol)]
    pub proj_tol: f64,
    /// Weight of the random point in a perturbation restart
    #[arg(long, default_value_t = defaults().perturb_beta)]
    pub perturb_beta: f64,
    /// Record wall-clock times (reports are then no longer byte-reproducible)
    #[arg(long)]
    pub timing: bool,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            p: self.p,
            eps0: self.eps0,
            eps_min: self.eps_min,
            gamma: self.gamma,
            sigma_minus: self.sigma_minus,
            sigma_max: self.sigma_max,
            tol: self.tol,
            alpha0: self.alpha0,
            theta: self.theta,
            delta: self.delta,
            eta: self.eta,
            tau0_x: self.tau0_x,
            tau0_f: self.tau0_f,
            tau_min_x: self.tau_min_x,
            tau_min_f: self.tau_min_f,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            local_search_every: self.local_search_every,
            seed: self.seed,
            penalty: match self.penalty {
                PenaltyArg::Lp => Penalty::Lp,
                PenaltyArg::L2 => Penalty::L2,
            },
            proj_tol: self.proj_tol,
            perturb_beta: self.perturb_beta,
            timing: self.timing,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EnhanceArgs {
    /// Algorithm variant
    #[arg(long, value_enum, default_value_t = VariantArg::Lp)]
    pub variant: VariantArg,
    /// Round limit of the cutting-plane and negative-proximal variants
    #[arg(long, default_value_t = EnhanceConfig::default().k_max)]
    pub kmax: usize,
    /// Initial prox weight [default: min(0.5, curvature spread / 100)]
    #[arg(long)]
    pub mu0: Option<f64>,
    /// Cut slack in objective units [default: 1 for integer data, 1e-6 |f| otherwise]
    #[arg(long)]
    pub c1: Option<f64>,
    /// Convexifying weight of the linearization cut [default: 1 - nu_f / 2]
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
}

impl EnhanceArgs {
    pub fn config(&self) -> EnhanceConfig {
        EnhanceConfig { k_max: self.kmax, mu0: self.mu0, c1: self.c1, omega: self.omega }
    }

    fn uses_rounds(&self) -> bool {
        !matches!(self.variant, VariantArg::Lp | VariantArg::L2)
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Report format
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    pub format: FormatArg,
    /// Report file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QapSolveArgs {
    /// QAPLIB instance file
    pub instance: PathBuf,
    #[command(flatten)]
    pub enhance: EnhanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Write the outer-iteration trace as JSON lines to this file
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QapBenchArgs {
    /// Directory of QAPLIB `.dat` files
    pub dir: PathBuf,
    #[command(flatten)]
    pub enhance: EnhanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Instances solved concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct BwSolveArgs {
    /// Matrix Market file (`.mtx`) or edge list
    pub pattern: PathBuf,
    #[command(flatten)]
    pub enhance: EnhanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Report format
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    pub format: FormatArg,
    /// Report file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Whitespace-separated matrix, row-major [default: stdin]
    pub input: Option<PathBuf>,
    /// Matrix order; inferred from a square token count when absent
    #[arg(long)]
    pub n: Option<usize>,
    /// Residual tolerance
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Serialize)]
struct BandwidthReport<'a> {
    name: String,
    n: usize,
    edges: usize,
    bw: usize,
    rcm_bw: usize,
    /// 1-based vertex placed at each position.
    perm: Vec<usize>,
    variant: Variant,
    config: &'a SolverConfig,
    trace: &'a [crate::bandwidth::BisectionStep],
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::QapSolve(a) => qap_solve(&a),
        Command::QapBench(a) => qap_bench(&a),
        Command::BwSolve(a) => bw_solve(&a),
        Command::Project(a) => project(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn solve_file(path: &Path, cfg: &SolverConfig, ecfg: &EnhanceConfig, variant: Variant, rounds: bool) -> Result<Report> {
    let inst = read_qaplib(path)?;
    let res = run_variant(&inst, cfg, ecfg, variant)?;
    Ok(Report::new(&inst, variant, cfg, rounds.then_some(ecfg), res))
}

fn checked_configs(solver: &SolverArgs, enhance: &EnhanceArgs) -> Result<(SolverConfig, EnhanceConfig)> {
    let cfg = solver.config();
    let ecfg = enhance.config();
    cfg.validate()?;
    ecfg.validate()?;
    Ok((cfg, ecfg))
}

fn qap_solve(a: &QapSolveArgs) -> Result<i32> {
    let (cfg, ecfg) = checked_configs(&a.solver, &a.enhance)?;
    let report = solve_file(&a.instance, &cfg, &ecfg, a.enhance.variant.into(), a.enhance.uses_rounds())?;
    emit(a.output.out.as_deref(), &write_reports(std::slice::from_ref(&report), a.output.format.into())?)?;
    if let Some(path) = &a.trace {
        let mut text = String::new();
        for rec in &report.result.trace {
            text.push_str(&serde_json::to_string(rec).map_err(|e| Error::Io(e.to_string()))?);
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    Ok(if report.result.converged() { 0 } else { EXIT_NOT_CONVERGED })
}

fn qap_bench(a: &QapBenchArgs) -> Result<i32> {
    let (cfg, ecfg) = checked_configs(&a.solver, &a.enhance)?;
    if a.jobs == 0 {
        return Err(Error::InvalidParameter("--jobs must be at least 1".into()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&a.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dat"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!("no .dat files in {}", a.dir.display())));
    }
    let variant: Variant = a.enhance.variant.into();
    let rounds = a.enhance.uses_rounds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let reports: Vec<Report> = pool.install(|| {
        files.par_iter().map(|f| solve_file(f, &cfg, &ecfg, variant, rounds)).collect::<Result<_>>()
    })?;
    emit(a.output.out.as_deref(), &write_reports(&reports, a.output.format.into())?)?;

    let gaps: Vec<f64> = reports.iter().filter_map(|r| r.gap).collect();
    if !gaps.is_empty() {
        let zero = gaps.iter().filter(|&&g| g == 0.0).count();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        eprintln!("{} instances, {zero} at gap 0.0000, mean gap {mean:.4}", reports.len());
    }
    Ok(if reports.iter().all(|r| r.result.converged()) { 0 } else { EXIT_NOT_CONVERGED })
}

fn bw_solve(a: &BwSolveArgs) -> Result<i32> {
    let (cfg, ecfg) = checked_configs(&a.solver, &a.enhance)?;
    let pattern = read_pattern(&a.pattern)?;
    let variant: Variant = a.enhance.variant.into();
    let BandwidthResult { bw, perm, rcm_bw, trace } = run_bi_lp(&pattern, &cfg, &ecfg, variant)?;
    let report = BandwidthReport {
        name: a.pattern.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        n: pattern.n(),
        edges: pattern.edge_count(),
        bw,
        rcm_bw,
        perm: perm.one_based(),
        variant,
        config: &cfg,
        trace: &trace,
    };
    let text = match a.format {
        FormatArg::Jsonl => {
            let mut s = serde_json::to_string(&report).map_err(|e| Error::Io(e.to_string()))?;
            s.push('\n');
            s
        }
        FormatArg::Csv => {
            let perm: Vec<String> = report.perm.iter().map(|v| v.to_string()).collect();
            format!("name,n,edges,bw,rcm_bw,perm\n{},{},{},{},{},{}\n", report.name, report.n, report.edges, bw, rcm_bw, perm.join(" "))
        }
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

/// Reads a dense row-major matrix from whitespace-separated numbers.
pub fn parse_dense(text: &str, n: Option<usize>) -> Result<SquareMatrix> {
    let mut vals = Vec::new();
    let mut offset = 0;
    for tok in text.split_ascii_whitespace() {
        offset = tok.as_ptr() as usize - text.as_ptr() as usize;
        let v: f64 = tok.parse().map_err(|_| Error::NonNumeric { token: tok.to_string(), offset })?;
        vals.push(v);
    }
    let n = match n {
        Some(n) => n,
        None => {
            let r = (vals.len() as f64).sqrt().round() as usize;
            if r * r != vals.len() {
                return Err(Error::InvalidParameter(format!("{} entries do not form a square matrix", vals.len())));
            }
            r
        }
    };
    if vals.len() != n * n {
        return Err(Error::TokenCount { expected: n * n, got: vals.len(), offset });
    }
    SquareMatrix::from_vec(n, vals)
}

/// Formats a matrix one row per line, rounding away projection noise.
pub fn format_dense(m: &SquareMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.n() {
        let row: Vec<String> = m
            .row(i)
            .iter()
            .map(|&v| {
                let r = (v * 1e12).round() / 1e12;
                format!("{}", if r == 0.0 { 0.0 } else { r })
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn project(a: &ProjectArgs) -> Result<i32> {
    let text = match &a.input {
        Some(path) => fs::read_to_string(path)?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let c = parse_dense(&text, a.n)?;
    let proj = project_birkhoff(&c, a.tol)?;
    emit(None, &format_dense(proj.point.matrix()))?;
    Ok(if proj.converged { 0 } else { EXIT_NOT_CONVERGED })
}
