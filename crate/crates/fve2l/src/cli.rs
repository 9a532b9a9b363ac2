//! Command-line front end: argument parsing, config files and output files.

use crate::assembly::{EllipticProblem, Problem};
use crate::conservation::{ConservationError, SolutionField};
use crate::mesh::{Mesh, MeshError};
use crate::refelem::SchemeOrder;
use crate::solver::DEFAULT_TOLERANCE;
use crate::stability::{
    evaluate, optimize_parameters, table_parameters, OptimizerConfig, Reading, StabilityError, StabilityReport,
    DEFAULT_BUDGET, DEFAULT_SEGMENTS,
};
use crate::verify::{
    condition_study, convergence_study, example1, example2, kappa_slope, solve_problem, Scheme, VerifyError,
    EXAMPLE1_DOMAIN, EXAMPLE2_DOMAIN,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

const OUTPUT_HELP: &str = "\
Output files (written to --out):
  solution.csv      dof,x,y,value            (elasticity: dof,x,y,value_x,value_y)
  conservation.csv  layer,id,cx,cy,flux,equa (elasticity: flux_x,flux_y,equa_x,equa_y)
  convergence.csv   n,h,l2_error,h1_error,interpolation_l2_error,log10_n,log10_l2,log10_h1,
                    l2_order,h1_order (orders fitted over all rows, repeated per row)
  convergence.json  rows plus fitted l2_order and h1_order
  condnum.csv       scheme,n,size,sigma_max,lambda_min_sym,kappa
  condnum.json      rows plus fitted log-log slopes of kappa against n
  stability.json    order,a,b,r1_lower,BN_degrees,feasible,curve,...
  run-manifest.json inputs, version and list of outputs
  error.json        diagnostics of a failed run

Options may also come from a key=value file given with --config; command-line
flags take precedence. The environment variable FVE2L_THREADS caps the number
of worker threads. Exit codes: 0 success, 2 usage error, 3 numerical failure,
4 infeasible stability parameters.";

#[derive(Parser, Debug)]
#[command(name = "fve2l", version, about = "Two-layer dual finite volume element schemes", after_help = OUTPUT_HELP, args_override_self = true)]
pub struct Cli {
    /// key=value file with default option values; `command=<name>` selects the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem and write the nodal solution.
    Solve(SolveArgs),
    /// Solve on a sequence of structured meshes and fit convergence orders.
    Convergence(ConvergenceArgs),
    /// Solve and report conservation residuals on both dual layers.
    Conservation(SolveArgs),
    /// Evaluate or optimize the minimum-angle stability bound.
    Stability(StabilityArgs),
    /// Condition numbers of the FVE-2L and Galerkin matrices of Example 1.
    Condnum(CondnumArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    /// Scalar problem with exp(x + 2y) on (-1, 1)^2.
    Example1,
    /// Elasticity on the unit square with lambda = 1, mu = 2.
    Example2,
    /// Scalar problem with constant diffusion, forcing and boundary value.
    Constant,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CommonArgs {
    /// Scheme order k (2, 3 or 4).
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub order: u8,
    #[arg(long, value_enum, default_value = "example1")]
    pub problem: ProblemId,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Relative residual tolerance of the linear solve.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Diffusion tensor d11,d12,d21,d22 for `--problem constant`.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [1.0, 0.0, 0.0, 1.0])]
    pub diffusion: Vec<f64>,
    /// Forcing value for `--problem constant`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub forcing: f64,
    /// Dirichlet value for `--problem constant`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub boundary: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Intervals per side of the structured mesh on the problem's domain.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Mesh file to use instead of a structured mesh.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Also write the assembled matrix as matrix.mtx (MatrixMarket).
    #[arg(long)]
    pub export_matrix: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated mesh sizes, at least three, each at least 2.
    #[arg(long, value_delimiter = ',', default_values_t = [4u64, 8, 16, 32], value_parser = clap::value_parser!(u64).range(2..))]
    pub n: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadingArg {
    Mapped,
    RawPencil,
}

impl From<ReadingArg> for Reading {
    fn from(r: ReadingArg) -> Self {
        match r {
            ReadingArg::Mapped => Reading::Mapped,
            ReadingArg::RawPencil => Reading::RawPencil,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StabilityArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub order: u8,
    /// `table2`, `optimize`, or a JSON file with arrays `a` and `b`.
    #[arg(long, default_value = "table2")]
    pub params: String,
    #[arg(long, value_enum, default_value = "mapped")]
    pub reading: ReadingArg,
    /// Segments of the sampled curve.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub segments: u64,
    /// Objective evaluations of the optimizer.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CondnumArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub order: u8,
    #[arg(long, value_delimiter = ',', default_values_t = [4u64, 8, 16, 32], value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Vec<u64>,
    /// Also write each FVE-2L reduced matrix as condnum-n<N>.mtx.
    #[arg(long)]
    pub export_matrix: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("infeasible stability parameters: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ConservationError> for CliError {
    fn from(e: ConservationError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<StabilityError> for CliError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Infeasible(_) | StabilityError::NoFeasiblePoint => CliError::Infeasible(e.to_string()),
            StabilityError::ParameterCount { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Floats in output files: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got `{raw}`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Merges a config file into the argument list: the config's values come
/// first so that explicit flags override them.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    let mut rest = Vec::new();
    let mut i = 1;
    while i < strs.len() {
        if strs[i] == "--config" {
            path = Some(strs.get(i + 1).ok_or_else(|| CliError::Usage("--config needs a path".into()))?.clone());
            i += 2;
            continue;
        }
        if let Some(p) = strs[i].strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(strs[i].clone());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;
    let mut command = None;
    let mut flags = Vec::new();
    for (k, v) in entries {
        if k == "command" {
            command = Some(v);
        } else if v == "true" {
            flags.push(format!("--{k}"));
        } else if v != "false" {
            flags.push(format!("--{k}={v}"));
        }
    }
    let subcommands = ["solve", "convergence", "conservation", "stability", "condnum"];
    let (sub, tail) = match rest.first() {
        Some(s) if subcommands.contains(&s.as_str()) => (s.clone(), rest[1..].to_vec()),
        _ => (
            command.ok_or_else(|| CliError::Usage("no subcommand on the command line or in the config".into()))?,
            rest,
        ),
    };
    let mut out: Vec<OsString> = vec![args[0].clone(), sub.into()];
    out.extend(flags.into_iter().map(OsString::from));
    out.extend(tail.into_iter().map(OsString::from));
    Ok(out)
}

fn order_of(k: u8) -> SchemeOrder {
    SchemeOrder::new(k as usize).expect("range checked by the parser")
}

fn build_problem(args: &CommonArgs) -> (Box<dyn Problem>, [f64; 4]) {
    match args.problem {
        ProblemId::Example1 => (Box::new(example1()), EXAMPLE1_DOMAIN),
        ProblemId::Example2 => (Box::new(example2()), EXAMPLE2_DOMAIN),
        ProblemId::Constant => {
            let d = &args.diffusion;
            let (f, g) = (args.forcing, args.boundary);
            let p = EllipticProblem::constant([[d[0], d[1]], [d[2], d[3]]], Arc::new(move |_| f), Arc::new(move |_| g));
            (Box::new(p), [0.0, 1.0, 0.0, 1.0])
        }
    }
}

fn check_problem(args: &CommonArgs) -> Result<(), CliError> {
    if args.problem == ProblemId::Constant {
        let d = &args.diffusion;
        let p = EllipticProblem::constant([[d[0], d[1]], [d[2], d[3]]], Arc::new(|_| 0.0), Arc::new(|_| 0.0));
        p.check_ellipticity(&[[0.5, 0.5]]).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if !(args.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", args.tol)));
    }
    Ok(())
}

/// Files written by a run, in creation order.
#[derive(Default, Debug)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), CliError> {
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(path, &text)
    }
}

fn load_mesh(args: &SolveArgs, domain: [f64; 4]) -> Result<Mesh, CliError> {
    match &args.mesh {
        Some(p) => Ok(Mesh::read(p)?),
        None => Ok(Mesh::build_structured(args.n as usize, domain)?),
    }
}

fn run_solve(args: &SolveArgs, conservation: bool, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    check_problem(&args.common)?;
    let order = order_of(args.common.order);
    let (problem, domain) = build_problem(&args.common);
    let mesh = load_mesh(args, domain)?;
    let sol = solve_problem(&mesh, order, problem.as_ref(), args.common.tol)?;
    let dir = &args.common.out;
    let m = problem.components();
    if args.export_matrix {
        out.write(dir.join("matrix.mtx"), &sol.system.matrix.to_matrix_market())?;
    }
    if conservation {
        let field = SolutionField::new(&mesh, order, &sol.system.dofs, &sol.coefficients, problem.as_ref())?;
        let report = field.report();
        let path = dir.join("conservation.csv");
        report.write_csv_file(&path)?;
        out.files.push(path);
        let (max_flux_ii, max_equa_ii) = crate::conservation::ConservationReport::max_abs(&report.second_layer);
        return Ok(json!({
            "relative_residual": sol.report.relative_residual,
            "layer_I_global": report.first_global,
            "layer_II_global": report.second_global,
            "layer_II_max_abs_flux": max_flux_ii,
            "layer_II_max_abs_equa": max_equa_ii,
            "forcing_l1": report.forcing_l1,
        }));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    if m == 1 {
        w.write_record(["dof", "x", "y", "value"])?;
    } else {
        w.write_record(["dof", "x", "y", "value_x", "value_y"])?;
    }
    for (node, p) in sol.system.dofs.coordinates.iter().enumerate() {
        let mut row = vec![node.to_string(), fmt_f64(p[0]), fmt_f64(p[1])];
        row.extend((0..m).map(|c| fmt_f64(sol.coefficients[node * m + c])));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    out.write(dir.join("solution.csv"), &String::from_utf8_lossy(&bytes))?;
    Ok(json!({
        "relative_residual": sol.report.relative_residual,
        "residual_history": sol.report.residual_history,
        "dofs": sol.system.size(),
    }))
}

fn run_convergence(args: &ConvergenceArgs, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    check_problem(&args.common)?;
    if args.n.len() < 3 {
        return Err(CliError::Usage(format!("need at least 3 mesh sizes, got {}", args.n.len())));
    }
    let order = order_of(args.common.order);
    let (problem, domain) = build_problem(&args.common);
    if problem.exact([0.0, 0.0]).is_none() {
        return Err(CliError::Usage("convergence needs a problem with an exact solution".into()));
    }
    let levels: Vec<usize> = args.n.iter().map(|&n| n as usize).collect();
    let table = convergence_study(problem.as_ref(), domain, order, &levels, args.common.tol)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "h",
        "l2_error",
        "h1_error",
        "interpolation_l2_error",
        "log10_n",
        "log10_l2",
        "log10_h1",
        "l2_order",
        "h1_order",
    ])?;
    for (r, ll) in table.rows.iter().zip(table.loglog()) {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.h),
            fmt_f64(r.l2_error),
            fmt_f64(r.h1_error),
            fmt_f64(r.interpolation_l2_error),
            fmt_f64(ll[0]),
            fmt_f64(ll[1]),
            fmt_f64(ll[2]),
            fmt_f64(table.l2_order),
            fmt_f64(table.h1_order),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let dir = &args.common.out;
    out.write(dir.join("convergence.csv"), &String::from_utf8_lossy(&bytes))?;
    out.json(dir.join("convergence.json"), &table)?;
    Ok(json!({ "l2_order": table.l2_order, "h1_order": table.h1_order }))
}

#[derive(Deserialize)]
struct ParamFile {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn run_stability(args: &StabilityArgs, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    let order = order_of(args.order);
    let segments = args.segments as usize;
    let reading: Reading = args.reading.into();
    let report: StabilityReport = match args.params.as_str() {
        "table2" => {
            let (a, b, _) = table_parameters(order);
            evaluate(order, &a, &b, segments, reading)?
        }
        "optimize" => {
            let (a, b, _) = table_parameters(order);
            let config = OptimizerConfig {
                budget: args.budget,
                seed: args.seed,
                segments,
                reading,
                ..OptimizerConfig::default()
            };
            optimize_parameters(order, &a, &b, &config)?
        }
        file => {
            let text = fs::read_to_string(file).map_err(|e| CliError::Usage(format!("cannot read parameters {file}: {e}")))?;
            let p: ParamFile = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad parameter file {file}: {e}")))?;
            evaluate(order, &p.a, &p.b, segments, reading)?
        }
    };
    out.json(args.out.join("stability.json"), &report)?;
    Ok(json!({ "BN_degrees": report.bn_degrees, "feasible": report.feasible }))
}

fn run_condnum(args: &CondnumArgs, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    let order = order_of(args.order);
    let levels: Vec<usize> = args.n.iter().map(|&n| n as usize).collect();
    if args.export_matrix {
        for &n in &levels {
            let mesh = Mesh::build_structured(n, EXAMPLE1_DOMAIN)?;
            let sys = crate::assembly::assemble(&mesh, order, &example1()).map_err(|e| CliError::Numerical(e.to_string()))?;
            let reduced = sys.matrix.submatrix(&sys.interior_rows());
            out.write(args.out.join(format!("condnum-n{n}.mtx")), &reduced.to_matrix_market())?;
        }
    }
    let rows = condition_study(order, &levels)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "n", "size", "sigma_max", "lambda_min_sym", "kappa"])?;
    for r in &rows {
        let scheme = match r.scheme {
            Scheme::Fve2l => "fve2l",
            Scheme::Fem => "fem",
        };
        w.write_record([
            scheme.to_string(),
            r.n.to_string(),
            r.size.to_string(),
            fmt_f64(r.sigma_max),
            fmt_f64(r.lambda_min_sym),
            fmt_f64(r.kappa),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    out.write(args.out.join("condnum.csv"), &String::from_utf8_lossy(&bytes))?;
    let summary = json!({
        "order": order.k(),
        "rows": rows,
        "fve2l_slope": kappa_slope(&rows, Scheme::Fve2l),
        "fem_slope": kappa_slope(&rows, Scheme::Fem),
    });
    out.json(args.out.join("condnum.json"), &summary)?;
    if let Some(r) = rows.iter().find(|r| !(r.lambda_min_sym > 0.0)) {
        return Err(CliError::Numerical(format!(
            "symmetric part of the {:?} matrix at n = {} is not positive definite (lambda_min = {})",
            r.scheme,
            r.n,
            fmt_f64(r.lambda_min_sym)
        )));
    }
    Ok(summary)
}

fn out_dir(command: &Command) -> &Path {
    match command {
        Command::Solve(a) | Command::Conservation(a) => &a.common.out,
        Command::Convergence(a) => &a.common.out,
        Command::Stability(a) => &a.out,
        Command::Condnum(a) => &a.out,
    }
}

fn command_json(command: &Command) -> serde_json::Value {
    match command {
        Command::Solve(a) => json!({ "command": "solve", "args": a }),
        Command::Conservation(a) => json!({ "command": "conservation", "args": a }),
        Command::Convergence(a) => json!({ "command": "convergence", "args": a }),
        Command::Stability(a) => json!({ "command": "stability", "args": a }),
        Command::Condnum(a) => json!({ "command": "condnum", "args": a }),
    }
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("FVE2L_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("FVE2L_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Executes a parsed command and writes the manifest; returns the exit code.
pub fn execute(cli: &Cli) -> i32 {
    let dir = out_dir(&cli.command).to_path_buf();
    let mut outputs = Outputs::default();
    let result = (|| {
        if let Some(n) = threads_from_env()? {
            // Ignored if a pool already exists in this process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        fs::create_dir_all(&dir)?;
        match &cli.command {
            Command::Solve(a) => run_solve(a, false, &mut outputs),
            Command::Conservation(a) => run_solve(a, true, &mut outputs),
            Command::Convergence(a) => run_convergence(a, &mut outputs),
            Command::Stability(a) => run_stability(a, &mut outputs),
            Command::Condnum(a) => run_condnum(a, &mut outputs),
        }
    })();
    let (code, summary) = match result {
        Ok(s) => (EXIT_OK, s),
        Err(e) => {
            eprintln!("fve2l: {e}");
            let diag = json!({ "error": e.to_string(), "exit_code": e.exit_code() });
            if dir.is_dir() {
                let _ = outputs.json(dir.join("error.json"), &diag);
            }
            (e.exit_code(), diag)
        }
    };
    if dir.is_dir() {
        let manifest_path = dir.join("run-manifest.json");
        let manifest = json!({
            "program": "fve2l",
            "version": env!("CARGO_PKG_VERSION"),
            "invocation": command_json(&cli.command),
            "config_file": cli.config,
            "threads": rayon::current_num_threads(),
            "exit_code": code,
            "summary": summary,
            "outputs": outputs.files.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        });
        if let Ok(text) = serde_json::to_string_pretty(&manifest) {
            let _ = fs::write(manifest_path, text);
        }
    }
    code
}

/// Full entry point: config expansion, parsing and execution.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("fve2l: {e}");
            return e.exit_code();
        }
    };
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
