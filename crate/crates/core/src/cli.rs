//! The `dualdiv` command line front end.
//!
//! Exit codes: 0 success, 2 validation failure or bad flags, 3 degenerate
//! solution, 4 verification failure. On failure the typed error name is
//! printed to standard error, followed by the message.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::closed_form::{solve_barrier, solve_threshold, Solution};
use crate::error::{Error, ErrorClass, Result};
use crate::hjb::{default_span, linear_grid, verify_solution};
use crate::model::ValidatedModel;
use crate::sim::{dominance_study, estimate_value, Estimator, SimConfig, SimEstimate, Strategy};
use crate::util::fmt_num;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

/// Default relative HJB tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Points in the default verification grid.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Parser)]
#[command(
    name = "dualdiv",
    version,
    about = "Optimal dividends in the dual risk model under stochastic discounting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal threshold or barrier strategy.
    ///
    /// Writes the solution as JSON to --out (or standard output) and a
    /// one-line summary: regime, level and, with --x, the value e^{-r} F(x).
    Solve(SolveArgs),
    /// Check a solution file against the HJB equation on a grid.
    ///
    /// Report CSV columns: x,residual_or_operator,gradient_slack,branch.
    /// Exits 4 if any point fails.
    Verify(VerifyArgs),
    /// Monte Carlo estimate of a strategy's value.
    ///
    /// CSV columns: strategy,level,rate,x,n_paths,estimator,mean,std_err,
    /// ci95_low,ci95_high,ruin_fraction,closed_form.
    Simulate(SimulateArgs),
    /// Rank the optimal strategy against perturbed competitors on common
    /// random numbers.
    ///
    /// CSV columns: rank,strategy,level,rate,mean,std_err,ruin_fraction,
    /// diff_vs_best,diff_se.
    Dominance(DominanceArgs),
    /// Re-solve over a range of one parameter.
    ///
    /// CSV columns: param,value,regime,level,value_at_x, plus mc_mean and
    /// mc_std_err when --paths is given.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Threshold,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Collapsed,
    Raw,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Collapsed => Estimator::Collapsed,
            EstimatorArg::Raw => Estimator::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    None,
    Const,
    Threshold,
    Barrier,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Model JSON file.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Dividend rate cap (threshold mode).
    #[arg(long)]
    pub xi: Option<f64>,
    /// Surplus at which to report the value.
    #[arg(long)]
    pub x: Option<f64>,
    /// Output file (.json).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Solution JSON file, as written by `solve`.
    #[arg(value_name = "SOLUTION")]
    pub solution: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Grid MIN:STEP:MAX; default 200 points on [0, 3 * level].
    #[arg(long, value_name = "MIN:STEP:MAX")]
    pub grid: Option<String>,
    /// Tolerance relative to the solution's scale.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Report file (.json or .csv).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Collapsed)]
    pub estimator: EstimatorArg,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig::new(self.paths, self.seed).with_estimator(self.estimator.into())
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Threshold or barrier level; defaults to the optimal level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Dividend rate for const and threshold strategies.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Initial surplus.
    #[arg(long)]
    pub x: f64,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output file (.csv or .json).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DominanceArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// threshold: optimal threshold against levels +-0.5 and +-1, constant
    /// rate and no dividends; barrier: optimal barrier against levels +-0.5
    /// and +-1.
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub x: f64,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Threshold)]
    pub mode: Mode,
    /// Rate cap, unless it is the swept parameter.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Parameter to vary: xi, c, lambda, beta, r, m or delta.
    #[arg(long, value_name = "NAME")]
    pub param: String,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub steps: usize,
    /// Surplus at which to report the value.
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    /// Add a Monte Carlo check with this many paths per row.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Collapsed)]
    pub estimator: EstimatorArg,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Command failure: a typed library error or a failed verification.
#[derive(Debug)]
enum Failure {
    Lib(Error),
    Verification { max_abs: f64, tol: f64 },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ExponentAtOrAboveBeta { .. } => EXIT_VERIFICATION,
        e => match e.class() {
            ErrorClass::Degenerate => EXIT_DEGENERATE,
            ErrorClass::Validation | ErrorClass::Internal => EXIT_VALIDATION,
        },
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Lib(e)) => {
            eprintln!("{}: {}", e.name(), e);
            exit_code(&e)
        }
        Err(Failure::Verification { max_abs, tol }) => {
            eprintln!("VerificationFailed: max residual {max_abs:e} exceeds tolerance {tol:e}");
            EXIT_VERIFICATION
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Solve(a) => cmd_solve(&a).map_err(Failure::from),
        Command::Verify(a) => cmd_verify(&a),
        Command::Simulate(a) => cmd_simulate(&a).map_err(Failure::from),
        Command::Dominance(a) => cmd_dominance(&a).map_err(Failure::from),
        Command::Sweep(a) => cmd_sweep(&a).map_err(Failure::from),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

fn format_of(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Ok(Format::Json),
        Some(e) if e.eq_ignore_ascii_case("csv") => Ok(Format::Csv),
        _ => Err(Error::InvalidConfig(format!(
            "cannot infer output format of {}; use .json or .csv",
            path.display()
        ))),
    }
}

/// Format for `out`, or `default` when writing to standard output.
fn output_format(out: Option<&PathBuf>, default: Format) -> Result<Format> {
    out.map(|p| format_of(p)).unwrap_or(Ok(default))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ValidatedModel> {
    ValidatedModel::from_json_str(&fs::read_to_string(path)?)
}

fn require_xi(xi: Option<f64>) -> Result<f64> {
    match xi {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(_) => Err(Error::NonPositiveParameter("xi")),
        None => Err(Error::PreconditionViolated("--xi is required".into())),
    }
}

fn solve(model: &ValidatedModel, mode: Mode, xi: Option<f64>) -> Result<Solution> {
    Ok(match mode {
        Mode::Threshold => Solution::Threshold(solve_threshold(model, require_xi(xi)?)?),
        Mode::Barrier => Solution::Barrier(solve_barrier(model)?),
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    if a.out.is_some() && output_format(a.out.as_ref(), Format::Json)? != Format::Json {
        return Err(Error::InvalidConfig(
            "solutions are written as .json".into(),
        ));
    }
    let sol = solve(&model, a.mode, a.xi)?;
    let mut summary = format!(
        "regime={} level={}",
        sol.regime_name(),
        fmt_num(sol.level())
    );
    if let Some(x) = a.x {
        let v = (-model.r()).exp() * sol.f(x);
        summary.push_str(&format!(" x={} value={}", fmt_num(x), fmt_num(v)));
    }
    let json = sol.to_json_string() + "\n";
    match &a.out {
        Some(p) => {
            fs::write(p, json)?;
            println!("{summary}");
        }
        None => {
            print!("{json}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

/// Parse `MIN:STEP:MAX` into grid points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || {
        Error::InvalidConfig(format!(
            "grid must be MIN:STEP:MAX with STEP > 0 and MIN <= MAX, got `{spec}`"
        ))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (min, step, max) = (nums[0], nums[1], nums[2]);
    if !(min.is_finite()
        && max.is_finite()
        && step > 0.0
        && step.is_finite()
        && min <= max
        && min >= 0.0)
    {
        return Err(bad());
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    if n > 10_000_000 {
        return Err(bad());
    }
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

const THETA_MATCH_TOL: f64 = 1e-9;

fn check_matches(sol: &Solution, model: &ValidatedModel) -> Result<()> {
    let (a, b) = (sol.theta(), model.theta());
    if (a - b).abs() > THETA_MATCH_TOL * b.abs().max(1.0) {
        return Err(Error::SolutionMismatch(format!(
            "solution theta {a} but model theta {b}"
        )));
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> std::result::Result<(), Failure> {
    let model = load_model(&a.model)?;
    let sol = Solution::from_json_str(&fs::read_to_string(&a.solution).map_err(Error::from)?)?;
    check_matches(&sol, &model)?;
    if !(a.tol > 0.0) {
        return Err(Error::InvalidConfig(format!("--tol must be > 0, got {}", a.tol)).into());
    }
    let format = output_format(a.out.as_ref(), Format::Json)?;
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => linear_grid(default_span(&sol), DEFAULT_GRID_POINTS),
    };
    let report = verify_solution(&sol, &model, &grid, a.tol)?;
    let text = match format {
        Format::Json => report.to_json_string() + "\n",
        Format::Csv => report.to_csv(),
    };
    match &a.out {
        Some(p) => {
            fs::write(p, text).map_err(Error::from)?;
            println!(
                "pass={} points={} max_abs={} tol={}",
                report.pass,
                report.points.len(),
                fmt_num(report.max_abs),
                fmt_num(report.tol)
            );
        }
        None => emit(None, &text)?,
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verification {
            max_abs: report.max_abs,
            tol: report.tol,
        })
    }
}

fn build_strategy(
    model: &ValidatedModel,
    kind: StrategyArg,
    level: Option<f64>,
    xi: Option<f64>,
) -> Result<Strategy> {
    Ok(match kind {
        StrategyArg::None => Strategy::NoDividend,
        StrategyArg::Const => Strategy::ConstRate {
            rate: require_xi(xi)?,
        },
        StrategyArg::Threshold => {
            let rate = require_xi(xi)?;
            let level = match level {
                Some(l) => l,
                None => solve_threshold(model, rate)?.xhat,
            };
            Strategy::Threshold { level, rate }
        }
        StrategyArg::Barrier => Strategy::Barrier {
            level: match level {
                Some(l) => l,
                None => solve_barrier(model)?.b,
            },
        },
    })
}

#[derive(Serialize)]
struct SimulateRecord {
    strategy: Strategy,
    x: f64,
    estimator: Estimator,
    estimate: SimEstimate,
    closed_form: Option<f64>,
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let format = output_format(a.out.as_ref(), Format::Csv)?;
    let strategy = build_strategy(&model, a.strategy, a.level, a.xi)?;
    let cfg = a.sim.config();
    let est = estimate_value(&model, &strategy, a.x, &cfg)?;
    // Closed forms exist for the candidates; degenerate levels just omit it.
    let closed = strategy.closed_form_value(&model, a.x).ok();
    let text = match format {
        Format::Json => {
            let rec = SimulateRecord {
                strategy,
                x: a.x,
                estimator: cfg.estimator,
                estimate: est,
                closed_form: closed,
            };
            serde_json::to_string_pretty(&rec)? + "\n"
        }
        Format::Csv => {
            let mut s = String::from(
                "strategy,level,rate,x,n_paths,estimator,mean,std_err,ci95_low,ci95_high,ruin_fraction,closed_form\n",
            );
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                strategy.kind_name(),
                opt_num(strategy.level()),
                opt_num(strategy.rate()),
                fmt_num(a.x),
                est.n_paths,
                match cfg.estimator {
                    Estimator::Collapsed => "collapsed",
                    Estimator::Raw => "raw",
                },
                fmt_num(est.mean),
                fmt_num(est.std_err),
                fmt_num(est.ci95.0),
                fmt_num(est.ci95.1),
                fmt_num(est.ruin_fraction),
                opt_num(closed),
            ));
            s
        }
    };
    emit(a.out.as_ref(), &text)
}

/// Default competitor family for a dominance study.
pub fn dominance_candidates(
    model: &ValidatedModel,
    mode: Mode,
    xi: Option<f64>,
) -> Result<Vec<Strategy>> {
    let offsets = [-1.0, -0.5, 0.5, 1.0];
    Ok(match mode {
        Mode::Threshold => {
            let rate = require_xi(xi)?;
            let level = solve_threshold(model, rate)?.xhat;
            let mut v = vec![Strategy::Threshold { level, rate }];
            v.extend(
                offsets
                    .iter()
                    .map(|d| level + d)
                    .filter(|l| *l >= 0.0)
                    .map(|l| Strategy::Threshold { level: l, rate }),
            );
            v.push(Strategy::ConstRate { rate });
            v.push(Strategy::NoDividend);
            v
        }
        Mode::Barrier => {
            let level = solve_barrier(model)?.b;
            let mut v = vec![Strategy::Barrier { level }];
            v.extend(
                offsets
                    .iter()
                    .map(|d| level + d)
                    .filter(|l| *l >= 0.0)
                    .map(|l| Strategy::Barrier { level: l }),
            );
            v
        }
    })
}

#[derive(Serialize)]
struct DominanceRecord {
    strategy: Strategy,
    estimate: SimEstimate,
    diff_vs_best: f64,
    diff_se: f64,
}

fn cmd_dominance(a: &DominanceArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let format = output_format(a.out.as_ref(), Format::Csv)?;
    let candidates = dominance_candidates(&model, a.mode, a.xi)?;
    let table = dominance_study(&model, a.x, &candidates, &a.sim.config())?;
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let rows: Vec<DominanceRecord> = table
                .rows
                .iter()
                .map(|r| DominanceRecord {
                    strategy: r.strategy,
                    estimate: r.estimate,
                    diff_vs_best: r.diff_vs_best,
                    diff_se: r.diff_se,
                })
                .collect();
            serde_json::to_string_pretty(&serde_json::json!({
                "rows": rows,
                "pairwise_se": table.pairwise_se,
            }))? + "\n"
        }
    };
    emit(a.out.as_ref(), &text)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    /// `alwaysmax`, `threshold`, `barrier` or `degenerate`.
    pub regime: String,
    pub level: Option<f64>,
    pub value_at_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_std_err: Option<f64>,
}

/// `steps` evenly spaced values from `from` to `to` (just `from` if 1).
pub fn sweep_values(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(Error::InvalidConfig(
            "--steps must be >= 1 with finite --from/--to".into(),
        ));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                to
            } else {
                from + (to - from) * i as f64 / (steps - 1) as f64
            }
        })
        .collect())
}

pub fn sweep(a: &SweepArgs, base: &ValidatedModel) -> Result<Vec<SweepRow>> {
    let values = sweep_values(a.from, a.to, a.steps)?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let (model, xi) = if a.param == "xi" {
            (base.clone(), Some(v))
        } else {
            (base.with_param(&a.param, v)?, a.xi)
        };
        let mut row = SweepRow {
            param: a.param.clone(),
            value: v,
            regime: "degenerate".into(),
            level: None,
            value_at_x: None,
            mc_mean: None,
            mc_std_err: None,
        };
        match solve(&model, a.mode, xi) {
            Ok(sol) => {
                row.regime = sol.regime_name().into();
                row.level = Some(sol.level());
                row.value_at_x = Some((-model.r()).exp() * sol.f(a.x));
                if let Some(n) = a.paths {
                    let strategy = match sol {
                        Solution::Threshold(s) => Strategy::Threshold {
                            level: s.xhat,
                            rate: s.xi,
                        },
                        Solution::Barrier(s) => Strategy::Barrier { level: s.b },
                    };
                    let cfg = SimConfig::new(n, a.seed).with_estimator(a.estimator.into());
                    let est = estimate_value(&model, &strategy, a.x, &cfg)?;
                    row.mc_mean = Some(est.mean);
                    row.mc_std_err = Some(est.std_err);
                }
            }
            Err(e) if e.class() == ErrorClass::Degenerate => {}
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let format = output_format(a.out.as_ref(), Format::Csv)?;
    let rows = sweep(a, &model)?;
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
        Format::Csv => {
            let mc = a.paths.is_some();
            let mut s = String::from("param,value,regime,level,value_at_x");
            s.push_str(if mc { ",mc_mean,mc_std_err\n" } else { "\n" });
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{}",
                    r.param,
                    fmt_num(r.value),
                    r.regime,
                    opt_num(r.level),
                    opt_num(r.value_at_x)
                ));
                if mc {
                    s.push_str(&format!(
                        ",{},{}",
                        opt_num(r.mc_mean),
                        opt_num(r.mc_std_err)
                    ));
                }
                s.push('\n');
            }
            s
        }
    };
    emit(a.out.as_ref(), &text)
}
