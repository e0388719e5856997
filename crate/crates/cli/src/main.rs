use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use pfolio_core::bench::{emit_report, run_grid_with, GridSpec, Mode, ReportFormat, DATE_OFFSET};
use pfolio_core::gen::{build_single_instance, extend_multi_to_optimum, gen_market_data, GeneratorConfig};
use pfolio_core::io::{
    load_instance, load_panel, load_solution, save_instance, save_panel, save_solution, SolutionFile,
};
use pfolio_core::oracle::{verify_solution, VerifyConfig};
use pfolio_core::{solve, Error, Problem, SolveStatus, SolverConfig};

const SEED_ENV: &str = "FLASHFOLIO_SEED";

/// Portfolio rebalancing solver: generate data, build instances, solve, verify and benchmark.
#[derive(Parser)]
#[command(name = "pfolio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market panel.
    Gen(GenArgs),
    /// Build a single- or multi-period instance from a panel.
    BuildInstance(BuildArgs),
    /// Solve an instance and write the solution.
    Solve(SolveArgs),
    /// Run the parameter-grid benchmark and write a report.
    Bench(BenchArgs),
    /// Verify a solution: feasibility, optimality certificate and, at tiny size, a grid search.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator seed; FLASHFOLIO_SEED overrides it when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of stocks.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Trading days; must exceed 70.
    #[arg(long, default_value_t = 600)]
    days: usize,
    /// Number of factors, the market included.
    #[arg(long, default_value_t = 6)]
    factors: usize,
    /// Fraction of stocks with no implied-volatility quotes.
    #[arg(long, default_value_t = 0.2)]
    missing_iv: f64,
    /// Output directory; the panel is written to `panel.json` inside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    /// Fixed-point residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iteration limit.
    #[arg(long, default_value_t = 500_000)]
    max_iters: usize,
    /// Wall-clock limit per solve in seconds.
    #[arg(long, default_value_t = 360.0)]
    time_limit: f64,
    /// Multiplier on the automatic initial σ/τ balance.
    #[arg(long, default_value_t = 1.0)]
    step_ratio: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tol,
            max_iterations: self.max_iters,
            time_limit: self.time_limit,
            step_ratio: self.step_ratio,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Panel file written by `gen`.
    #[arg(long)]
    panel: PathBuf,
    /// Day index of the rebalance; defaults to `days − 10`.
    #[arg(long)]
    date: Option<usize>,
    /// Risk aversion λ₁.
    #[arg(long, default_value_t = 1e-6)]
    lambda1: f64,
    /// Shared spread and impact weights λ₂ = λ₃.
    #[arg(long, default_value_t = 100.0)]
    lambda23: f64,
    /// Gross market value in currency.
    #[arg(long, default_value_t = 1e8)]
    gmv: f64,
    /// Impact exponent d in (1, 2].
    #[arg(long, default_value_t = 1.5)]
    exponent: f64,
    /// Exposure rows: market neutrality first, then factor bands.
    #[arg(long, default_value_t = 7)]
    exposure_rows: usize,
    /// Seed for alpha noise and the initial book; FLASHFOLIO_SEED overrides it when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Build a multi-period instance with this horizon T, targeting the single-period optimum.
    #[arg(long)]
    horizon: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output instance file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file.
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Record wall time in the solution file, which makes it run-dependent.
    #[arg(long)]
    record_time: bool,
    /// Output solution file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid specification (JSON); the default desk grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Report file.
    #[arg(long)]
    out: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Run one solve at a time so timings are not co-scheduled.
    #[arg(long)]
    timing_strict: bool,
    /// Number of stocks per instance.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Panel length in days.
    #[arg(long, default_value_t = 600)]
    days: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Instance file.
    #[arg(long)]
    instance: PathBuf,
    /// Solution file.
    #[arg(long)]
    solution: PathBuf,
    /// Largest allowed directional ascent rate.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = 1e-6)]
    feasibility_tolerance: f64,
    /// Grid resolution for the tiny-dimension comparison.
    #[arg(long, default_value_t = 2001)]
    grid_resolution: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code: 1 for solver or verification failures, 2 for usage and input errors.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn seed_override(seed: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(seed),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| usage(e.to_string()))
        }
    }
}

fn cmd_gen(a: &GenArgs) -> Result<(), Failure> {
    let config = GeneratorConfig {
        seed: seed_override(a.seed)?,
        n: a.n,
        days: a.days,
        p: a.factors,
        missing_iv_fraction: a.missing_iv,
        exposure_rows: GeneratorConfig::default().exposure_rows.min(a.factors + 1),
        ..GeneratorConfig::default()
    };
    info!(
        "event=config command=gen seed={} n={} days={} factors={} missing_iv={}",
        config.seed, config.n, config.days, config.p, config.missing_iv_fraction
    );
    let panel = gen_market_data(&config)?;
    std::fs::create_dir_all(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
    let path = a.out.join("panel.json");
    save_panel(&panel, &path)?;
    let last = panel.days() - 1;
    let mean_price = (0..panel.n()).map(|i| panel.prices[(last, i)]).sum::<f64>() / panel.n() as f64;
    let missing = (0..panel.n())
        .filter(|&i| panel.implied_vol.get(last, i).is_none())
        .count();
    let mean_vol = panel.true_vol.iter().sum::<f64>() / panel.n() as f64;
    println!(
        "panel={} n={} days={} factors={} mean_last_price={mean_price:.4} mean_daily_vol={mean_vol:.6} missing_iv_stocks={missing}",
        path.display(),
        panel.n(),
        panel.days(),
        panel.num_factors()
    );
    Ok(())
}

fn cmd_build(a: &BuildArgs) -> Result<(), Failure> {
    let panel = load_panel(&a.panel)?;
    let config = GeneratorConfig {
        seed: seed_override(a.seed)?,
        n: panel.n(),
        days: panel.days(),
        p: panel.num_factors(),
        gmv: a.gmv,
        exponent_d: a.exponent,
        exposure_rows: a.exposure_rows,
        ..GeneratorConfig::default()
    };
    let date = a.date.unwrap_or(panel.days().saturating_sub(DATE_OFFSET));
    info!(
        "event=config command=build-instance seed={} date={date} lambda1={:e} lambda23={} gmv={} exponent={} exposure_rows={} horizon={:?}",
        config.seed, a.lambda1, a.lambda23, a.gmv, a.exponent, a.exposure_rows, a.horizon
    );
    let single = build_single_instance(&panel, date, (a.lambda1, a.lambda23, a.lambda23), &config)?;
    let problem = match a.horizon {
        None => Problem::Single(single),
        Some(t) => {
            let (multi, outcome) = extend_multi_to_optimum(&single, t, &a.solver.config())?;
            info!(
                "event=terminal_solve status={} iterations={}",
                outcome.status, outcome.iterations
            );
            Problem::Multi(multi)
        }
    };
    save_instance(&problem, &a.out)?;
    println!("instance={} kind={} n={}", a.out.display(), problem.kind(), problem.n());
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let config = a.solver.config();
    info!(
        "event=config command=solve instance={} kind={} n={} tol={:e} max_iters={} time_limit={} step_ratio={}",
        a.instance.display(),
        problem.kind(),
        problem.n(),
        config.tolerance,
        config.max_iterations,
        config.time_limit,
        config.step_ratio
    );
    let outcome = solve(&problem, &config)?;
    save_solution(&SolutionFile::from_outcome(&problem, &outcome, a.record_time), &a.out)?;
    info!(
        "event=solved status={} iterations={} residual={:e} objective={} elapsed={:.3}",
        outcome.status, outcome.iterations, outcome.residual, outcome.objective, outcome.elapsed
    );
    println!(
        "status={} iterations={} residual={:e} objective={}",
        outcome.status, outcome.iterations, outcome.residual, outcome.objective
    );
    if outcome.status == SolveStatus::Converged {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("solver stopped with status {}", outcome.status),
        })
    }
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Failure> {
    let mut spec = match &a.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<GridSpec>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => GridSpec::default(),
    };
    spec.seed = seed_override(spec.seed)?;
    let generator = GeneratorConfig {
        n: a.n,
        days: a.days,
        ..GeneratorConfig::default()
    };
    let solver = a.solver.config();
    let workers = if a.timing_strict {
        1
    } else {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    };
    info!(
        "event=config command=bench grid={} seed={} instances_per_cell={} horizon={} mode={:?} n={} days={} tol={:e} time_limit={} workers={workers}",
        serde_json::to_string(&(&spec.lambda23_values, &spec.lambda1_values)).unwrap_or_default(),
        spec.seed,
        spec.instances_per_cell,
        spec.horizon,
        spec.mode,
        a.n,
        a.days,
        solver.tolerance,
        solver.time_limit
    );
    let table = run_grid_with(&spec, &solver, &generator, workers, |_, _, _| {})?;
    let format = match a.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    emit_report(&table, format, &a.out)?;
    for mode in [Mode::Single, Mode::Multi] {
        let (solved, total) = table.solved(mode);
        if total > 0 {
            println!("mode={} solved={solved} total={total}", mode.as_str());
        }
    }
    Ok(())
}

fn cmd_check(a: &CheckArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let solution = load_solution(&a.solution)?;
    if solution.kind != problem.kind() || solution.n != problem.n() {
        return Err(usage(format!(
            "solution ({} n={}) does not match instance ({} n={})",
            solution.kind,
            solution.n,
            problem.kind(),
            problem.n()
        )));
    }
    let config = VerifyConfig {
        feasibility_tolerance: a.feasibility_tolerance,
        certificate_tolerance: a.tolerance,
        grid_resolution: a.grid_resolution,
        ..VerifyConfig::default()
    };
    info!(
        "event=config command=check instance={} solution={} tolerance={:e} feasibility_tolerance={:e} grid_resolution={}",
        a.instance.display(),
        a.solution.display(),
        config.certificate_tolerance,
        config.feasibility_tolerance,
        config.grid_resolution
    );
    let report = verify_solution(&problem, &solution.decision, &config)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?;
    text.push('\n');
    write_text(a.out.as_deref(), &text)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("failed checks: {}", report.failed_checks.join(", ")),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "level={} {}",
                record.level().as_str().to_lowercase(),
                record.args()
            )
        })
        .init();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::BuildInstance(a) => cmd_build(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("event=error code={} message={:?}", f.code, f.message);
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
