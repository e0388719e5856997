//! Parameter-grid benchmark: seeded instances per `(λ₂₃, λ₁)` cell, solve
//! times aggregated by the shifted geometric mean, tabulated as counts and
//! times per cell and mode.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gen::{build_single_instance, extend_multi_to_optimum, gen_market_data, mix_seed, GeneratorConfig};
use crate::model::Problem;
use crate::solver::{solve_multi, solve_single, SolveOutcome, SolveStatus, SolverConfig};

/// Instances are built at `days − DATE_OFFSET`, leaving room for the
/// forward alpha window.
pub const DATE_OFFSET: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Multi,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Single,
    Multi,
    Both,
}

impl GridMode {
    fn modes(&self) -> &'static [Mode] {
        match self {
            GridMode::Single => &[Mode::Single],
            GridMode::Multi => &[Mode::Multi],
            GridMode::Both => &[Mode::Single, Mode::Multi],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lambda1_values: Vec<f64>,
    /// Shared value of `λ₂` and `λ₃`.
    pub lambda23_values: Vec<f64>,
    pub instances_per_cell: usize,
    pub horizon: usize,
    pub mode: GridMode,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambda1_values: vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4],
            lambda23_values: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            instances_per_cell: 21,
            horizon: 10,
            mode: GridMode::Both,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1_values.is_empty() || self.lambda23_values.is_empty() {
            return Err(Error::Invalid("lambda grids must be nonempty".into()));
        }
        if self
            .lambda1_values
            .iter()
            .chain(&self.lambda23_values)
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(Error::Invalid("lambda values must be finite and nonnegative".into()));
        }
        if self.instances_per_cell == 0 {
            return Err(Error::Invalid("instances_per_cell must be positive".into()));
        }
        if self.horizon < 2 {
            return Err(Error::Invalid(format!(
                "horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Seed of instance `index` in cell `cell` (row-major over `λ₂₃ × λ₁`).
    pub fn instance_seed(&self, cell: usize, index: usize) -> u64 {
        mix_seed(mix_seed(self.seed, cell as u64), index as u64)
    }
}

/// `(Π(tᵢ + 1))^{1/n} − 1` over `values`, evaluated in log space.
pub fn shifted_geometric_mean(values: &[f64], shift: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Invalid("shifted geometric mean of an empty list".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && v + shift > 0.0)) {
        return Err(Error::Invalid("values must be finite and exceed −shift".into()));
    }
    let mean_log = values.iter().map(|v| (v + shift).ln()).sum::<f64>() / values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // The exact mean lies in [min, max]; clamping removes rounding excursions.
    Ok((mean_log.exp() - shift).clamp(lo, hi))
}

/// SGM with shift 1, unsolved instances counted at `time_limit`.
pub fn sgm1(times: &[f64], statuses: &[SolveStatus], time_limit: f64) -> Result<f64> {
    if times.len() != statuses.len() {
        return Err(Error::dim("statuses", times.len(), statuses.len()));
    }
    let censored: Vec<f64> = times
        .iter()
        .zip(statuses)
        .map(|(t, s)| if *s == SolveStatus::Converged { *t } else { time_limit })
        .collect();
    shifted_geometric_mean(&censored, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub lambda23: f64,
    pub lambda1: f64,
    pub mode: Mode,
    pub cell: usize,
    pub index: usize,
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub elapsed: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub lambda23: f64,
    pub lambda1: f64,
    pub mode: Mode,
    pub solved: usize,
    pub total: usize,
    pub sgm1: f64,
    pub statuses: Vec<SolveStatus>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub time_limit: f64,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn empty(time_limit: f64) -> Self {
        BenchTable {
            time_limit,
            rows: Vec::new(),
        }
    }

    pub fn solved(&self, mode: Mode) -> (usize, usize) {
        self.rows
            .iter()
            .filter(|r| r.mode == mode)
            .fold((0, 0), |(s, t), r| (s + r.solved, t + r.total))
    }
}

/// The instance of one grid slot, with the single-period solve that set
/// the terminal portfolio in multi mode.
pub fn build_instance(
    spec: &GridSpec,
    solver: &SolverConfig,
    generator: &GeneratorConfig,
    cell: usize,
    index: usize,
    mode: Mode,
) -> Result<(Problem, Option<SolveOutcome>)> {
    let lambda23 = spec.lambda23_values[cell / spec.lambda1_values.len()];
    let lambda1 = spec.lambda1_values[cell % spec.lambda1_values.len()];
    let config = GeneratorConfig {
        seed: spec.instance_seed(cell, index),
        ..generator.clone()
    };
    let panel = gen_market_data(&config)?;
    let date = config.days.saturating_sub(DATE_OFFSET);
    let single = build_single_instance(&panel, date, (lambda1, lambda23, lambda23), &config)?;
    match mode {
        Mode::Single => Ok((Problem::Single(single), None)),
        Mode::Multi => {
            let (multi, outcome) = extend_multi_to_optimum(&single, spec.horizon, solver)?;
            Ok((Problem::Multi(multi), Some(outcome)))
        }
    }
}

struct Job {
    cell: usize,
    mode: Mode,
    index: usize,
}

fn run_job<F>(
    spec: &GridSpec,
    solver: &SolverConfig,
    generator: &GeneratorConfig,
    job: &Job,
    inspect: &F,
) -> Result<InstanceRecord>
where
    F: Fn(&InstanceRecord, &Problem, Option<&SolveOutcome>),
{
    let (problem, _) = build_instance(spec, solver, generator, job.cell, job.index, job.mode)?;
    let start = Instant::now();
    let result = match &problem {
        Problem::Single(p) => solve_single(p, solver),
        Problem::Multi(p) => solve_multi(p, solver),
    };
    let mut record = InstanceRecord {
        lambda23: spec.lambda23_values[job.cell / spec.lambda1_values.len()],
        lambda1: spec.lambda1_values[job.cell % spec.lambda1_values.len()],
        mode: job.mode,
        cell: job.cell,
        index: job.index,
        seed: spec.instance_seed(job.cell, job.index),
        status: SolveStatus::NumericalFailure,
        iterations: 0,
        elapsed: start.elapsed().as_secs_f64(),
        objective: f64::NAN,
    };
    match &result {
        Ok(outcome) => {
            record.status = outcome.status;
            record.iterations = outcome.iterations;
            record.elapsed = outcome.elapsed;
            record.objective = outcome.objective;
        }
        Err(e) => log::warn!("event=solve_error cell={} index={} error={e}", job.cell, job.index),
    }
    log::info!(
        "event=instance lambda23={} lambda1={:e} mode={} index={} status={} iterations={} elapsed={:.3}",
        record.lambda23,
        record.lambda1,
        record.mode.as_str(),
        record.index,
        record.status,
        record.iterations,
        record.elapsed
    );
    inspect(&record, &problem, result.as_ref().ok());
    Ok(record)
}

/// Runs the grid sequentially.
pub fn run_grid(spec: &GridSpec, solver: &SolverConfig, generator: &GeneratorConfig) -> Result<BenchTable> {
    run_grid_with(spec, solver, generator, 1, |_, _, _| {})
}

/// Runs the grid on `workers` threads, calling `inspect` after every solve.
///
/// Results are assembled in grid order, so the table does not depend on
/// scheduling. Generation errors abort the run; solver errors become
/// `NumericalFailure` records.
pub fn run_grid_with<F>(
    spec: &GridSpec,
    solver: &SolverConfig,
    generator: &GeneratorConfig,
    workers: usize,
    inspect: F,
) -> Result<BenchTable>
where
    F: Fn(&InstanceRecord, &Problem, Option<&SolveOutcome>) + Sync,
{
    spec.validate()?;
    solver.validate()?;
    generator.validate()?;
    let cells = spec.lambda23_values.len() * spec.lambda1_values.len();
    let mut jobs = Vec::new();
    for cell in 0..cells {
        for &mode in spec.mode.modes() {
            for index in 0..spec.instances_per_cell {
                jobs.push(Job { cell, mode, index });
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<InstanceRecord>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(job) = jobs.get(k) else { break };
        let r = run_job(spec, solver, generator, job, &inspect);
        let failed = r.is_err();
        results.lock().expect("result lock")[k] = Some(r);
        if failed {
            // Stop handing out work; in-flight jobs finish.
            next.store(jobs.len(), Ordering::Relaxed);
        }
    };
    std::thread::scope(|scope| {
        for _ in 1..workers.max(1) {
            scope.spawn(worker);
        }
        worker();
    });
    let mut records = Vec::with_capacity(jobs.len());
    for r in results.into_inner().expect("result lock").into_iter().flatten() {
        records.push(r?);
    }

    let mut table = BenchTable::empty(solver.time_limit);
    for cell in 0..cells {
        for &mode in spec.mode.modes() {
            let group: Vec<&InstanceRecord> = records.iter().filter(|r| r.cell == cell && r.mode == mode).collect();
            let statuses: Vec<SolveStatus> = group.iter().map(|r| r.status).collect();
            let times: Vec<f64> = group.iter().map(|r| r.elapsed).collect();
            table.rows.push(BenchRow {
                lambda23: spec.lambda23_values[cell / spec.lambda1_values.len()],
                lambda1: spec.lambda1_values[cell % spec.lambda1_values.len()],
                mode,
                solved: statuses.iter().filter(|s| **s == SolveStatus::Converged).count(),
                total: group.len(),
                sgm1: sgm1(&times, &statuses, solver.time_limit)?,
                statuses,
                times,
            });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub const CSV_HEADER: [&str; 6] = ["lambda23", "lambda1", "mode", "count", "total", "sgm1_seconds"];

pub fn render_csv(table: &BenchTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in &table.rows {
        w.write_record([
            format!("{}", r.lambda23),
            format!("{:e}", r.lambda1),
            r.mode.as_str().to_string(),
            r.solved.to_string(),
            r.total.to_string(),
            format!("{:.6}", r.sgm1),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Counts and SGM1 times per mode, one block per `λ₂₃` with `λ₁` descending.
pub fn render_markdown(table: &BenchTable) -> String {
    let mut lambda23: Vec<f64> = Vec::new();
    let mut lambda1: Vec<f64> = Vec::new();
    for r in &table.rows {
        if !lambda23.contains(&r.lambda23) {
            lambda23.push(r.lambda23);
        }
        if !lambda1.contains(&r.lambda1) {
            lambda1.push(r.lambda1);
        }
    }
    lambda1.sort_by(|a, b| b.total_cmp(a));
    let find = |l23: f64, l1: f64, mode: Mode| {
        table
            .rows
            .iter()
            .find(|r| r.lambda23 == l23 && r.lambda1 == l1 && r.mode == mode)
    };
    let cell = |row: Option<&BenchRow>| match row {
        Some(r) => format!("{} | {:.2}", r.solved, r.sgm1),
        None => "– | –".to_string(),
    };
    let mut out = String::new();
    out.push_str("| λ₂, λ₃ | λ₁ | Single Count | Single Time | Multi Count | Multi Time |\n");
    out.push_str("|---|---|---:|---:|---:|---:|\n");
    for &l23 in &lambda23 {
        for (k, &l1) in lambda1.iter().enumerate() {
            let label = if k == 0 { format!("{l23}") } else { String::new() };
            let _ = writeln!(
                out,
                "| {label} | {l1:e} | {} | {} |",
                cell(find(l23, l1, Mode::Single)),
                cell(find(l23, l1, Mode::Multi))
            );
        }
    }
    let _ = writeln!(
        out,
        "\nCount: instances reaching Converged. Time: SGM1 in seconds, unsolved instances counted at the {} s limit.",
        table.time_limit
    );
    out
}

pub fn emit_report(table: &BenchTable, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => render_csv(table)?,
        ReportFormat::Markdown => render_markdown(table),
    };
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
