//! Versioned JSON files for instances, market panels and solutions.
//!
//! Every file is an envelope carrying `schema_version`, a `kind` tag and the
//! shape of its payload. Numbers are written as shortest round-trip decimals,
//! so loading a saved file reproduces every binary64 value exactly. Reading
//! first checks syntax and the version on an untyped tree, then decodes the
//! typed payload, so errors name a location and nothing partial is returned.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gen::MarketPanel;
use crate::model::{Decision, MultiPeriodProblem, Problem, SinglePeriodProblem};
use crate::solver::{SolveOutcome, SolveStatus};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleFile {
    schema_version: u64,
    kind: String,
    n: usize,
    problem: SinglePeriodProblem,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiFile {
    schema_version: u64,
    kind: String,
    n: usize,
    horizon: usize,
    problem: MultiPeriodProblem,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PanelFile {
    schema_version: u64,
    kind: String,
    n: usize,
    days: usize,
    num_factors: usize,
    panel: MarketPanel,
}

/// Solver output as stored on disk.
///
/// `elapsed` is `None` unless timing was requested, which keeps files from
/// repeated runs byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub schema_version: u64,
    /// `"single"` or `"multi"`, matching the instance.
    pub kind: String,
    pub n: usize,
    pub status: SolveStatus,
    /// Weights, or `w₁ … w_{T−1}` for trajectories.
    pub decision: Decision,
    /// Currency units; `None` when the solve failed numerically.
    pub objective: Option<f64>,
    /// `None` when no residual was evaluated.
    pub residual: Option<f64>,
    pub iterations: usize,
    pub elapsed: Option<f64>,
    pub primal_step: f64,
    pub dual_step: f64,
    pub residual_trace: Vec<(usize, f64)>,
}

impl SolutionFile {
    pub fn from_outcome(problem: &Problem, outcome: &SolveOutcome, record_elapsed: bool) -> Self {
        SolutionFile {
            schema_version: SCHEMA_VERSION,
            kind: problem.kind().to_string(),
            n: problem.n(),
            status: outcome.status,
            decision: outcome.decision.clone(),
            objective: outcome.objective.is_finite().then_some(outcome.objective),
            residual: outcome.residual.is_finite().then_some(outcome.residual),
            iterations: outcome.iterations,
            elapsed: record_elapsed.then_some(outcome.elapsed),
            primal_step: outcome.primal_step,
            dual_step: outcome.dual_step,
            residual_trace: outcome.residual_trace.clone(),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn located(e: serde_json::Error) -> Error {
    Error::Parse(format!("{e}"))
}

/// Checks syntax, the version and the kind, returning the declared kind.
fn envelope(text: &str, kinds: &[&str]) -> Result<String> {
    let tree: Value = serde_json::from_str(text).map_err(located)?;
    let obj = tree
        .as_object()
        .ok_or_else(|| Error::Parse("top level must be a JSON object".into()))?;
    let version = obj
        .get("schema_version")
        .ok_or_else(|| Error::Parse("missing field `schema_version`".into()))?
        .as_u64()
        .ok_or_else(|| Error::Parse("`schema_version` must be a nonnegative integer".into()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse("missing or non-string field `kind`".into()))?;
    if !kinds.contains(&kind) {
        return Err(Error::Parse(format!(
            "unexpected kind {kind:?}, expected one of {kinds:?}"
        )));
    }
    Ok(kind.to_string())
}

fn decode<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(located)
}

fn shape_check(name: &str, declared: usize, actual: usize) -> Result<()> {
    if declared != actual {
        return Err(Error::Parse(format!(
            "header `{name}` is {declared} but the payload has {actual}"
        )));
    }
    Ok(())
}

pub fn instance_to_json(problem: &Problem) -> Result<String> {
    match problem {
        Problem::Single(p) => to_json(&SingleFile {
            schema_version: SCHEMA_VERSION,
            kind: "single".into(),
            n: p.n(),
            problem: p.clone(),
        }),
        Problem::Multi(p) => to_json(&MultiFile {
            schema_version: SCHEMA_VERSION,
            kind: "multi".into(),
            n: p.n(),
            horizon: p.horizon(),
            problem: p.clone(),
        }),
    }
}

pub fn instance_from_json(text: &str) -> Result<Problem> {
    match envelope(text, &["single", "multi"])?.as_str() {
        "single" => {
            let f: SingleFile = decode(text)?;
            shape_check("n", f.n, f.problem.n())?;
            Ok(Problem::Single(f.problem))
        }
        _ => {
            let f: MultiFile = decode(text)?;
            shape_check("n", f.n, f.problem.n())?;
            shape_check("horizon", f.horizon, f.problem.horizon())?;
            Ok(Problem::Multi(f.problem))
        }
    }
}

pub fn panel_to_json(panel: &MarketPanel) -> Result<String> {
    to_json(&PanelFile {
        schema_version: SCHEMA_VERSION,
        kind: "panel".into(),
        n: panel.n(),
        days: panel.days(),
        num_factors: panel.num_factors(),
        panel: panel.clone(),
    })
}

pub fn panel_from_json(text: &str) -> Result<MarketPanel> {
    envelope(text, &["panel"])?;
    let f: PanelFile = decode(text)?;
    f.panel.validate()?;
    shape_check("n", f.n, f.panel.n())?;
    shape_check("days", f.days, f.panel.days())?;
    shape_check("num_factors", f.num_factors, f.panel.num_factors())?;
    Ok(f.panel)
}

pub fn solution_to_json(solution: &SolutionFile) -> Result<String> {
    to_json(solution)
}

pub fn solution_from_json(text: &str) -> Result<SolutionFile> {
    envelope(text, &["single", "multi"])?;
    let f: SolutionFile = decode(text)?;
    let n_actual = match &f.decision {
        Decision::Weights(w) => w.len(),
        Decision::Trajectory(t) => t.first().map_or(f.n, Vec::len),
    };
    shape_check("n", f.n, n_actual)?;
    Ok(f)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file so readers never see a partial file.
fn write(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn save_instance(problem: &Problem, path: &Path) -> Result<()> {
    write(path, &instance_to_json(problem)?)
}

pub fn load_instance(path: &Path) -> Result<Problem> {
    instance_from_json(&read(path)?)
}

pub fn save_panel(panel: &MarketPanel, path: &Path) -> Result<()> {
    write(path, &panel_to_json(panel)?)
}

pub fn load_panel(path: &Path) -> Result<MarketPanel> {
    panel_from_json(&read(path)?)
}

pub fn save_solution(solution: &SolutionFile, path: &Path) -> Result<()> {
    write(path, &solution_to_json(solution)?)
}

pub fn load_solution(path: &Path) -> Result<SolutionFile> {
    solution_from_json(&read(path)?)
}
