//! Evaluation harness: runs a solver over every scenario of a dataset,
//! parses and scores its predictions, and aggregates macro metrics per
//! difficulty stratum.

mod metrics;
mod runner;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use metrics::{
    aggregate, normalize_description, parse_prediction, score_scenario, triples, truncate_at_k,
    AggregateReport, Prediction, ScenarioMetrics, Score, StratumMetrics, Triple,
};
pub use runner::{run_solver, SolverFailure, SolverSpec, DEFAULT_TIMEOUT_SECONDS};

use crate::exec::Exec;
use crate::forge::{load_dataset, DatasetError, StoredDataset};
use crate::kg::{Label, Scenario};

pub const REPORT_SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid dataset: {0}")]
    DatasetInvalid(#[from] DatasetError),
    #[error("dataset {0} has no scenarios")]
    EmptyDataset(PathBuf),
    #[error("solver executable not found: {0}")]
    SolverMissing(String),
}

/// Why a scenario produced no usable prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CaseError {
    Solver(SolverFailure),
    Malformed { message: String },
}

impl std::fmt::Display for CaseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseError::Solver(e) => write!(f, "{e}"),
            CaseError::Malformed { message } => write!(f, "malformed output: {message}"),
        }
    }
}

/// Result of running the solver on one scenario. `predicted` is the parsed
/// output after any top-k truncation. A Bad Case is an outcome with f1 below
/// 1 or an error.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseOutcome {
    pub scenario: Scenario,
    pub input_path: PathBuf,
    pub predicted: Prediction,
    pub raw_output: String,
    pub error: Option<CaseError>,
    pub metrics: ScenarioMetrics,
}

impl CaseOutcome {
    pub fn scenario_id(&self) -> &str {
        &self.scenario.scenario_id
    }

    pub fn expected(&self) -> &Label {
        &self.scenario.label
    }

    pub fn is_bad(&self) -> bool {
        self.error.is_some() || self.metrics.f1 < 1.0
    }
}

/// All outcomes of one dataset run, in scenario-id order.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: AggregateReport,
    pub cases: Vec<CaseOutcome>,
}

impl Evaluation {
    pub fn bad_cases(&self) -> impl Iterator<Item = &CaseOutcome> {
        self.cases.iter().filter(|c| c.is_bad())
    }

    pub fn passing_cases(&self) -> impl Iterator<Item = &CaseOutcome> {
        self.cases.iter().filter(|c| !c.is_bad())
    }

    pub fn bad_case_count(&self) -> usize {
        self.bad_cases().count()
    }

    pub fn metrics(&self) -> Vec<ScenarioMetrics> {
        self.cases.iter().map(|c| c.metrics.clone()).collect()
    }
}

/// Runs and scores one scenario. Solver failures and malformed output are
/// recorded in the outcome, never raised.
pub fn evaluate_case(
    solver: &SolverSpec,
    scenario: &Scenario,
    input_path: &Path,
    k: Option<usize>,
) -> CaseOutcome {
    let (raw_output, predicted, error) = match run_solver(solver, input_path) {
        Ok(raw) => {
            let mut predicted = parse_prediction(&raw);
            if let Some(k) = k {
                predicted = truncate_at_k(&predicted, k);
            }
            let error = predicted
                .malformed
                .clone()
                .map(|message| CaseError::Malformed { message });
            (raw, predicted, error)
        }
        Err(e) => (
            String::new(),
            Prediction::default(),
            Some(CaseError::Solver(e)),
        ),
    };
    let score = if error.is_some() {
        Score::ZERO
    } else {
        score_scenario(&predicted, &scenario.label, k)
    };
    CaseOutcome {
        metrics: ScenarioMetrics::new(&scenario.scenario_id, scenario.difficulty, score),
        scenario: scenario.clone(),
        input_path: input_path.to_owned(),
        predicted,
        raw_output,
        error,
    }
}

/// Evaluates `solver` on every scenario of an already loaded dataset.
pub fn evaluate_loaded(
    solver: &SolverSpec,
    dataset: &StoredDataset,
    k: Option<usize>,
    exec: Exec,
) -> Result<Evaluation, EvalError> {
    if dataset.scenarios.is_empty() {
        return Err(EvalError::EmptyDataset(dataset.root.clone()));
    }
    if solver.resolve_executable().is_none() {
        return Err(EvalError::SolverMissing(
            solver.command.first().cloned().unwrap_or_default(),
        ));
    }
    let mut cases = exec.map(&dataset.scenarios, |s| {
        evaluate_case(solver, &s.scenario, &s.input_path, k)
    });
    cases.sort_by(|a, b| a.scenario.scenario_id.cmp(&b.scenario.scenario_id));
    let report = aggregate(&cases.iter().map(|c| c.metrics.clone()).collect::<Vec<_>>());
    Ok(Evaluation { report, cases })
}

/// Loads the dataset at `dir` (failing before any solver runs if it is
/// invalid) and evaluates `solver` on it.
pub fn evaluate_dataset(
    solver: &SolverSpec,
    dir: &Path,
    k: Option<usize>,
    exec: Exec,
) -> Result<Evaluation, EvalError> {
    let dataset = load_dataset(dir)?;
    evaluate_loaded(solver, &dataset, k, exec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario_id: String,
    pub difficulty: String,
    pub ambiguity: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CaseError>,
}

/// The persisted evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub k: Option<usize>,
    pub aggregate: AggregateReport,
    pub bad_cases: usize,
    pub scenarios: Vec<ReportRow>,
}

impl EvalReport {
    pub fn new(evaluation: &Evaluation, k: Option<usize>) -> Self {
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            k,
            aggregate: evaluation.report,
            bad_cases: evaluation.bad_case_count(),
            scenarios: evaluation
                .cases
                .iter()
                .map(|c| ReportRow {
                    scenario_id: c.metrics.scenario_id.clone(),
                    difficulty: c.metrics.difficulty.name().into(),
                    ambiguity: c.metrics.difficulty.ambiguity(),
                    precision: c.metrics.precision,
                    recall: c.metrics.recall,
                    f1: c.metrics.f1,
                    error: c.error.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        crate::kg::to_text(self)
    }
}

/// Fixed-width per-stratum summary table.
pub fn render_aggregate(report: &AggregateReport) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>11} {:>9} {:>6}\n",
        "stratum", "count", "precision@1", "recall@1", "f1@1"
    );
    for (name, m) in report.strata() {
        out.push_str(&format!(
            "{:<10} {:>6} {:>11.4} {:>9.4} {:>6.4}\n",
            name, m.count, m.precision, m.recall, m.f1
        ));
    }
    out
}
