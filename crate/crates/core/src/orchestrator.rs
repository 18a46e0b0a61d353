//! The repair loop: evaluates a baseline solver, then for each round builds
//! a failure report from the current best solver's bad cases, asks the
//! agent for a revised program, validates and evaluates it on the full
//! dataset, and accepts it only on a strict Mixed-F1 improvement.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{
    build_prompt, make_backend, sanitize, validate_candidate, AgentConfig, Backend, BackendError,
    CandidateSource, PromptContext,
};
use crate::analyze::{build_report, AnalyzerConfig, FailureCategory};
use crate::eval::{
    evaluate_loaded, AggregateReport, EvalError, EvalReport, Evaluation, SolverSpec,
    DEFAULT_TIMEOUT_SECONDS,
};
use crate::exec::Exec;
use crate::forge::{load_dataset, StoredDataset};

pub const MANIFEST_SCHEMA_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BEST_SOURCE_FILE: &str = "best.src";

/// Placeholder in command templates for the running executable.
pub const SELF_TOKEN: &str = "{self}";
/// Placeholder in the runner template for the solver source path.
pub const SOURCE_TOKEN: &str = "{source}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub dataset_dir: PathBuf,
    pub initial_solver: PathBuf,
    /// Command template that runs a solver source on one input; the input
    /// path is appended. `{source}` is replaced with the source path.
    pub solver_runner: Vec<String>,
    /// Command template that checks a candidate source, appended as the
    /// last argument. Structural checks only when absent.
    #[serde(default)]
    pub validator: Option<Vec<String>>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Top-k truncation of predictions; none scores every emitted cause.
    #[serde(default)]
    pub k: Option<usize>,
    /// Worker threads for evaluation; the rayon default when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default)]
    pub representatives: Option<usize>,
    pub agent: AgentConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Directory relative paths are resolved against; the config file's
    /// directory when loaded from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_rounds() -> usize {
    5
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECONDS
}

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("backend setup failed: {0}")]
    Backend(#[from] BackendError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LoopError + '_ {
    move |source| LoopError::Io {
        path: path.to_owned(),
        source,
    }
}

impl LoopConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, LoopError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: LoopConfig =
            serde_path_to_error::deserialize(de).map_err(|e| LoopError::Config(e.to_string()))?;
        config.base_dir = base_dir.to_owned();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, LoopError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        LoopConfig::from_json(&text, &base)
            .map_err(|e| LoopError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        if self.rounds == 0 {
            return Err(LoopError::Config("rounds must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(LoopError::Config("k must be at least 1".into()));
        }
        if self.solver_runner.is_empty() {
            return Err(LoopError::Config("solver_runner is empty".into()));
        }
        if self.timeout_seconds == 0 {
            return Err(LoopError::Config(
                "timeout_seconds must be at least 1".into(),
            ));
        }
        self.agent
            .validate()
            .map_err(|e| LoopError::Config(e.to_string()))
    }

    /// `path` resolved against the config directory and made absolute, since
    /// solvers run in their own scratch directories.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        let joined = self.base_dir.join(path);
        std::path::absolute(&joined).unwrap_or(joined)
    }

    /// Digest of the config as written, ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        crate::sha256_hex(crate::kg::to_text(&c))
    }

    pub fn exec(&self) -> Exec {
        self.jobs.map_or(Exec::Auto, Exec::with_jobs)
    }

    /// Expands a command template. The program is resolved against the
    /// config directory when it is a relative path with a separator.
    fn expand(
        &self,
        template: &[String],
        self_exe: Option<&Path>,
        source: Option<&Path>,
    ) -> Vec<String> {
        let mut out: Vec<String> = template
            .iter()
            .map(|arg| {
                let mut arg = arg.clone();
                if let Some(exe) = self_exe {
                    arg = arg.replace(SELF_TOKEN, &exe.to_string_lossy());
                }
                if let Some(src) = source {
                    arg = arg.replace(SOURCE_TOKEN, &src.to_string_lossy());
                }
                arg
            })
            .collect();
        if let Some(first) = out.first_mut() {
            let p = Path::new(first.as_str());
            if p.is_relative() && p.components().count() > 1 {
                *first = self.resolve(p).to_string_lossy().into_owned();
            }
        }
        out
    }

    pub fn solver_spec(&self, source: &Path, self_exe: Option<&Path>) -> SolverSpec {
        SolverSpec::new(self.expand(&self.solver_runner, self_exe, Some(source)))
            .with_timeout(self.timeout_seconds)
    }

    pub fn validator_command(&self, self_exe: Option<&Path>) -> Option<Vec<String>> {
        self.validator
            .as_ref()
            .map(|v| self.expand(v, self_exe, None))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RejectionReason {
    ScoreNotImproved,
    SanitizeFailure,
    ValidationFailure,
    BackendFailure,
}

impl RejectionReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectionReason::ScoreNotImproved => "scoreNotImproved",
            RejectionReason::SanitizeFailure => "sanitizeFailure",
            RejectionReason::ValidationFailure => "validationFailure",
            RejectionReason::BackendFailure => "backendFailure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub candidate_hash: Option<String>,
    /// The candidate's true Mixed F1, also for rejected candidates.
    pub candidate_f1: Option<f64>,
    pub accepted: bool,
    pub rejection_reason: Option<RejectionReason>,
    pub primary_category_targeted: Option<FailureCategory>,
    pub best_f1_after: f64,
    /// Bad cases of the evaluated candidate.
    pub bad_cases: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RoundRecord {
    /// A round with nothing left to repair.
    pub fn is_idle(&self) -> bool {
        !self.accepted && self.rejection_reason.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub config_digest: String,
    pub dataset_catalog_hash: String,
    pub rounds: Vec<RoundRecord>,
    pub best_round: usize,
    pub best_source_hash: String,
    pub final_report: AggregateReport,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        crate::kg::to_text(self)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| e.to_string())
    }

    pub fn read(path: &Path) -> Result<Self, LoopError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        RunManifest::from_json(&text)
            .map_err(|e| LoopError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the record-level invariants: round numbering, acceptance only
    /// on strict improvement, and a nondecreasing best score.
    pub fn check(&self) -> Result<(), String> {
        let mut best = None::<f64>;
        for (i, r) in self.rounds.iter().enumerate() {
            if r.round != i {
                return Err(format!("record {i} is numbered {}", r.round));
            }
            if let Some(prev) = best {
                if r.best_f1_after < prev {
                    return Err(format!("round {i}: best score decreased"));
                }
                if r.accepted && r.candidate_f1.is_none_or(|f| f <= prev) {
                    return Err(format!("round {i}: accepted without improvement"));
                }
                if !r.accepted && r.best_f1_after != prev {
                    return Err(format!("round {i}: rejected round changed the best score"));
                }
            } else if !r.accepted {
                return Err("round 0 must be accepted".into());
            }
            best = Some(r.best_f1_after);
        }
        if self.rounds.is_empty() {
            return Err("manifest has no rounds".into());
        }
        Ok(())
    }
}

/// Loaded dataset plus the baseline evaluation.
pub struct RoundZero {
    pub dataset: StoredDataset,
    pub source: String,
    pub evaluation: Evaluation,
    pub record: RoundRecord,
}

fn write(path: &Path, text: &str) -> Result<(), LoopError> {
    fs::write(path, text).map_err(io_err(path))
}

fn round_file(out_dir: &Path, round: usize, name: &str) -> PathBuf {
    out_dir.join(format!("round_{round}_{name}"))
}

/// Evaluates the initial solver on the full dataset.
pub fn run_round_zero(
    config: &LoopConfig,
    out_dir: &Path,
    self_exe: Option<&Path>,
) -> Result<RoundZero, LoopError> {
    let dataset = load_dataset(&config.resolve(&config.dataset_dir)).map_err(EvalError::from)?;
    let source_path = config.resolve(&config.initial_solver);
    let source = fs::read_to_string(&source_path)
        .map_err(|e| EvalError::SolverMissing(format!("{}: {e}", source_path.display())))?;
    let spec = config.solver_spec(&source_path, self_exe);
    let evaluation = evaluate_loaded(&spec, &dataset, config.k, config.exec())?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write(
        &round_file(out_dir, 0, "report.json"),
        &EvalReport::new(&evaluation, config.k).to_json(),
    )?;
    let f1 = evaluation.report.mixed.f1;
    let record = RoundRecord {
        round: 0,
        candidate_hash: Some(crate::sha256_hex(&source)),
        candidate_f1: Some(f1),
        accepted: true,
        rejection_reason: None,
        primary_category_targeted: None,
        best_f1_after: f1,
        bad_cases: Some(evaluation.bad_case_count()),
        detail: None,
    };
    Ok(RoundZero {
        dataset,
        source,
        evaluation,
        record,
    })
}

struct Best {
    round: usize,
    source: String,
    evaluation: Evaluation,
}

struct Loop<'a> {
    config: &'a LoopConfig,
    out_dir: &'a Path,
    self_exe: Option<&'a Path>,
    dataset: &'a StoredDataset,
    backend: Box<dyn Backend>,
}

enum Outcome {
    Rejected(RejectionReason, String),
    Evaluated(Evaluation),
}

impl Loop<'_> {
    fn round(
        &self,
        round: usize,
        best: &Best,
        record: &mut RoundRecord,
    ) -> Result<Outcome, LoopError> {
        let out = self.out_dir;
        let bad: Vec<_> = best.evaluation.bad_cases().collect();
        let passing: Vec<_> = best.evaluation.passing_cases().collect();
        let analyzer = AnalyzerConfig {
            representatives: self
                .config
                .representatives
                .unwrap_or(AnalyzerConfig::default().representatives),
        };
        let report = build_report(&bad, &passing, &analyzer).expect("bad cases are present");
        record.primary_category_targeted = Some(report.primary_category);
        write(&round_file(out, round, "analysis.json"), &report.to_json())?;

        let agent = &self.config.agent;
        let questions = agent.questions_for(report.primary_category);
        let ctx = PromptContext {
            round,
            score: &best.evaluation.report,
            language_notes: agent.notes(),
            questions: &questions,
            budget_chars: agent.prompt_budget_chars,
        };
        let prompt = match build_prompt(&report, &best.source, &ctx) {
            Ok(p) => p,
            Err(e) => {
                return Ok(Outcome::Rejected(
                    RejectionReason::BackendFailure,
                    e.to_string(),
                ))
            }
        };
        write(&round_file(out, round, "prompt.txt"), &prompt.render())?;

        let response = match self
            .backend
            .complete(&prompt, round, report.primary_category)
        {
            Ok(text) => text,
            Err(e @ BackendError::MockMiss { .. }) => {
                log::warn!("round {round}: {e}; treating the response as empty");
                String::new()
            }
            Err(e) => {
                return Ok(Outcome::Rejected(
                    RejectionReason::BackendFailure,
                    e.to_string(),
                ))
            }
        };
        write(&round_file(out, round, "response.txt"), &response)?;

        let candidate: CandidateSource = match sanitize(&response) {
            Ok(c) => c,
            Err(e) => {
                return Ok(Outcome::Rejected(
                    RejectionReason::SanitizeFailure,
                    e.to_string(),
                ))
            }
        };
        record.candidate_hash = Some(candidate.source_hash.clone());
        let candidate_path = round_file(out, round, "candidate.src");
        write(&candidate_path, &candidate.text)?;

        let validator = self.config.validator_command(self.self_exe);
        if let Err(e) = validate_candidate(&candidate, validator.as_deref()) {
            return Ok(Outcome::Rejected(
                RejectionReason::ValidationFailure,
                e.message,
            ));
        }

        let abs = fs::canonicalize(&candidate_path).map_err(io_err(&candidate_path))?;
        let spec = self.config.solver_spec(&abs, self.self_exe);
        let evaluation =
            match evaluate_loaded(&spec, self.dataset, self.config.k, self.config.exec()) {
                Ok(e) => e,
                Err(e) => {
                    return Ok(Outcome::Rejected(
                        RejectionReason::ValidationFailure,
                        e.to_string(),
                    ))
                }
            };
        write(
            &round_file(out, round, "report.json"),
            &EvalReport::new(&evaluation, self.config.k).to_json(),
        )?;
        Ok(Outcome::Evaluated(evaluation))
    }
}

fn manifest(
    config: &LoopConfig,
    dataset: &StoredDataset,
    rounds: &[RoundRecord],
    best: &Best,
) -> RunManifest {
    RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION.into(),
        config_digest: config.digest(),
        dataset_catalog_hash: dataset.manifest.catalog_hash.clone(),
        rounds: rounds.to_vec(),
        best_round: best.round,
        best_source_hash: crate::sha256_hex(&best.source),
        final_report: best.evaluation.report,
    }
}

/// Runs round zero and then `config.rounds` repair rounds, writing every
/// round's artifacts and the manifest to `out_dir` as it goes. `self_exe`
/// replaces `{self}` in command templates.
pub fn run_loop(
    config: &LoopConfig,
    out_dir: &Path,
    self_exe: Option<&Path>,
) -> Result<RunManifest, LoopError> {
    config.validate()?;
    let backend = make_backend(&config.agent.backend, &config.base_dir)?;
    let zero = run_round_zero(config, out_dir, self_exe)?;
    log::info!(
        "round 0: Mixed F1 {:.4}, {} bad cases",
        zero.record.best_f1_after,
        zero.evaluation.bad_case_count()
    );
    let mut records = vec![zero.record];
    let mut best = Best {
        round: 0,
        source: zero.source,
        evaluation: zero.evaluation,
    };
    let state = Loop {
        config,
        out_dir,
        self_exe,
        dataset: &zero.dataset,
        backend,
    };
    write(&out_dir.join(BEST_SOURCE_FILE), &best.source)?;
    write(
        &out_dir.join(MANIFEST_FILE),
        &manifest(config, &zero.dataset, &records, &best).to_json(),
    )?;

    for round in 1..=config.rounds {
        let best_f1 = best.evaluation.report.mixed.f1;
        let mut record = RoundRecord {
            round,
            candidate_hash: None,
            candidate_f1: None,
            accepted: false,
            rejection_reason: None,
            primary_category_targeted: None,
            best_f1_after: best_f1,
            bad_cases: None,
            detail: None,
        };
        if best.evaluation.bad_case_count() == 0 {
            log::info!("round {round}: no bad cases left, idle");
        } else {
            match state.round(round, &best, &mut record)? {
                Outcome::Rejected(reason, detail) => {
                    log::info!("round {round}: rejected ({}): {detail}", reason.name());
                    record.rejection_reason = Some(reason);
                    record.detail = Some(detail);
                }
                Outcome::Evaluated(evaluation) => {
                    let f1 = evaluation.report.mixed.f1;
                    record.candidate_f1 = Some(f1);
                    record.bad_cases = Some(evaluation.bad_case_count());
                    if f1 > best_f1 {
                        log::info!("round {round}: accepted, Mixed F1 {best_f1:.4} -> {f1:.4}");
                        record.accepted = true;
                        record.best_f1_after = f1;
                        let path = round_file(out_dir, round, "candidate.src");
                        best = Best {
                            round,
                            source: fs::read_to_string(&path).map_err(io_err(&path))?,
                            evaluation,
                        };
                        write(&out_dir.join(BEST_SOURCE_FILE), &best.source)?;
                    } else {
                        log::info!(
                            "round {round}: rejected, Mixed F1 {f1:.4} does not beat {best_f1:.4}"
                        );
                        record.rejection_reason = Some(RejectionReason::ScoreNotImproved);
                    }
                }
            }
        }
        records.push(record);
        write(
            &out_dir.join(MANIFEST_FILE),
            &manifest(config, &zero.dataset, &records, &best).to_json(),
        )?;
    }
    Ok(manifest(config, &zero.dataset, &records, &best))
}

/// Per-round progress table followed by the per-stratum breakdown of the
/// best solver. Rejected candidates show as 0.0000 and idle rounds as `-`.
pub fn render_progress(manifest: &RunManifest) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5}  {:>9}  {:>8}  {:>7}  {:<22}  note",
        "round", "candidate", "accepted", "best", "target"
    );
    for r in &manifest.rounds {
        let candidate = if r.accepted {
            format!("{:.4}", r.candidate_f1.unwrap_or(0.0))
        } else if r.is_idle() {
            "-".to_string()
        } else {
            "0.0000".to_string()
        };
        let note = match (r.round, r.rejection_reason) {
            (0, _) => "baseline".to_string(),
            (_, Some(reason)) => reason.name().to_string(),
            (_, None) if r.accepted => "improved".to_string(),
            _ => "idle".to_string(),
        };
        let _ = writeln!(
            out,
            "{:>5}  {:>9}  {:>8}  {:>7.4}  {:<22}  {}",
            r.round,
            candidate,
            if r.accepted { "yes" } else { "no" },
            r.best_f1_after,
            r.primary_category_targeted.map_or("-", |c| c.name()),
            note
        );
    }
    let _ = writeln!(
        out,
        "\nBest solver (round {}) by scenario difficulty:",
        manifest.best_round
    );
    let _ = writeln!(
        out,
        "{:<10} {:>6} {:>9} {:>9} {:>9}",
        "stratum", "count", "precision", "recall", "f1"
    );
    for (name, m) in manifest.final_report.strata() {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            name, m.count, m.precision, m.recall, m.f1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::StratumMetrics;

    fn rec(
        round: usize,
        f1: Option<f64>,
        accepted: bool,
        reason: Option<RejectionReason>,
        best: f64,
    ) -> RoundRecord {
        RoundRecord {
            round,
            candidate_hash: f1.map(|_| "h".into()),
            candidate_f1: f1,
            accepted,
            rejection_reason: reason,
            primary_category_targeted: None,
            best_f1_after: best,
            bad_cases: None,
            detail: None,
        }
    }

    fn manifest_of(rounds: Vec<RoundRecord>) -> RunManifest {
        let m = StratumMetrics {
            count: 1,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
        RunManifest {
            schema_version: "1".into(),
            config_digest: String::new(),
            dataset_catalog_hash: String::new(),
            rounds,
            best_round: 0,
            best_source_hash: String::new(),
            final_report: AggregateReport {
                simple: m,
                difficult: m,
                mixed: m,
            },
        }
    }

    fn column(table: &str, idx: usize) -> Vec<String> {
        table
            .lines()
            .skip(1)
            .take_while(|l| !l.is_empty())
            .map(|l| l.split_whitespace().nth(idx).unwrap().to_string())
            .collect()
    }

    #[test]
    fn progress_best_column_is_monotone_fold() {
        use RejectionReason::*;
        let m = manifest_of(vec![
            rec(0, Some(0.59), true, None, 0.59),
            rec(1, Some(0.92), true, None, 0.92),
            rec(2, Some(0.5), false, Some(ScoreNotImproved), 0.92),
            rec(3, None, false, Some(SanitizeFailure), 0.92),
            rec(4, None, false, None, 0.92),
            rec(5, None, false, None, 0.92),
        ]);
        m.check().unwrap();
        let t = render_progress(&m);
        assert_eq!(
            column(&t, 3),
            ["0.5900", "0.9200", "0.9200", "0.9200", "0.9200", "0.9200"]
        );
        assert_eq!(
            column(&t, 1),
            ["0.5900", "0.9200", "0.0000", "0.0000", "-", "-"]
        );
    }

    #[test]
    fn single_round_has_two_rows() {
        let m = manifest_of(vec![
            rec(0, Some(0.5), true, None, 0.5),
            rec(1, None, false, Some(RejectionReason::BackendFailure), 0.5),
        ]);
        assert_eq!(column(&render_progress(&m), 0).len(), 2);
    }

    #[test]
    fn check_rejects_bad_sequences() {
        let m = manifest_of(vec![
            rec(0, Some(0.5), true, None, 0.5),
            rec(1, Some(0.5), true, None, 0.5),
        ]);
        assert!(m.check().is_err());
        let m = manifest_of(vec![
            rec(0, Some(0.5), true, None, 0.5),
            rec(
                1,
                Some(0.4),
                false,
                Some(RejectionReason::ScoreNotImproved),
                0.4,
            ),
        ]);
        assert!(m.check().is_err());
    }

    #[test]
    fn digest_ignores_out_dir() {
        let text = r#"{"dataset_dir":"d","initial_solver":"s","solver_runner":["x"],
            "agent":{"backend":{"type":"mock","script_path":"m.json"}}}"#;
        let a = LoopConfig::from_json(text, Path::new("/a")).unwrap();
        let mut b = a.clone();
        b.out_dir = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.rounds, 5);
        assert_eq!(a.k, None);
    }

    #[test]
    fn templates_expand() {
        let text = r#"{"dataset_dir":"d","initial_solver":"s","solver_runner":["{self}","solve","--program","{source}"],
            "validator":["tools/check.sh"],
            "agent":{"backend":{"type":"mock","script_path":"m.json"}}}"#;
        let c = LoopConfig::from_json(text, Path::new("/cfg")).unwrap();
        let spec = c.solver_spec(Path::new("/x/cand.src"), Some(Path::new("/bin/rf")));
        assert_eq!(
            spec.command,
            ["/bin/rf", "solve", "--program", "/x/cand.src"]
        );
        assert_eq!(c.validator_command(None).unwrap(), ["/cfg/tools/check.sh"]);
    }
}
