//! Repair agent: turns a failure report and the current solver source into a
//! repair prompt, asks a text-generation backend for a revised program and
//! cleans the answer into a candidate source.

mod backend;
mod prompt;
mod sanitize;

use std::io::Read as _;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

pub use backend::{
    make_backend, Backend, BackendConfig, BackendError, MockBackend, MockEntry, RemoteBackend,
    REMOTE_ATTEMPTS,
};
pub use prompt::{
    build_prompt, default_questions, BudgetInfeasible, PromptContext, RepairPrompt,
    MIN_PROMPT_BUDGET, SYSTEM_PREAMBLE,
};
pub use sanitize::{is_fence_line, is_prose_line, sanitize, CandidateSource, SanitizeFailure};

use crate::analyze::FailureCategory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub backend: BackendConfig,
    #[serde(default = "default_budget")]
    pub prompt_budget_chars: usize,
    /// Empty means the built-in questions for the primary category.
    #[serde(default)]
    pub exploratory_questions: Vec<String>,
    /// Solver-language reference shown in the prompt framing. Empty means
    /// the built-in summary of the solver language.
    #[serde(default)]
    pub language_notes: String,
}

fn default_budget() -> usize {
    16_384
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AgentConfigError {
    #[error("prompt_budget_chars is {0}, must be at least {MIN_PROMPT_BUDGET}")]
    BudgetTooSmall(usize),
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentConfigError> {
        if self.prompt_budget_chars < MIN_PROMPT_BUDGET {
            return Err(AgentConfigError::BudgetTooSmall(self.prompt_budget_chars));
        }
        Ok(())
    }

    pub fn questions_for(&self, primary: FailureCategory) -> Vec<String> {
        if self.exploratory_questions.is_empty() {
            default_questions(primary)
        } else {
            self.exploratory_questions.clone()
        }
    }

    pub fn notes(&self) -> &str {
        if self.language_notes.is_empty() {
            crate::solver::LANGUAGE_NOTES
        } else {
            &self.language_notes
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("candidate failed validation: {message}")]
pub struct ValidationFailure {
    pub message: String,
}

const CANDIDATE_FILE: &str = "candidate.src";
const VALIDATOR_TIMEOUT: Duration = Duration::from_secs(60);

fn structural_check(text: &str) -> Result<(), String> {
    if text.trim().is_empty() {
        return Err("candidate is empty".into());
    }
    if let Some(n) = text.lines().position(is_fence_line) {
        return Err(format!("line {} is a leftover code fence", n + 1));
    }
    let mut stack = Vec::new();
    for (n, line) in text.lines().enumerate() {
        for ch in line.chars() {
            match ch {
                '(' | '[' | '{' => stack.push(ch),
                ')' | ']' | '}' => {
                    let want = match ch {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    if stack.pop() != Some(want) {
                        return Err(format!("line {}: unbalanced '{ch}'", n + 1));
                    }
                }
                _ => {}
            }
        }
    }
    if let Some(open) = stack.last() {
        return Err(format!("unclosed '{open}'"));
    }
    Ok(())
}

/// Checks a candidate before it is evaluated. With a validator command the
/// candidate is written to a temporary file whose name is appended as the
/// last argument, and exit status 0 means valid. Without one only
/// structural checks run. The validator runs inside the temporary
/// directory and receives the relative name `candidate.src`, so its
/// messages do not depend on where that directory lives.
pub fn validate_candidate(
    candidate: &CandidateSource,
    validator: Option<&[String]>,
) -> Result<(), ValidationFailure> {
    let fail = |message: String| ValidationFailure { message };
    let Some(cmd) = validator.filter(|c| !c.is_empty()) else {
        return structural_check(&candidate.text).map_err(fail);
    };
    let dir = tempfile::tempdir().map_err(|e| fail(format!("temp dir: {e}")))?;
    let file = dir.path().join(CANDIDATE_FILE);
    std::fs::write(&file, &candidate.text).map_err(|e| fail(format!("write candidate: {e}")))?;
    let mut child = Command::new(&cmd[0])
        .args(&cmd[1..])
        .arg(CANDIDATE_FILE)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| fail(format!("cannot run validator {}: {e}", cmd[0])))?;
    let status = match child.wait_timeout(VALIDATOR_TIMEOUT) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(fail(format!(
                "validator timed out after {}s",
                VALIDATOR_TIMEOUT.as_secs()
            )));
        }
        Err(e) => return Err(fail(format!("waiting for validator: {e}"))),
    };
    if status.success() {
        return Ok(());
    }
    let mut output = String::new();
    if let Some(mut out) = child.stdout.take() {
        let _ = out.read_to_string(&mut output);
    }
    if let Some(mut err) = child.stderr.take() {
        let _ = err.read_to_string(&mut output);
    }
    Err(fail(format!(
        "validator exited with {}: {}",
        status
            .code()
            .map_or("a signal".to_string(), |c| c.to_string()),
        output.trim()
    )))
}

/// Reads a candidate from disk, as written by a previous round.
pub fn read_candidate(path: &Path) -> std::io::Result<CandidateSource> {
    std::fs::read_to_string(path).map(CandidateSource::new)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(s: &str) -> CandidateSource {
        CandidateSource::new(s.into())
    }

    #[test]
    fn structural_validation() {
        assert!(validate_candidate(&cand(""), None).is_err());
        assert!(validate_candidate(&cand("  \n"), None).is_err());
        assert!(validate_candidate(&cand("a\n```\nb"), None).is_err());
        assert!(validate_candidate(&cand("f(x]"), None).is_err());
        assert!(validate_candidate(&cand("f(x"), None).is_err());
        assert!(validate_candidate(&cand("f([x]) {}"), None).is_ok());
    }

    #[test]
    fn external_validator_exit_status() {
        let ok = ["true".to_string()];
        let bad = [
            "sh".to_string(),
            "-c".into(),
            "echo nope; exit 3".into(),
            "sh".into(),
        ];
        assert!(validate_candidate(&cand("x"), Some(&ok)).is_ok());
        let err = validate_candidate(&cand("x"), Some(&bad)).unwrap_err();
        assert!(err.message.contains("nope"), "{}", err.message);
    }

    #[test]
    fn budget_floor() {
        let mut c = AgentConfig {
            backend: BackendConfig::Mock {
                script_path: "s.json".into(),
            },
            prompt_budget_chars: 4095,
            exploratory_questions: vec![],
            language_notes: String::new(),
        };
        assert!(c.validate().is_err());
        c.prompt_budget_chars = 4096;
        assert!(c.validate().is_ok());
    }
}
