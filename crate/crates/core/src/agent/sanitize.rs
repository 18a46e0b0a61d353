use serde::{Deserialize, Serialize};

/// A cleaned solver program proposed by the agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSource {
    pub text: String,
    pub source_hash: String,
}

impl CandidateSource {
    pub fn new(text: String) -> Self {
        CandidateSource {
            source_hash: crate::sha256_hex(&text),
            text,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no plausible solver source in the response: {reason}")]
pub struct SanitizeFailure {
    pub reason: String,
}

const PROSE_OPENERS: &[&str] = &[
    "absolutely",
    "below is",
    "certainly",
    "great",
    "hello",
    "hey",
    "here are",
    "here is",
    "here's",
    "hi",
    "of course",
    "okay",
    "sorry",
    "sure",
    "thank you",
    "thanks",
];

/// Whether a line reads like natural-language prose rather than code: it
/// ends in a period or opens with a conversational phrase.
pub fn is_prose_line(line: &str) -> bool {
    let t = line.trim();
    if t.ends_with('.') {
        return true;
    }
    let lower = t.to_lowercase();
    PROSE_OPENERS.iter().any(|p| {
        lower.strip_prefix(p).is_some_and(|rest| {
            rest.chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric() && c != '_')
        })
    })
}

pub fn is_fence_line(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn clean(lines: &[&str]) -> String {
    let trimmed: Vec<&str> = lines.iter().map(|l| l.trim_end()).collect();
    let start = trimmed.iter().position(|l| !l.is_empty());
    let end = trimmed.iter().rposition(|l| !l.is_empty());
    match (start, end) {
        (Some(s), Some(e)) => trimmed[s..=e].join("\n"),
        _ => String::new(),
    }
}

fn plausible(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|first| !is_prose_line(first))
}

/// Fenced blocks of `text`, each as its content lines. An unterminated
/// final block runs to the end of the text.
fn fenced_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if is_fence_line(line) {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(Vec::new()),
            }
        } else if let Some(block) = current.as_mut() {
            block.push(line);
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }
    blocks
}

/// Extracts solver source from a model response.
///
/// With fences present, the longest fenced block whose first nonblank line
/// is not prose wins (the first of equal-length blocks). Without fences, the
/// whole response is used when its first nonblank line is not prose.
/// Trailing whitespace is stripped from every line and leading/trailing
/// blank lines are dropped, so the result is never longer than the input
/// and sanitizing it again returns it unchanged.
pub fn sanitize(response: &str) -> Result<CandidateSource, SanitizeFailure> {
    let fail = |reason: &str| SanitizeFailure {
        reason: reason.to_owned(),
    };
    let text = if response.lines().any(is_fence_line) {
        let mut best: Option<String> = None;
        for block in fenced_blocks(response) {
            let cleaned = clean(&block);
            if cleaned.is_empty() || !plausible(&cleaned) {
                continue;
            }
            if best
                .as_ref()
                .is_none_or(|b| cleaned.chars().count() > b.chars().count())
            {
                best = Some(cleaned);
            }
        }
        best.ok_or_else(|| fail("no fenced block holds code"))?
    } else {
        let cleaned = clean(&response.lines().collect::<Vec<_>>());
        if cleaned.is_empty() {
            return Err(fail("response is empty"));
        }
        if !plausible(&cleaned) {
            return Err(fail("response opens with prose and has no code fence"));
        }
        cleaned
    };
    Ok(CandidateSource::new(text))
}
