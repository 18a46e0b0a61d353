use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analyze::{CaseDigest, CauseLine, FailureCategory, FailureReport};
use crate::eval::AggregateReport;

pub const MIN_PROMPT_BUDGET: usize = 4096;

pub const SYSTEM_PREAMBLE: &str = "You repair root-cause-analysis solver programs for telecom \
alarm storms. You receive a failure analysis of the current program and return a complete, \
improved program.";

const OUTPUT_INSTRUCTION: &str = "## Output format\n\
Reply with the complete revised program in a single fenced code block (```). Put nothing but \
the program inside the fence.\n";

/// A repair request: fixed preamble plus the assembled body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPrompt {
    pub system_preamble: String,
    pub body: String,
}

impl RepairPrompt {
    /// Length in characters of preamble and body together.
    pub fn total_chars(&self) -> usize {
        self.system_preamble.chars().count() + self.body.chars().count()
    }

    /// Flat text form, as persisted per round.
    pub fn render(&self) -> String {
        format!(
            "[system]\n{}\n\n[user]\n{}",
            self.system_preamble, self.body
        )
    }
}

/// Inputs to [`build_prompt`] besides the report and the source.
#[derive(Clone, Debug)]
pub struct PromptContext<'a> {
    pub round: usize,
    pub score: &'a AggregateReport,
    /// Short reference for the solver language, shown with the task framing.
    pub language_notes: &'a str,
    pub questions: &'a [String],
    pub budget_chars: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("mandatory prompt sections need {needed} characters, budget is {budget}")]
pub struct BudgetInfeasible {
    pub needed: usize,
    pub budget: usize,
}

/// Authored default questions per failure category, used when the config
/// lists none.
pub fn default_questions(category: FailureCategory) -> Vec<String> {
    let specific: &[&str] = match category {
        FailureCategory::ExtraRootCause => &[
            "Which structural property separates the true cause from the distractors in the failing cases?",
            "Would a candidate attached to deeper, more specific equipment explain the alarms with fewer assumptions?",
        ],
        FailureCategory::MissingRootCause => &[
            "Which filtering step removes the true cause in the failing cases?",
            "Does every target alarm receive at least one answer?",
        ],
        FailureCategory::WrongEquipment => &[
            "How should the equipment be chosen when the same cause is attached to several resources?",
        ],
        FailureCategory::WrongCauseDescription => &[
            "When several causes share one piece of equipment, what evidence favours one of them?",
            "Does the tie-break order prefer the cause that is most common in practice?",
        ],
        FailureCategory::MalformedOutput => &[
            "Does the program follow the language reference exactly, one step per line?",
        ],
        FailureCategory::SolverError => &[
            "Which inputs make the program fail or produce no output?",
        ],
    };
    specific
        .iter()
        .copied()
        .chain(["What is the smallest change that fixes the primary failure mode without breaking passing cases?"])
        .map(String::from)
        .collect()
}

fn grouped(lines: &[CauseLine]) -> Vec<String> {
    let mut by_pair: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
    for l in lines {
        by_pair
            .entry((l.cause_description.as_str(), l.equipment_id.as_str()))
            .or_default()
            .push(l.alarm_id.as_str());
    }
    let mut rows: Vec<(Vec<&str>, &str, &str)> = by_pair
        .into_iter()
        .map(|((d, e), alarms)| (alarms, d, e))
        .collect();
    rows.sort();
    rows.into_iter()
        .map(|(alarms, d, e)| format!("    [{}] {d} @ {e}", alarms.join(", ")))
        .collect()
}

fn render_digest(out: &mut String, d: &CaseDigest, with_raw: bool) {
    let cats: Vec<&str> = d.categories.iter().map(|c| c.name()).collect();
    let _ = writeln!(
        out,
        "Scenario {} ({}, f1 {:.4}{}{})",
        d.scenario_id,
        d.difficulty,
        d.f1,
        if cats.is_empty() { "" } else { "; " },
        cats.join(", ")
    );
    let _ = writeln!(out, "  Candidate causes:");
    for c in &d.candidates {
        let _ = writeln!(
            out,
            "    {} {} @ {}",
            c.id, c.cause_description, c.equipment_id
        );
    }
    let _ = writeln!(out, "  Expected:");
    for l in grouped(&d.truth) {
        let _ = writeln!(out, "{l}");
    }
    let _ = writeln!(out, "  Predicted:");
    let predicted = grouped(&d.prediction);
    if predicted.is_empty() {
        let _ = writeln!(out, "    (nothing)");
    }
    for l in predicted {
        let _ = writeln!(out, "{l}");
    }
    if let Some(e) = &d.error {
        let _ = writeln!(out, "  Error: {e}");
    }
    if with_raw {
        if let Some(raw) = &d.raw_output {
            let _ = writeln!(out, "  Raw output:\n{raw}");
        }
    }
}

/// Keeps the first and last lines of `source`, replacing the middle with a
/// marker, so that roughly `keep` lines survive.
fn middle_out(source: &str, keep: usize) -> String {
    let lines: Vec<&str> = source.lines().collect();
    if keep >= lines.len() {
        return source.to_owned();
    }
    let head = keep.div_ceil(2);
    let tail = keep - head;
    let elided = lines.len() - head - tail;
    let mut out: Vec<String> = lines[..head].iter().map(|s| s.to_string()).collect();
    out.push(format!("[... {elided} lines elided ...]"));
    out.extend(lines[lines.len() - tail..].iter().map(|s| s.to_string()));
    out.join("\n")
}

struct Shape {
    contrasts: bool,
    raw: bool,
    source_lines: Option<usize>,
    representatives: usize,
}

fn assemble(
    report: &FailureReport,
    source: &str,
    ctx: &PromptContext<'_>,
    shape: &Shape,
) -> String {
    let mut b = String::new();
    let _ = writeln!(b, "# Solver repair, round {}\n", ctx.round);
    let _ = writeln!(
        b,
        "The program below reads one scenario (a knowledge graph of network resources, target \
         alarms and candidate causes) and prints the ranked root causes for every target alarm. \
         Improve it so that it names exactly the true root cause and equipment for each alarm."
    );
    if !ctx.language_notes.is_empty() {
        let _ = writeln!(b, "\n{}", ctx.language_notes.trim_end());
    }

    let _ = writeln!(b, "\n## Current score");
    for (name, m) in ctx.score.strata() {
        let _ = writeln!(
            b,
            "{name}: {} scenarios, precision {:.4}, recall {:.4}, f1 {:.4}",
            m.count, m.precision, m.recall, m.f1
        );
    }

    let _ = writeln!(b, "\n## Failure analysis\n{}", report.narrative.trim_end());

    let _ = writeln!(
        b,
        "\n## Representative failures (primary: {})",
        report.primary_category
    );
    for (i, r) in report
        .representatives
        .iter()
        .take(shape.representatives)
        .enumerate()
    {
        let _ = write!(b, "\n### Failure {}\n", i + 1);
        render_digest(&mut b, &r.case, shape.raw);
        if shape.contrasts {
            if let Some(c) = &r.contrast {
                let _ = writeln!(b, "Passing scenario with the same true cause:");
                render_digest(&mut b, c, false);
            }
        }
    }

    let shown = match shape.source_lines {
        Some(n) => middle_out(source, n),
        None => source.to_owned(),
    };
    let _ = writeln!(b, "\n## Current program\n```\n{}\n```", shown.trim_end());

    let _ = writeln!(b, "\n## Questions to consider");
    for q in ctx.questions {
        let _ = writeln!(b, "- {q}");
    }
    let _ = write!(b, "\n{OUTPUT_INSTRUCTION}");
    b
}

/// Builds the repair prompt, shrinking it to fit the budget by dropping, in
/// order: contrasting cases, raw solver outputs, the middle of the source,
/// and representatives beyond the first. Narrative and questions are never
/// cut.
pub fn build_prompt(
    report: &FailureReport,
    source: &str,
    ctx: &PromptContext<'_>,
) -> Result<RepairPrompt, BudgetInfeasible> {
    let preamble = SYSTEM_PREAMBLE.to_owned();
    let fixed = preamble.chars().count();
    let fits = |body: &str| fixed + body.chars().count() <= ctx.budget_chars;

    let mut shape = Shape {
        contrasts: true,
        raw: true,
        source_lines: None,
        representatives: report.representatives.len(),
    };
    let mut body = assemble(report, source, ctx, &shape);
    let steps: [fn(&mut Shape); 2] = [|s| s.contrasts = false, |s| s.raw = false];
    for step in steps {
        if fits(&body) {
            break;
        }
        step(&mut shape);
        body = assemble(report, source, ctx, &shape);
    }
    let total_lines = source.lines().count();
    let mut keep = total_lines;
    while !fits(&body) && keep > 0 {
        keep = if keep > 8 { keep * 3 / 4 } else { keep - 1 };
        shape.source_lines = Some(keep);
        body = assemble(report, source, ctx, &shape);
    }
    while !fits(&body) && shape.representatives > 1 {
        shape.representatives -= 1;
        body = assemble(report, source, ctx, &shape);
    }
    if !fits(&body) {
        return Err(BudgetInfeasible {
            needed: fixed + body.chars().count(),
            budget: ctx.budget_chars,
        });
    }
    Ok(RepairPrompt {
        system_preamble: preamble,
        body,
    })
}
