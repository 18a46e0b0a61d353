//! Bad-case analysis: categorizes each imperfect scenario, builds the
//! failure histogram, picks the primary failure mode and assembles a
//! contrastive report of representative cases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::{normalize_description, CaseError, CaseOutcome, Prediction};
use crate::kg::{Label, Node, NodeId, RootCause};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureCategory {
    MissingRootCause,
    ExtraRootCause,
    WrongEquipment,
    WrongCauseDescription,
    MalformedOutput,
    SolverError,
}

impl FailureCategory {
    /// Tie-break order for [`select_primary`], highest priority first.
    pub const PRIORITY: [FailureCategory; 6] = [
        FailureCategory::MalformedOutput,
        FailureCategory::SolverError,
        FailureCategory::ExtraRootCause,
        FailureCategory::MissingRootCause,
        FailureCategory::WrongEquipment,
        FailureCategory::WrongCauseDescription,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureCategory::MissingRootCause => "MissingRootCause",
            FailureCategory::ExtraRootCause => "ExtraRootCause",
            FailureCategory::WrongEquipment => "WrongEquipment",
            FailureCategory::WrongCauseDescription => "WrongCauseDescription",
            FailureCategory::MalformedOutput => "MalformedOutput",
            FailureCategory::SolverError => "SolverError",
        }
    }

    pub fn parse(name: &str) -> Option<FailureCategory> {
        FailureCategory::PRIORITY
            .into_iter()
            .find(|c| c.name() == name)
    }

    /// One-line guess at the flaw behind this category.
    pub fn hypothesis(self) -> &'static str {
        match self {
            FailureCategory::MissingRootCause => {
                "the solver drops the true cause or leaves target alarms unanswered"
            }
            FailureCategory::ExtraRootCause => {
                "the solver fails to eliminate distractor candidates"
            }
            FailureCategory::WrongEquipment => {
                "the solver names the right cause on the wrong equipment"
            }
            FailureCategory::WrongCauseDescription => {
                "the solver picks the right equipment but the wrong cause attached to it"
            }
            FailureCategory::MalformedOutput => {
                "the solver output is not a valid prediction document"
            }
            FailureCategory::SolverError => "the solver crashes, times out or prints nothing",
        }
    }

    fn rank(self) -> usize {
        FailureCategory::PRIORITY
            .iter()
            .position(|&c| c == self)
            .expect("listed")
    }
}

impl std::fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

type Pair = (String, String);
type PairMatch = fn(&Pair, &Pair) -> bool;

fn pairs(causes: &[RootCause]) -> BTreeSet<Pair> {
    causes
        .iter()
        .map(|c| {
            (
                normalize_description(&c.cause_description),
                c.equipment_id.clone(),
            )
        })
        .collect()
}

/// Failure categories of one scenario outcome.
///
/// Per alarm, a missing truth pair and an extra predicted pair that share the
/// cause description are reported together as one WrongEquipment; sharing the
/// equipment instead makes them one WrongCauseDescription. Whatever stays
/// unpaired is MissingRootCause or ExtraRootCause. Harness errors suppress
/// all of these.
pub fn categorize(
    expected: &Label,
    predicted: &Prediction,
    error: Option<&CaseError>,
) -> BTreeSet<FailureCategory> {
    match error {
        Some(CaseError::Malformed { .. }) => {
            return BTreeSet::from([FailureCategory::MalformedOutput])
        }
        Some(CaseError::Solver(_)) => return BTreeSet::from([FailureCategory::SolverError]),
        None if predicted.is_malformed() => {
            return BTreeSet::from([FailureCategory::MalformedOutput])
        }
        None => {}
    }
    let empty = Vec::new();
    let alarms: BTreeSet<&NodeId> = expected
        .entries
        .keys()
        .chain(predicted.entries.keys())
        .collect();
    let mut out = BTreeSet::new();
    for alarm in alarms {
        let truth = pairs(expected.entries.get(alarm).unwrap_or(&empty));
        let pred = pairs(predicted.entries.get(alarm).unwrap_or(&empty));
        let mut missing: Vec<&Pair> = truth.difference(&pred).collect();
        let mut extra: Vec<&Pair> = pred.difference(&truth).collect();

        let refinements: [(FailureCategory, PairMatch); 2] = [
            (FailureCategory::WrongEquipment, |m, e| {
                m.0 == e.0 && m.1 != e.1
            }),
            (FailureCategory::WrongCauseDescription, |m, e| {
                m.1 == e.1 && m.0 != e.0
            }),
        ];
        for (category, matches) in refinements {
            let mut i = 0;
            while i < missing.len() {
                if let Some(j) = extra.iter().position(|e| matches(missing[i], e)) {
                    out.insert(category);
                    missing.remove(i);
                    extra.remove(j);
                } else {
                    i += 1;
                }
            }
        }
        if !missing.is_empty() {
            out.insert(FailureCategory::MissingRootCause);
        }
        if !extra.is_empty() {
            out.insert(FailureCategory::ExtraRootCause);
        }
    }
    out
}

pub fn categorize_outcome(case: &CaseOutcome) -> BTreeSet<FailureCategory> {
    categorize(case.expected(), &case.predicted, case.error.as_ref())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub counts: BTreeMap<FailureCategory, usize>,
    pub total_bad_cases: usize,
}

impl FailureHistogram {
    pub fn from_sets<'a>(sets: impl IntoIterator<Item = &'a BTreeSet<FailureCategory>>) -> Self {
        let mut h = FailureHistogram::default();
        for set in sets {
            h.total_bad_cases += 1;
            for &c in set {
                *h.counts.entry(c).or_default() += 1;
            }
        }
        h
    }

    pub fn count(&self, c: FailureCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AnalyzeError {
    #[error("there are no bad cases to analyze")]
    NoBadCases,
}

/// The category with the largest count; ties go to the earlier entry of
/// [`FailureCategory::PRIORITY`].
pub fn select_primary(histogram: &FailureHistogram) -> Result<FailureCategory, AnalyzeError> {
    if histogram.total_bad_cases == 0 {
        return Err(AnalyzeError::NoBadCases);
    }
    histogram
        .counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.rank().cmp(&a.0.rank())))
        .map(|(&c, _)| c)
        .ok_or(AnalyzeError::NoBadCases)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseLine {
    pub alarm_id: String,
    pub cause_description: String,
    pub equipment_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub id: String,
    pub cause_description: String,
    pub equipment_id: String,
}

/// Compact view of one scenario outcome for the repair prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDigest {
    pub scenario_id: String,
    pub difficulty: String,
    pub f1: f64,
    pub categories: Vec<FailureCategory>,
    pub candidates: Vec<CandidateLine>,
    pub truth: Vec<CauseLine>,
    pub prediction: Vec<CauseLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

fn lines(entries: &BTreeMap<NodeId, Vec<RootCause>>) -> Vec<CauseLine> {
    entries
        .iter()
        .flat_map(|(a, causes)| {
            causes.iter().map(move |c| CauseLine {
                alarm_id: a.to_string(),
                cause_description: c.cause_description.clone(),
                equipment_id: c.equipment_id.clone(),
            })
        })
        .collect()
}

/// Raw output longer than this is cut in digests.
const RAW_OUTPUT_KEEP: usize = 1200;

impl CaseDigest {
    pub fn new(case: &CaseOutcome, categories: &BTreeSet<FailureCategory>, with_raw: bool) -> Self {
        let candidates = case
            .scenario
            .graph
            .nodes()
            .filter_map(Node::as_cause)
            .map(|c| CandidateLine {
                id: c.id.to_string(),
                cause_description: c.cause_description.clone(),
                equipment_id: c.equipment_id.clone(),
            })
            .collect();
        let raw_output = (with_raw && !case.raw_output.is_empty()).then(|| {
            let mut raw = case.raw_output.clone();
            if raw.len() > RAW_OUTPUT_KEEP {
                let cut = (0..=RAW_OUTPUT_KEEP)
                    .rev()
                    .find(|&i| raw.is_char_boundary(i))
                    .unwrap_or(0);
                raw.truncate(cut);
                raw.push_str("\n[... output cut ...]");
            }
            raw
        });
        CaseDigest {
            scenario_id: case.scenario_id().to_owned(),
            difficulty: case.metrics.difficulty.name().into(),
            f1: case.metrics.f1,
            categories: categories.iter().copied().collect(),
            candidates,
            truth: lines(&case.expected().entries),
            prediction: lines(&case.predicted.entries),
            error: case.error.as_ref().map(ToString::to_string),
            raw_output,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub case: CaseDigest,
    /// A passing scenario with the same true cause description.
    pub contrast: Option<CaseDigest>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub representatives: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig { representatives: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub total_scenarios: usize,
    pub histogram: FailureHistogram,
    pub primary_category: FailureCategory,
    pub representatives: Vec<Representative>,
    pub narrative: String,
}

impl FailureReport {
    pub fn to_json(&self) -> String {
        crate::kg::to_text(self)
    }
}

fn truth_descriptions(label: &Label) -> BTreeSet<String> {
    label
        .entries
        .values()
        .flatten()
        .map(|c| normalize_description(&c.cause_description))
        .collect()
}

/// Builds the contrastive failure report from the bad and passing outcomes
/// of one evaluation.
pub fn build_report(
    bad: &[&CaseOutcome],
    passing: &[&CaseOutcome],
    config: &AnalyzerConfig,
) -> Result<FailureReport, AnalyzeError> {
    let categorized: Vec<(&CaseOutcome, BTreeSet<FailureCategory>)> =
        bad.iter().map(|&c| (c, categorize_outcome(c))).collect();
    let histogram = FailureHistogram::from_sets(categorized.iter().map(|(_, s)| s));
    let primary = select_primary(&histogram)?;

    let mut chosen: Vec<&(&CaseOutcome, BTreeSet<FailureCategory>)> = categorized
        .iter()
        .filter(|(_, s)| s.contains(&primary))
        .collect();
    chosen.sort_by(|a, b| {
        a.0.metrics
            .f1
            .total_cmp(&b.0.metrics.f1)
            .then_with(|| a.0.scenario_id().cmp(b.0.scenario_id()))
    });
    chosen.truncate(config.representatives);

    let mut passing: Vec<&CaseOutcome> = passing.to_vec();
    passing.sort_by(|a, b| a.scenario_id().cmp(b.scenario_id()));
    let representatives = chosen
        .into_iter()
        .map(|(case, cats)| {
            let wanted = truth_descriptions(case.expected());
            let contrast = passing
                .iter()
                .find(|p| !truth_descriptions(p.expected()).is_disjoint(&wanted))
                .map(|p| CaseDigest::new(p, &BTreeSet::new(), false));
            Representative {
                case: CaseDigest::new(case, cats, true),
                contrast,
            }
        })
        .collect();

    let total = bad.len() + passing.len();
    Ok(FailureReport {
        narrative: narrative(&histogram, primary, total),
        total_scenarios: total,
        histogram,
        primary_category: primary,
        representatives,
    })
}

fn narrative(h: &FailureHistogram, primary: FailureCategory, total: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Bad cases: {} of {} scenarios.",
        h.total_bad_cases, total
    );
    let _ = writeln!(
        s,
        "Failure histogram (a case may carry several categories):"
    );
    for c in FailureCategory::PRIORITY {
        let _ = writeln!(s, "  {:<22} {}", c.name(), h.count(c));
    }
    let _ = writeln!(s, "Primary failure mode: {primary}");
    let _ = writeln!(s, "Hypotheses:");
    for c in FailureCategory::PRIORITY {
        if h.count(c) > 0 {
            let _ = writeln!(s, "  {}: {}", c.name(), c.hypothesis());
        }
    }
    s
}
