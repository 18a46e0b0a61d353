use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::kg::{parse_causes, Difficulty, Label, NodeId, RootCause};

/// A solver's answer: ranked root causes per alarm. `malformed` is set when
/// the output did not parse, in which case `entries` is empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub entries: BTreeMap<NodeId, Vec<RootCause>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malformed: Option<String>,
}

impl Prediction {
    pub fn is_malformed(&self) -> bool {
        self.malformed.is_some()
    }
}

/// Trims and collapses internal whitespace runs to one space.
pub fn normalize_description(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Strict parse of a prediction document. Repeated (cause, equipment) pairs
/// under one alarm keep only their first rank. Any parse failure yields an
/// empty prediction flagged malformed.
pub fn parse_prediction(raw: &str) -> Prediction {
    match parse_causes(raw) {
        Ok((_, entries)) => Prediction {
            entries: entries
                .into_iter()
                .map(|(alarm, causes)| {
                    let mut seen = HashSet::new();
                    let kept = causes
                        .into_iter()
                        .filter(|c| {
                            seen.insert((
                                normalize_description(&c.cause_description),
                                c.equipment_id.clone(),
                            ))
                        })
                        .collect();
                    (alarm, kept)
                })
                .collect(),
            malformed: None,
        },
        Err(e) => Prediction {
            entries: BTreeMap::new(),
            malformed: Some(e.to_string()),
        },
    }
}

/// Cuts every alarm's list to its first `k` entries.
pub fn truncate_at_k(pred: &Prediction, k: usize) -> Prediction {
    assert!(k >= 1, "k must be at least 1");
    Prediction {
        entries: pred
            .entries
            .iter()
            .map(|(a, v)| (a.clone(), v.iter().take(k).cloned().collect()))
            .collect(),
        malformed: pred.malformed.clone(),
    }
}

/// The matching key: (alarm id, normalized description, equipment ldn).
pub type Triple = (NodeId, String, String);

pub fn triples<'a>(
    entries: impl IntoIterator<Item = (&'a NodeId, &'a Vec<RootCause>)>,
) -> BTreeSet<Triple> {
    entries
        .into_iter()
        .flat_map(|(a, causes)| {
            causes.iter().map(move |c| {
                (
                    a.clone(),
                    normalize_description(&c.cause_description),
                    c.equipment_id.clone(),
                )
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Score {
    pub const ZERO: Score = Score {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    /// Score from set sizes. Precision is 0 for an empty prediction against a
    /// nonempty truth, recall is 0 for a nonempty prediction against an empty
    /// truth, and two empty sets score 1.
    pub fn from_counts(hits: usize, predicted: usize, truth: usize) -> Score {
        if predicted == 0 && truth == 0 {
            return Score {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Score {
            precision: ratio(hits, predicted),
            recall: ratio(hits, truth),
            // Harmonic mean of the two ratios, computed from the counts.
            f1: ratio(2 * hits, predicted + truth),
        }
    }
}

/// Scores a prediction against a label, optionally truncating each alarm's
/// list to `k` entries first.
pub fn score_scenario(pred: &Prediction, label: &Label, k: Option<usize>) -> Score {
    if pred.is_malformed() {
        return Score::ZERO;
    }
    let truncated;
    let pred = match k {
        Some(k) => {
            truncated = truncate_at_k(pred, k);
            &truncated
        }
        None => pred,
    };
    let p = triples(&pred.entries);
    let t = triples(&label.entries);
    Score::from_counts(p.intersection(&t).count(), p.len(), t.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario_id: String,
    pub difficulty: Difficulty,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScenarioMetrics {
    pub fn new(scenario_id: impl Into<String>, difficulty: Difficulty, score: Score) -> Self {
        ScenarioMetrics {
            scenario_id: scenario_id.into(),
            difficulty,
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StratumMetrics {
    pub count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub simple: StratumMetrics,
    pub difficult: StratumMetrics,
    pub mixed: StratumMetrics,
}

impl AggregateReport {
    pub fn strata(&self) -> [(&'static str, &StratumMetrics); 3] {
        [
            ("simple", &self.simple),
            ("difficult", &self.difficult),
            ("mixed", &self.mixed),
        ]
    }
}

fn stratum<'a>(rows: impl Iterator<Item = &'a ScenarioMetrics>) -> StratumMetrics {
    let (mut n, mut p, mut r, mut f) = (0usize, 0.0, 0.0, 0.0);
    for m in rows {
        n += 1;
        p += m.precision;
        r += m.recall;
        f += m.f1;
    }
    if n == 0 {
        return StratumMetrics::default();
    }
    let n_f = n as f64;
    StratumMetrics {
        count: n,
        precision: p / n_f,
        recall: r / n_f,
        f1: f / n_f,
    }
}

/// Macro averages per stratum. Rows are summed in scenario-id order, so the
/// result does not depend on the order of `metrics`.
pub fn aggregate(metrics: &[ScenarioMetrics]) -> AggregateReport {
    let mut rows: Vec<&ScenarioMetrics> = metrics.iter().collect();
    rows.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    AggregateReport {
        simple: stratum(rows.iter().copied().filter(|m| m.difficulty.is_simple())),
        difficult: stratum(rows.iter().copied().filter(|m| !m.difficulty.is_simple())),
        mixed: stratum(rows.iter().copied()),
    }
}
