use std::collections::BTreeSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::Serialize;

use super::catalog::{CausalRule, RuleCatalog, Selector};
use super::topology::Hierarchy;
use super::ForgeError;
use crate::kg::{
    AlarmNode, CauseNode, Difficulty, Edge, EdgeKind, KnowledgeGraph, Label, Node, NodeId,
    ResourceNode, RootCause, Scenario,
};

/// One observable alarm: code raised on the resource with this ldn.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SignatureEntry {
    pub code: u32,
    pub ldn: String,
}

impl SignatureEntry {
    pub fn new(code: u32, ldn: impl Into<String>) -> Self {
        SignatureEntry {
            code,
            ldn: ldn.into(),
        }
    }
}

/// Set of alarms a root cause produces.
pub type AlarmSignature = BTreeSet<SignatureEntry>;

/// A rule applied at a concrete anchor resource.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CandidateCause {
    pub rule_id: String,
    pub anchor: NodeId,
}

impl CandidateCause {
    pub fn new(rule_id: impl Into<String>, anchor: impl Into<NodeId>) -> Self {
        CandidateCause {
            rule_id: rule_id.into(),
            anchor: anchor.into(),
        }
    }
}

fn anchor_of<'g>(
    h: &Hierarchy<'g>,
    rule: &CausalRule,
    anchor: &NodeId,
) -> Result<&'g ResourceNode, ForgeError> {
    let node = h
        .resource(anchor)
        .ok_or_else(|| ForgeError::UnknownAnchor(anchor.clone()))?;
    if node.kind != rule.anchor_kind {
        return Err(ForgeError::AnchorKindMismatch {
            rule_id: rule.rule_id.clone(),
            anchor: anchor.clone(),
            expected: rule.anchor_kind,
            found: node.kind,
        });
    }
    Ok(node)
}

fn signature_at(h: &Hierarchy<'_>, rule: &CausalRule, anchor: &ResourceNode) -> AlarmSignature {
    let mut sig = AlarmSignature::new();
    for t in &rule.alarm_templates {
        let targets = match t.selector {
            Selector::Anchor => vec![anchor],
            Selector::Descendants { kind, max_hops } => {
                h.descendants_within(&anchor.id, kind, max_hops)
            }
            Selector::Ancestors { kind, max_hops } => {
                h.ancestors_within(&anchor.id, kind, max_hops)
            }
        };
        sig.extend(
            targets
                .into_iter()
                .map(|r| SignatureEntry::new(t.code, r.ldn.clone())),
        );
    }
    sig
}

/// Alarms raised when `rule` fires at `anchor`: the union over the rule's
/// templates of the resources each selector resolves to.
pub fn backward_propagate(
    graph: &KnowledgeGraph,
    rule: &CausalRule,
    anchor: &NodeId,
) -> Result<AlarmSignature, ForgeError> {
    let h = Hierarchy::new(graph);
    let node = anchor_of(&h, rule, anchor)?;
    Ok(signature_at(&h, rule, node))
}

/// Every (rule, anchor) whose backward signature contains all of `observed`,
/// sorted by rule id then anchor id.
///
/// Instead of propagating every rule from every resource, candidate anchors
/// are found by inverting the selectors from one observed alarm: only
/// resources that could have raised that alarm are checked.
pub fn forward_infer(
    graph: &KnowledgeGraph,
    observed: &AlarmSignature,
    catalog: &RuleCatalog,
) -> Vec<CandidateCause> {
    let h = Hierarchy::new(graph);
    forward_infer_in(&h, observed, catalog)
}

fn forward_infer_in(
    h: &Hierarchy<'_>,
    observed: &AlarmSignature,
    catalog: &RuleCatalog,
) -> Vec<CandidateCause> {
    let Some(pivot) = observed.first() else {
        return Vec::new();
    };
    let Some(origin) = h.by_ldn(&pivot.ldn) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for rule in &catalog.rules {
        let mut anchors: BTreeSet<&NodeId> = BTreeSet::new();
        for t in rule.alarm_templates.iter().filter(|t| t.code == pivot.code) {
            match t.selector {
                Selector::Anchor => {
                    if origin.kind == rule.anchor_kind {
                        anchors.insert(&origin.id);
                    }
                }
                Selector::Descendants { kind, max_hops } if kind == origin.kind => {
                    anchors.extend(
                        h.ancestors_within(&origin.id, rule.anchor_kind, max_hops)
                            .into_iter()
                            .map(|r| &r.id),
                    );
                }
                Selector::Ancestors { kind, max_hops } if kind == origin.kind => {
                    anchors.extend(
                        h.descendants_within(&origin.id, rule.anchor_kind, max_hops)
                            .into_iter()
                            .map(|r| &r.id),
                    );
                }
                _ => {}
            }
        }
        for id in anchors {
            let anchor = h.resource(id).expect("anchor comes from the hierarchy");
            if observed.is_subset(&signature_at(h, rule, anchor)) {
                out.push(CandidateCause::new(rule.rule_id.clone(), id.clone()));
            }
        }
    }
    out.sort();
    out
}

/// Grades a true cause by the size of its forward inference set.
///
/// Fails with [`ForgeError::CycleClosure`] when forward inference over the
/// true cause's own signature does not return the true cause, which means
/// the catalog or graph is inconsistent.
pub fn grade(
    graph: &KnowledgeGraph,
    true_cause: &CandidateCause,
    catalog: &RuleCatalog,
) -> Result<Difficulty, ForgeError> {
    let h = Hierarchy::new(graph);
    grade_in(&h, true_cause, catalog).map(|(d, _, _)| d)
}

fn grade_in(
    h: &Hierarchy<'_>,
    true_cause: &CandidateCause,
    catalog: &RuleCatalog,
) -> Result<(Difficulty, AlarmSignature, Vec<CandidateCause>), ForgeError> {
    let rule = catalog
        .rule(&true_cause.rule_id)
        .ok_or_else(|| ForgeError::UnknownRule(true_cause.rule_id.clone()))?;
    let anchor = anchor_of(h, rule, &true_cause.anchor)?;
    let signature = signature_at(h, rule, anchor);
    if signature.is_empty() {
        return Err(ForgeError::EmptySignature {
            rule_id: rule.rule_id.clone(),
            anchor: anchor.id.clone(),
        });
    }
    let candidates = forward_infer_in(h, &signature, catalog);
    if !candidates.contains(true_cause) {
        return Err(ForgeError::CycleClosure {
            rule_id: true_cause.rule_id.clone(),
            anchor: true_cause.anchor.clone(),
        });
    }
    let difficulty =
        Difficulty::from_ambiguity(candidates.len()).expect("candidates contain the true cause");
    Ok((difficulty, signature, candidates))
}

/// Report time of the first alarm of a scenario: a fixed base shifted by a
/// per-scenario offset derived from the scenario id.
pub fn scenario_epoch(scenario_id: &str) -> DateTime<Utc> {
    let base = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let digest = crate::sha256_hex(scenario_id);
    let offset = u64::from_str_radix(&digest[..8], 16).expect("hex digest") % (365 * 86_400);
    base + Duration::seconds(offset as i64)
}

/// Builds a complete graded scenario from a topology and a true cause.
///
/// One alarm is raised per signature entry, `generate`d by its resource and
/// timestamped by its hop distance from the anchor. All of them are targets,
/// ordered by (time, ldn, code) and numbered in that order. Every candidate
/// forward inference returns becomes a cause node, and the earliest alarm
/// links to each through `causedBy`. The label maps every target to the true
/// cause at the anchor.
pub fn assemble_scenario(
    graph: &KnowledgeGraph,
    true_cause: &CandidateCause,
    catalog: &RuleCatalog,
    scenario_id: &str,
) -> Result<Scenario, ForgeError> {
    let h = Hierarchy::new(graph);
    let (difficulty, signature, candidates) = grade_in(&h, true_cause, catalog)?;
    let rule = catalog.rule(&true_cause.rule_id).expect("graded above");
    let anchor = h.resource(&true_cause.anchor).expect("graded above");
    let dist = h.distances(&anchor.id);
    let epoch = scenario_epoch(scenario_id);

    let mut raised: Vec<(DateTime<Utc>, &SignatureEntry, &ResourceNode)> = signature
        .iter()
        .map(|e| {
            let r = h
                .by_ldn(&e.ldn)
                .expect("signature names hierarchy resources");
            let hops = dist.get(&r.id).copied().unwrap_or(0);
            (epoch + Duration::seconds(hops as i64), e, r)
        })
        .collect();
    raised.sort_by(|a, b| (a.0, &a.1.ldn, a.1.code).cmp(&(b.0, &b.1.ldn, b.1.code)));

    let mut nodes: Vec<Node> = graph.nodes().cloned().collect();
    let mut edges: Vec<Edge> = graph.edges().to_vec();
    let mut targets = Vec::new();
    for (i, (time, entry, resource)) in raised.iter().enumerate() {
        let template = rule
            .template_for(entry.code)
            .expect("code comes from the rule");
        let id = NodeId::new(format!("A{:03}", i + 1));
        nodes.push(Node::Alarm(AlarmNode {
            id: id.clone(),
            title: template.title.clone(),
            code: entry.code,
            severity: template.severity,
            report_time: *time,
        }));
        edges.push(Edge::new(
            resource.id.clone(),
            id.clone(),
            EdgeKind::Generate,
        ));
        targets.push(id);
    }
    let first = targets.first().cloned().expect("signature is nonempty");
    for (i, c) in candidates.iter().enumerate() {
        let r = catalog.rule(&c.rule_id).expect("inferred from the catalog");
        let at = h.resource(&c.anchor).expect("inferred from the hierarchy");
        let id = NodeId::new(format!("C{:02}", i + 1));
        nodes.push(Node::Cause(CauseNode {
            id: id.clone(),
            cause_description: r.cause_description.clone(),
            equipment_id: at.ldn.clone(),
            solution: r.solution.clone(),
        }));
        edges.push(Edge::new(first.clone(), id, EdgeKind::CausedBy));
    }

    let truth = RootCause {
        cause_description: rule.cause_description.clone(),
        equipment_id: anchor.ldn.clone(),
        solution: rule.solution.clone(),
    };
    let label = Label {
        scenario_id: scenario_id.to_owned(),
        entries: targets
            .iter()
            .map(|t| (t.clone(), vec![truth.clone()]))
            .collect(),
    };
    let graph = KnowledgeGraph::new(scenario_id, nodes, edges, targets);
    Scenario::assemble(graph, label, difficulty).map_err(|e| ForgeError::Assembly(e.to_string()))
}
