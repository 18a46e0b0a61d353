//! JSON encoding of the input and label documents.
//!
//! Parsing is strict: unknown fields, unknown node/edge types and badly
//! formatted timestamps are schema violations. Serialization is canonical:
//! keys in a fixed order, nodes sorted by id, edges by (kind, src, dst), so
//! equal values always produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::{
    AlarmNode, CauseNode, Edge, EdgeKind, KnowledgeGraph, Label, Node, NodeId, ResourceKind,
    ResourceNode, RootCause, Severity,
};
use super::validate::validate_graph;

pub const SCHEMA_VERSION: &str = "1";
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("malformed document at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violation at `{path}`: {message}")]
    Invariant { path: String, message: String },
}

impl DocumentError {
    pub fn path(&self) -> &str {
        match self {
            DocumentError::Malformed { path, .. }
            | DocumentError::Schema { path, .. }
            | DocumentError::Invariant { path, .. } => path,
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        DocumentError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    fn invariant(path: impl Into<String>, message: impl Into<String>) -> Self {
        DocumentError::Invariant {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let naive = NaiveDateTime::parse_from_str(s, TIME_FORMAT).ok()?;
    let t = naive.and_utc();
    // chrono accepts unpadded fields; the wire form does not.
    (format_timestamp(&t) == s).then_some(t)
}

fn syntax(text: &str) -> Result<Value, DocumentError> {
    serde_json::from_str(text).map_err(|e| DocumentError::Malformed {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn typed<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, DocumentError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_owned(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        DocumentError::schema(path, e.into_inner().to_string())
    })
}

fn check_version(version: &str) -> Result<(), DocumentError> {
    if version != SCHEMA_VERSION {
        return Err(DocumentError::schema(
            "schema_version",
            format!("unsupported schema version `{version}`, expected `{SCHEMA_VERSION}`"),
        ));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputIn {
    schema_version: String,
    scenario_id: String,
    nodes: Vec<NodeIn>,
    edges: Vec<EdgeDoc>,
    target_alarms: Vec<NodeId>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeIn {
    id: NodeId,
    #[serde(rename = "type")]
    node_type: NodeType,
    properties: Value,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
enum NodeType {
    BaseStation,
    #[serde(rename = "BBU")]
    Bbu,
    Board,
    #[serde(rename = "RRU")]
    Rru,
    RiPort,
    AlarmDetail,
    AlarmCause,
}

impl NodeType {
    fn resource_kind(self) -> Option<ResourceKind> {
        Some(match self {
            NodeType::BaseStation => ResourceKind::BaseStation,
            NodeType::Bbu => ResourceKind::Bbu,
            NodeType::Board => ResourceKind::Board,
            NodeType::Rru => ResourceKind::Rru,
            NodeType::RiPort => ResourceKind::RiPort,
            NodeType::AlarmDetail | NodeType::AlarmCause => return None,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourceProps {
    ldn: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    serial: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlarmProps {
    title: String,
    code: u32,
    severity: Severity,
    #[serde(rename = "reportAlarmTime")]
    report_alarm_time: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CauseProps {
    cause_description: String,
    equipment_id: String,
    solution: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: NodeId,
    dst: NodeId,
    #[serde(rename = "type")]
    kind: EdgeKind,
}

#[derive(Serialize)]
struct InputOut<'a> {
    schema_version: &'static str,
    scenario_id: &'a str,
    nodes: Vec<NodeOut<'a>>,
    edges: Vec<EdgeDoc>,
    target_alarms: &'a [NodeId],
}

#[derive(Serialize)]
struct NodeOut<'a> {
    id: &'a NodeId,
    #[serde(rename = "type")]
    node_type: &'static str,
    properties: PropsOut,
}

#[derive(Serialize)]
#[serde(untagged)]
enum PropsOut {
    Resource(ResourceProps),
    Alarm(AlarmProps),
    Cause(CauseProps),
}

/// Parses an input document into a validated graph.
pub fn parse_input(text: &str) -> Result<KnowledgeGraph, DocumentError> {
    let doc: InputIn = typed(syntax(text)?, "")?;
    check_version(&doc.schema_version)?;

    let mut seen = BTreeSet::new();
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        let path = format!("nodes[{i}]");
        if !seen.insert(n.id.clone()) {
            return Err(DocumentError::invariant(
                format!("{path}.id"),
                format!("duplicate node id `{}`", n.id),
            ));
        }
        let props_path = format!("{path}.properties");
        let node = match (n.node_type, n.node_type.resource_kind()) {
            (_, Some(kind)) => {
                let p: ResourceProps = typed(n.properties, &props_path)?;
                Node::Resource(ResourceNode {
                    id: n.id,
                    kind,
                    ldn: p.ldn,
                    serial: p.serial,
                })
            }
            (NodeType::AlarmDetail, None) => {
                let p: AlarmProps = typed(n.properties, &props_path)?;
                let report_time = parse_timestamp(&p.report_alarm_time).ok_or_else(|| {
                    DocumentError::schema(
                        format!("{props_path}.reportAlarmTime"),
                        format!(
                            "`{}` is not of the form YYYY-MM-DDThh:mm:ssZ",
                            p.report_alarm_time
                        ),
                    )
                })?;
                Node::Alarm(AlarmNode {
                    id: n.id,
                    title: p.title,
                    code: p.code,
                    severity: p.severity,
                    report_time,
                })
            }
            (_, None) => {
                let p: CauseProps = typed(n.properties, &props_path)?;
                Node::Cause(CauseNode {
                    id: n.id,
                    cause_description: p.cause_description,
                    equipment_id: p.equipment_id,
                    solution: p.solution,
                })
            }
        };
        nodes.push(node);
    }
    let edges = doc.edges.into_iter().map(|e| Edge {
        kind: e.kind,
        src: e.src,
        dst: e.dst,
    });
    let graph = KnowledgeGraph::new(doc.scenario_id, nodes, edges, doc.target_alarms);
    if let Some(v) = validate_graph(&graph).into_iter().next() {
        return Err(DocumentError::invariant(
            format!("{}:{}", v.invariant, v.key),
            v.message,
        ));
    }
    Ok(graph)
}

/// Canonical input document text for `graph`.
pub fn serialize_input(graph: &KnowledgeGraph) -> String {
    let nodes = graph
        .nodes()
        .map(|n| NodeOut {
            id: n.id(),
            node_type: n.type_name(),
            properties: match n {
                Node::Resource(r) => PropsOut::Resource(ResourceProps {
                    ldn: r.ldn.clone(),
                    serial: r.serial.clone(),
                }),
                Node::Alarm(a) => PropsOut::Alarm(AlarmProps {
                    title: a.title.clone(),
                    code: a.code,
                    severity: a.severity,
                    report_alarm_time: format_timestamp(&a.report_time),
                }),
                Node::Cause(c) => PropsOut::Cause(CauseProps {
                    cause_description: c.cause_description.clone(),
                    equipment_id: c.equipment_id.clone(),
                    solution: c.solution.clone(),
                }),
            },
        })
        .collect();
    let edges = graph
        .edges()
        .iter()
        .map(|e| EdgeDoc {
            src: e.src.clone(),
            dst: e.dst.clone(),
            kind: e.kind,
        })
        .collect();
    let doc = InputOut {
        schema_version: SCHEMA_VERSION,
        scenario_id: graph.scenario_id(),
        nodes,
        edges,
        target_alarms: graph.target_alarms(),
    };
    to_text(&doc)
}

pub(crate) fn to_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values always serialize");
    s.push('\n');
    s
}

/// Shared shape of label and prediction documents.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CausesDoc {
    pub schema_version: String,
    pub scenario_id: String,
    pub alarms: Vec<AlarmCauses>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct AlarmCauses {
    pub alarm_id: NodeId,
    pub root_causes: Vec<RootCause>,
}

pub(crate) fn parse_causes(
    text: &str,
) -> Result<(String, BTreeMap<NodeId, Vec<RootCause>>), DocumentError> {
    let doc: CausesDoc = typed(syntax(text)?, "")?;
    check_version(&doc.schema_version)?;
    let mut entries = BTreeMap::new();
    for (i, a) in doc.alarms.into_iter().enumerate() {
        if entries.contains_key(&a.alarm_id) {
            return Err(DocumentError::invariant(
                format!("alarms[{i}].alarm_id"),
                format!("alarm `{}` listed twice", a.alarm_id),
            ));
        }
        entries.insert(a.alarm_id, a.root_causes);
    }
    Ok((doc.scenario_id, entries))
}

pub(crate) fn serialize_causes<'a>(
    scenario_id: &str,
    entries: impl IntoIterator<Item = (&'a NodeId, &'a Vec<RootCause>)>,
) -> String {
    let doc = CausesDoc {
        schema_version: SCHEMA_VERSION.to_owned(),
        scenario_id: scenario_id.to_owned(),
        alarms: entries
            .into_iter()
            .map(|(id, causes)| AlarmCauses {
                alarm_id: id.clone(),
                root_causes: causes.clone(),
            })
            .collect(),
    };
    to_text(&doc)
}

pub fn parse_label(text: &str) -> Result<Label, DocumentError> {
    let (scenario_id, entries) = parse_causes(text)?;
    for (i, (id, causes)) in entries.iter().enumerate() {
        if causes.is_empty() {
            return Err(DocumentError::invariant(
                format!("alarms[{i}].root_causes"),
                format!("alarm `{id}` has no root causes"),
            ));
        }
    }
    Ok(Label {
        scenario_id,
        entries,
    })
}

pub fn serialize_label(label: &Label) -> String {
    serialize_causes(&label.scenario_id, &label.entries)
}
