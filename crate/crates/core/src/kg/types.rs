use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Identifier of a node, unique within one graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Self {
        NodeId(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(value: &str) -> Self {
        NodeId(value.to_owned())
    }
}

/// Resource kinds, ordered from the root of the hierarchy down to the leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    BaseStation,
    #[serde(rename = "BBU")]
    Bbu,
    Board,
    #[serde(rename = "RRU")]
    Rru,
    RiPort,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 5] = [
        ResourceKind::BaseStation,
        ResourceKind::Bbu,
        ResourceKind::Board,
        ResourceKind::Rru,
        ResourceKind::RiPort,
    ];

    /// Depth in the dependOn hierarchy; the base station sits at 0.
    pub fn level(self) -> usize {
        match self {
            ResourceKind::BaseStation => 0,
            ResourceKind::Bbu => 1,
            ResourceKind::Board => 2,
            ResourceKind::Rru => 3,
            ResourceKind::RiPort => 4,
        }
    }

    pub fn type_name(self) -> &'static str {
        match self {
            ResourceKind::BaseStation => "BaseStation",
            ResourceKind::Bbu => "BBU",
            ResourceKind::Board => "Board",
            ResourceKind::Rru => "RRU",
            ResourceKind::RiPort => "RiPort",
        }
    }

    /// Segment prefix used when building ldn paths.
    pub fn ldn_segment(self) -> &'static str {
        match self {
            ResourceKind::BaseStation => "BS",
            ResourceKind::Bbu => "BBU",
            ResourceKind::Board => "Board",
            ResourceKind::Rru => "RRU",
            ResourceKind::RiPort => "Port",
        }
    }

    pub fn child(self) -> Option<ResourceKind> {
        ResourceKind::ALL.get(self.level() + 1).copied()
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.type_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    Major,
    Minor,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceNode {
    pub id: NodeId,
    pub kind: ResourceKind,
    /// Logical distinguished name; unique among the resources of a graph.
    pub ldn: String,
    pub serial: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlarmNode {
    pub id: NodeId,
    pub title: String,
    pub code: u32,
    pub severity: Severity,
    pub report_time: DateTime<Utc>,
}

/// A candidate cause shown to the solver. `equipment_id` is the ldn of the
/// resource the candidate is attached to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CauseNode {
    pub id: NodeId,
    pub cause_description: String,
    pub equipment_id: String,
    pub solution: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Resource(ResourceNode),
    Alarm(AlarmNode),
    Cause(CauseNode),
}

impl Node {
    pub fn id(&self) -> &NodeId {
        match self {
            Node::Resource(n) => &n.id,
            Node::Alarm(n) => &n.id,
            Node::Cause(n) => &n.id,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Node::Resource(n) => n.kind.type_name(),
            Node::Alarm(_) => "AlarmDetail",
            Node::Cause(_) => "AlarmCause",
        }
    }

    pub fn as_resource(&self) -> Option<&ResourceNode> {
        match self {
            Node::Resource(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_alarm(&self) -> Option<&AlarmNode> {
        match self {
            Node::Alarm(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_cause(&self) -> Option<&CauseNode> {
        match self {
            Node::Cause(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Child resource depends on its parent resource.
    #[serde(rename = "dependOn")]
    DependOn,
    /// Resource reported the alarm.
    #[serde(rename = "generate")]
    Generate,
    /// Effect alarm points at a hypothesized cause (alarm or candidate cause).
    #[serde(rename = "causedBy")]
    CausedBy,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::DependOn, EdgeKind::Generate, EdgeKind::CausedBy];

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::DependOn => "dependOn",
            EdgeKind::Generate => "generate",
            EdgeKind::CausedBy => "causedBy",
        }
    }
}

/// Field order gives the canonical edge order: (kind, src, dst).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub kind: EdgeKind,
    pub src: NodeId,
    pub dst: NodeId,
}

impl Edge {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>, kind: EdgeKind) -> Self {
        Edge {
            kind,
            src: src.into(),
            dst: dst.into(),
        }
    }
}

impl From<String> for NodeId {
    fn from(value: String) -> Self {
        NodeId(value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown node `{0}`")]
pub struct UnknownNode(pub NodeId);

/// Directed knowledge graph of one scenario. Immutable once built.
///
/// Construction does not validate; use [`super::validate_graph`] or parse
/// through [`super::parse_input`] to get a checked graph.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    scenario_id: String,
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    target_alarms: Vec<NodeId>,
    adjacency: HashMap<(NodeId, EdgeKind, Direction), Vec<NodeId>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.scenario_id == other.scenario_id
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.target_alarms == other.target_alarms
    }
}

impl Eq for KnowledgeGraph {}

impl KnowledgeGraph {
    /// Builds a graph from parts. Later nodes with a duplicate id replace
    /// earlier ones; edges are stored in canonical order.
    pub fn new(
        scenario_id: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = Edge>,
        target_alarms: Vec<NodeId>,
    ) -> Self {
        let nodes: BTreeMap<NodeId, Node> =
            nodes.into_iter().map(|n| (n.id().clone(), n)).collect();
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort();

        let mut adjacency: HashMap<(NodeId, EdgeKind, Direction), Vec<NodeId>> = HashMap::new();
        for e in &edges {
            adjacency
                .entry((e.src.clone(), e.kind, Direction::Outgoing))
                .or_default()
                .push(e.dst.clone());
            adjacency
                .entry((e.dst.clone(), e.kind, Direction::Incoming))
                .or_default()
                .push(e.src.clone());
        }
        for list in adjacency.values_mut() {
            list.sort();
        }

        KnowledgeGraph {
            scenario_id: scenario_id.into(),
            nodes,
            edges,
            target_alarms,
            adjacency,
        }
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn target_alarms(&self) -> &[NodeId] {
        &self.target_alarms
    }

    pub fn resources(&self) -> impl Iterator<Item = &ResourceNode> {
        self.nodes.values().filter_map(Node::as_resource)
    }

    pub fn alarms(&self) -> impl Iterator<Item = &AlarmNode> {
        self.nodes.values().filter_map(Node::as_alarm)
    }

    pub fn causes(&self) -> impl Iterator<Item = &CauseNode> {
        self.nodes.values().filter_map(Node::as_cause)
    }

    pub fn resource_by_ldn(&self, ldn: &str) -> Option<&ResourceNode> {
        self.resources().find(|r| r.ldn == ldn)
    }

    /// Neighbors of `node` along edges of `kind`, sorted by id.
    pub fn neighbors(
        &self,
        node: &NodeId,
        kind: EdgeKind,
        direction: Direction,
    ) -> Result<&[NodeId], UnknownNode> {
        if !self.nodes.contains_key(node) {
            return Err(UnknownNode(node.clone()));
        }
        Ok(self
            .adjacency
            .get(&(node.clone(), kind, direction))
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    /// The resource that generated `alarm`, when exactly one exists.
    pub fn generating_resource(&self, alarm: &NodeId) -> Option<&ResourceNode> {
        match self.neighbors(alarm, EdgeKind::Generate, Direction::Incoming) {
            Ok([only]) => self.node(only).and_then(Node::as_resource),
            _ => None,
        }
    }
}

/// One (cause, equipment, solution) answer. `equipment_id` is a resource ldn.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootCause {
    pub cause_description: String,
    pub equipment_id: String,
    pub solution: String,
}

/// Ground truth: every target alarm maps to a nonempty ranked list of causes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Label {
    pub scenario_id: String,
    pub entries: BTreeMap<NodeId, Vec<RootCause>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "grade")]
pub enum Difficulty {
    Simple,
    /// `ambiguity` is the number of candidates forward inference returns (≥ 2).
    Difficult {
        ambiguity: usize,
    },
}

impl Difficulty {
    pub fn is_simple(self) -> bool {
        matches!(self, Difficulty::Simple)
    }

    /// Cardinality of the forward inference set.
    pub fn ambiguity(self) -> usize {
        match self {
            Difficulty::Simple => 1,
            Difficulty::Difficult { ambiguity } => ambiguity,
        }
    }

    pub fn from_ambiguity(m: usize) -> Option<Self> {
        match m {
            0 => None,
            1 => Some(Difficulty::Simple),
            m => Some(Difficulty::Difficult { ambiguity: m }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Difficult { .. } => "difficult",
        }
    }
}

/// One benchmark unit: input graph, ground truth and grade.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub scenario_id: String,
    pub graph: KnowledgeGraph,
    pub label: Label,
    pub difficulty: Difficulty,
}
