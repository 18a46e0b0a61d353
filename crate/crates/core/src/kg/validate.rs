use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::types::{EdgeKind, KnowledgeGraph, Node, NodeId};

/// A single broken invariant. `invariant` is a stable kebab-case name and
/// `key` names the node, edge or cycle at fault.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub key: String,
    pub message: String,
}

impl Violation {
    fn new(invariant: &'static str, key: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            invariant,
            key: key.into(),
            message: message.into(),
        }
    }
}

pub const ALARM_GENERATE_COUNT: &str = "alarm-generate-count";
pub const CAUSE_DESCRIPTION_NONEMPTY: &str = "cause-description-nonempty";
pub const CAUSE_EQUIPMENT_EXISTS: &str = "cause-equipment-exists";
pub const DEPEND_ON_ACYCLIC: &str = "depend-on-acyclic";
pub const EDGE_ENDPOINT_EXISTS: &str = "edge-endpoint-exists";
pub const EDGE_ENDPOINT_KIND: &str = "edge-endpoint-kind";
pub const LDN_NONEMPTY: &str = "ldn-nonempty";
pub const LDN_UNIQUE: &str = "ldn-unique";
pub const NODE_ID_NONEMPTY: &str = "node-id-nonempty";
pub const TARGET_ALARM_DUPLICATE: &str = "target-alarm-duplicate";
pub const TARGET_ALARM_KIND: &str = "target-alarm-kind";

fn edge_key(kind: EdgeKind, src: &NodeId, dst: &NodeId) -> String {
    format!("{}:{}->{}", kind.name(), src, dst)
}

/// Returns every invariant violation of `graph`, sorted by (invariant, key).
/// An empty list means the graph is valid.
pub fn validate_graph(graph: &KnowledgeGraph) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut ldns: BTreeMap<&str, Vec<&NodeId>> = BTreeMap::new();
    for node in graph.nodes() {
        if node.id().as_str().is_empty() {
            out.push(Violation::new(NODE_ID_NONEMPTY, "", "node id is empty"));
        }
        match node {
            Node::Resource(r) => {
                if r.ldn.is_empty() {
                    out.push(Violation::new(
                        LDN_NONEMPTY,
                        r.id.as_str(),
                        "resource ldn is empty",
                    ));
                } else {
                    ldns.entry(r.ldn.as_str()).or_default().push(&r.id);
                }
            }
            Node::Cause(c) => {
                if c.cause_description.trim().is_empty() {
                    out.push(Violation::new(
                        CAUSE_DESCRIPTION_NONEMPTY,
                        c.id.as_str(),
                        "cause description is empty",
                    ));
                }
            }
            Node::Alarm(_) => {}
        }
    }
    for (ldn, ids) in &ldns {
        if ids.len() > 1 {
            let names: Vec<&str> = ids.iter().map(|id| id.as_str()).collect();
            out.push(Violation::new(
                LDN_UNIQUE,
                *ldn,
                format!("ldn shared by resources {}", names.join(", ")),
            ));
        }
    }
    for cause in graph.causes() {
        if !ldns.contains_key(cause.equipment_id.as_str()) {
            out.push(Violation::new(
                CAUSE_EQUIPMENT_EXISTS,
                cause.id.as_str(),
                format!(
                    "equipment `{}` is not the ldn of any resource",
                    cause.equipment_id
                ),
            ));
        }
    }

    let mut generate_in: HashMap<&NodeId, usize> = HashMap::new();
    for e in graph.edges() {
        let key = edge_key(e.kind, &e.src, &e.dst);
        let (src, dst) = match (graph.node(&e.src), graph.node(&e.dst)) {
            (Some(s), Some(d)) => (s, d),
            (s, d) => {
                let missing: Vec<&str> = [(s, &e.src), (d, &e.dst)]
                    .into_iter()
                    .filter(|(n, _)| n.is_none())
                    .map(|(_, id)| id.as_str())
                    .collect();
                out.push(Violation::new(
                    EDGE_ENDPOINT_EXISTS,
                    key,
                    format!("edge references missing node(s) {}", missing.join(", ")),
                ));
                continue;
            }
        };
        let ok = match e.kind {
            EdgeKind::DependOn => {
                matches!(src, Node::Resource(_)) && matches!(dst, Node::Resource(_))
            }
            EdgeKind::Generate => matches!(src, Node::Resource(_)) && matches!(dst, Node::Alarm(_)),
            EdgeKind::CausedBy => {
                matches!(src, Node::Alarm(_)) && matches!(dst, Node::Alarm(_) | Node::Cause(_))
            }
        };
        if !ok {
            out.push(Violation::new(
                EDGE_ENDPOINT_KIND,
                key,
                format!(
                    "{} edge cannot connect {} to {}",
                    e.kind.name(),
                    src.type_name(),
                    dst.type_name()
                ),
            ));
        } else if e.kind == EdgeKind::Generate {
            *generate_in.entry(&e.dst).or_default() += 1;
        }
    }
    for alarm in graph.alarms() {
        let n = generate_in.get(&alarm.id).copied().unwrap_or(0);
        if n != 1 {
            out.push(Violation::new(
                ALARM_GENERATE_COUNT,
                alarm.id.as_str(),
                format!("alarm has {n} incoming generate edges, expected exactly 1"),
            ));
        }
    }

    for cycle in depend_on_cycles(graph) {
        let names: Vec<&str> = cycle.iter().map(|id| id.as_str()).collect();
        out.push(Violation::new(
            DEPEND_ON_ACYCLIC,
            names.join(","),
            format!("dependOn cycle through {}", names.join(" -> ")),
        ));
    }

    let mut seen = BTreeSet::new();
    for id in graph.target_alarms() {
        if !seen.insert(id) {
            out.push(Violation::new(
                TARGET_ALARM_DUPLICATE,
                id.as_str(),
                "target alarm listed twice",
            ));
        }
        match graph.node(id) {
            Some(Node::Alarm(_)) => {}
            Some(other) => out.push(Violation::new(
                TARGET_ALARM_KIND,
                id.as_str(),
                format!("target names a {} node, not an alarm", other.type_name()),
            )),
            None => out.push(Violation::new(
                TARGET_ALARM_KIND,
                id.as_str(),
                "target names a missing node",
            )),
        }
    }

    out.sort();
    out.dedup();
    out
}

/// Strongly connected components of the dependOn relation that contain a
/// cycle, each sorted by id. Tarjan's algorithm, iterative.
fn depend_on_cycles(graph: &KnowledgeGraph) -> Vec<Vec<NodeId>> {
    let mut succ: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    let mut self_loops = BTreeSet::new();
    for e in graph
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::DependOn)
    {
        if graph.node(&e.src).is_none() || graph.node(&e.dst).is_none() {
            continue;
        }
        if e.src == e.dst {
            self_loops.insert(&e.src);
        }
        succ.entry(&e.src).or_default().push(&e.dst);
        succ.entry(&e.dst).or_default();
    }
    let verts: Vec<&NodeId> = succ.keys().copied().collect();
    let pos: HashMap<&NodeId, usize> = verts.iter().enumerate().map(|(i, v)| (*v, i)).collect();

    let n = verts.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next = 0usize;
    let mut comps = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (vertex, next successor position)
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(top) = work.last_mut() {
            let v = top.0;
            if top.1 == 0 && index[v] == usize::MAX {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let out = &succ[verts[v]];
            if top.1 < out.len() {
                let w = pos[out[top.1]];
                top.1 += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(verts[w].clone());
                    if w == v {
                        break;
                    }
                }
                if comp.len() > 1 || self_loops.contains(verts[v]) {
                    comp.sort();
                    comps.push(comp);
                }
            }
        }
    }
    comps.sort();
    comps
}
