//! Knowledge-graph data model for one fault scenario: typed resource, alarm
//! and candidate-cause nodes joined by `dependOn`, `generate` and `causedBy`
//! edges, plus the ground-truth label.

mod document;
mod types;
mod validate;

pub use document::{
    format_timestamp, parse_input, parse_label, parse_timestamp, serialize_input, serialize_label,
    DocumentError, SCHEMA_VERSION,
};
pub(crate) use document::{parse_causes, serialize_causes, to_text};
pub use types::{
    AlarmNode, CauseNode, Difficulty, Direction, Edge, EdgeKind, KnowledgeGraph, Label, Node,
    NodeId, ResourceKind, ResourceNode, RootCause, Scenario, Severity, UnknownNode,
};
pub use validate::{validate_graph, Violation};
pub mod invariants {
    pub use super::validate::{
        ALARM_GENERATE_COUNT, CAUSE_DESCRIPTION_NONEMPTY, CAUSE_EQUIPMENT_EXISTS,
        DEPEND_ON_ACYCLIC, EDGE_ENDPOINT_EXISTS, EDGE_ENDPOINT_KIND, LDN_NONEMPTY, LDN_UNIQUE,
        NODE_ID_NONEMPTY, TARGET_ALARM_DUPLICATE, TARGET_ALARM_KIND,
    };
}

/// Free-function form of [`KnowledgeGraph::neighbors`].
pub fn neighbors<'g>(
    graph: &'g KnowledgeGraph,
    node: &NodeId,
    kind: EdgeKind,
    direction: Direction,
) -> Result<&'g [NodeId], UnknownNode> {
    graph.neighbors(node, kind, direction)
}

/// Checks that `label` fits `graph`: keys are exactly the target alarms and
/// every equipment id is a resource ldn.
pub fn check_label(graph: &KnowledgeGraph, label: &Label) -> Result<(), DocumentError> {
    let invariant = |path: String, message: String| DocumentError::Invariant { path, message };
    for id in label.entries.keys() {
        if !graph.target_alarms().contains(id) {
            return Err(invariant(
                format!("alarms.{id}"),
                format!("label entry `{id}` is not a target alarm"),
            ));
        }
    }
    for id in graph.target_alarms() {
        if !label.entries.contains_key(id) {
            return Err(invariant(
                format!("alarms.{id}"),
                format!("target alarm `{id}` has no label entry"),
            ));
        }
    }
    for (id, causes) in &label.entries {
        for (i, c) in causes.iter().enumerate() {
            if graph.resource_by_ldn(&c.equipment_id).is_none() {
                return Err(invariant(
                    format!("alarms.{id}.root_causes[{i}].equipment_id"),
                    format!("`{}` is not the ldn of any resource", c.equipment_id),
                ));
            }
        }
    }
    Ok(())
}

impl Scenario {
    /// Joins a graph and its label after checking they agree.
    pub fn assemble(
        graph: KnowledgeGraph,
        label: Label,
        difficulty: Difficulty,
    ) -> Result<Scenario, DocumentError> {
        check_label(&graph, &label)?;
        Ok(Scenario {
            scenario_id: graph.scenario_id().to_owned(),
            graph,
            label,
            difficulty,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::testing::minimal_graph;
    use super::*;

    fn rru_board_graph() -> KnowledgeGraph {
        KnowledgeGraph::new(
            "s",
            [
                Node::Resource(ResourceNode {
                    id: "board".into(),
                    kind: ResourceKind::Board,
                    ldn: "BS1/BBU1/Board1".into(),
                    serial: Some("SN-1".into()),
                }),
                Node::Resource(ResourceNode {
                    id: "rru".into(),
                    kind: ResourceKind::Rru,
                    ldn: "BS1/BBU1/Board1/RRU1".into(),
                    serial: None,
                }),
                Node::Cause(CauseNode {
                    id: "c".into(),
                    cause_description: "Fiber cut".into(),
                    equipment_id: "BS1/BBU1/Board1/RRU1".into(),
                    solution: "Splice".into(),
                }),
            ],
            [Edge::new("rru", "board", EdgeKind::DependOn)],
            vec![],
        )
    }

    #[test]
    fn depend_on_neighbors() {
        let g = rru_board_graph();
        let out = g
            .neighbors(&"rru".into(), EdgeKind::DependOn, Direction::Outgoing)
            .unwrap();
        assert_eq!(out, &[NodeId::from("board")]);
    }

    #[test]
    fn generate_incoming_is_the_resource() {
        let g = minimal_graph();
        let inc = neighbors(&g, &"a1".into(), EdgeKind::Generate, Direction::Incoming).unwrap();
        assert_eq!(inc, &[NodeId::from("bs1")]);
        assert_eq!(g.generating_resource(&"a1".into()).unwrap().ldn, "BS1");
    }

    #[test]
    fn isolated_cause_has_no_neighbors() {
        let g = rru_board_graph();
        for kind in EdgeKind::ALL {
            for dir in [Direction::Incoming, Direction::Outgoing] {
                assert!(g.neighbors(&"c".into(), kind, dir).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn unknown_node_errors() {
        let g = minimal_graph();
        assert_eq!(
            g.neighbors(&"nope".into(), EdgeKind::Generate, Direction::Incoming),
            Err(UnknownNode("nope".into()))
        );
    }

    #[test]
    fn label_for_non_target_rejected_at_assembly() {
        let g = minimal_graph();
        let rc = RootCause {
            cause_description: "x".into(),
            equipment_id: "BS1".into(),
            solution: "y".into(),
        };
        let label = Label {
            scenario_id: "s1".into(),
            entries: [
                (NodeId::from("a1"), vec![rc.clone()]),
                (NodeId::from("a9"), vec![rc]),
            ]
            .into_iter()
            .collect(),
        };
        let err = Scenario::assemble(g, label, Difficulty::Simple).unwrap_err();
        assert!(matches!(err, DocumentError::Invariant { .. }));
    }
}
