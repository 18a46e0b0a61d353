use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{Edge, EdgeKind, KnowledgeGraph, Node, NodeId, ResourceKind, ResourceNode};

/// Inclusive count range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

impl CountRange {
    pub const fn fixed(n: u32) -> Self {
        CountRange { min: n, max: n }
    }

    pub const fn new(min: u32, max: u32) -> Self {
        CountRange { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

/// Shape of a generated base-station hierarchy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub base_stations: u32,
    pub bbus_per_station: CountRange,
    pub boards_per_bbu: CountRange,
    pub rrus_per_board: CountRange,
    pub ri_ports_per_rru: CountRange,
    #[serde(default)]
    pub seed: u64,
}

impl TopologySpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.base_stations < 1 {
            return Err("base_stations must be at least 1".into());
        }
        let ranges = [
            ("bbus_per_station", self.bbus_per_station, 1),
            ("boards_per_bbu", self.boards_per_bbu, 1),
            ("rrus_per_board", self.rrus_per_board, 1),
            ("ri_ports_per_rru", self.ri_ports_per_rru, 0),
        ];
        for (name, r, floor) in ranges {
            if r.min < floor {
                return Err(format!("{name}.min must be at least {floor}"));
            }
            if r.min > r.max {
                return Err(format!("{name}: min {} exceeds max {}", r.min, r.max));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TopologySpec {
            seed,
            ..self.clone()
        }
    }
}

/// Builds the resource tree BaseStation ← BBU ← Board ← RRU ← RiPort, with
/// each child holding a `dependOn` edge to its parent. Counts per level are
/// drawn uniformly from the configured ranges; node ids follow depth-first order.
pub fn generate_topology(spec: &TopologySpec) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    fn add(nodes: &mut Vec<Node>, kind: ResourceKind, ldn: String, serial: u64) -> NodeId {
        let id = NodeId::new(format!("R{:04}", nodes.len() + 1));
        nodes.push(Node::Resource(ResourceNode {
            id: id.clone(),
            kind,
            ldn,
            serial: Some(format!("SN{serial:08X}")),
        }));
        id
    }

    fn grow(
        spec: &TopologySpec,
        rng: &mut ChaCha8Rng,
        nodes: &mut Vec<Node>,
        edges: &mut Vec<Edge>,
        parent: &NodeId,
        parent_ldn: &str,
        kind: ResourceKind,
    ) {
        let range = match kind {
            ResourceKind::BaseStation => return,
            ResourceKind::Bbu => spec.bbus_per_station,
            ResourceKind::Board => spec.boards_per_bbu,
            ResourceKind::Rru => spec.rrus_per_board,
            ResourceKind::RiPort => spec.ri_ports_per_rru,
        };
        let count = range.sample(rng);
        for i in 1..=count {
            let ldn = format!("{parent_ldn}/{}{i}", kind.ldn_segment());
            let serial = rng.random::<u32>() as u64;
            let id = add(nodes, kind, ldn.clone(), serial);
            edges.push(Edge::new(id.clone(), parent.clone(), EdgeKind::DependOn));
            if let Some(child) = kind.child() {
                grow(spec, rng, nodes, edges, &id, &ldn, child);
            }
        }
    }

    for s in 1..=spec.base_stations {
        let ldn = format!("{}{s}", ResourceKind::BaseStation.ldn_segment());
        let serial = rng.random::<u32>() as u64;
        let id = add(&mut nodes, ResourceKind::BaseStation, ldn.clone(), serial);
        grow(
            spec,
            &mut rng,
            &mut nodes,
            &mut edges,
            &id,
            &ldn,
            ResourceKind::Bbu,
        );
    }
    KnowledgeGraph::new("", nodes, edges, Vec::new())
}

/// Read-only index over the dependOn hierarchy of a graph.
pub struct Hierarchy<'g> {
    graph: &'g KnowledgeGraph,
    parents: HashMap<&'g NodeId, Vec<&'g NodeId>>,
    children: HashMap<&'g NodeId, Vec<&'g NodeId>>,
    by_ldn: HashMap<&'g str, &'g ResourceNode>,
}

impl<'g> Hierarchy<'g> {
    pub fn new(graph: &'g KnowledgeGraph) -> Self {
        let mut parents: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        let mut children: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        for e in graph
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::DependOn)
        {
            parents.entry(&e.src).or_default().push(&e.dst);
            children.entry(&e.dst).or_default().push(&e.src);
        }
        let by_ldn = graph.resources().map(|r| (r.ldn.as_str(), r)).collect();
        Hierarchy {
            graph,
            parents,
            children,
            by_ldn,
        }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn resource(&self, id: &NodeId) -> Option<&'g ResourceNode> {
        self.graph.node(id).and_then(Node::as_resource)
    }

    pub fn by_ldn(&self, ldn: &str) -> Option<&'g ResourceNode> {
        self.by_ldn.get(ldn).copied()
    }

    pub fn resources_of_kind(&self, kind: ResourceKind) -> Vec<&'g ResourceNode> {
        self.graph.resources().filter(|r| r.kind == kind).collect()
    }

    fn within(
        &self,
        start: &NodeId,
        kind: ResourceKind,
        max_hops: usize,
        step: &HashMap<&'g NodeId, Vec<&'g NodeId>>,
    ) -> Vec<&'g ResourceNode> {
        let mut seen: HashMap<&NodeId, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        let mut out = Vec::new();
        if let Some(start) = self.graph.node(start).map(Node::id) {
            seen.insert(start, 0);
            queue.push_back((start, 0usize));
        }
        while let Some((id, depth)) = queue.pop_front() {
            if depth == max_hops {
                continue;
            }
            for &next in step.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.contains_key(next) {
                    continue;
                }
                seen.insert(next, depth + 1);
                if let Some(r) = self.resource(next) {
                    if r.kind == kind {
                        out.push(r);
                    }
                }
                queue.push_back((next, depth + 1));
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Resources of `kind` strictly below `node`, at most `max_hops` away.
    pub fn descendants_within(
        &self,
        node: &NodeId,
        kind: ResourceKind,
        max_hops: usize,
    ) -> Vec<&'g ResourceNode> {
        self.within(node, kind, max_hops, &self.children)
    }

    /// Resources of `kind` strictly above `node`, at most `max_hops` away.
    pub fn ancestors_within(
        &self,
        node: &NodeId,
        kind: ResourceKind,
        max_hops: usize,
    ) -> Vec<&'g ResourceNode> {
        self.within(node, kind, max_hops, &self.parents)
    }

    /// Hop distance from `from` to every resource, ignoring edge direction.
    pub fn distances(&self, from: &NodeId) -> HashMap<&'g NodeId, usize> {
        let mut dist = HashMap::new();
        let Some(start) = self.graph.node(from).map(Node::id) else {
            return dist;
        };
        dist.insert(start, 0);
        let mut queue = VecDeque::from([start]);
        while let Some(id) = queue.pop_front() {
            let d = dist[id];
            let ups = self.parents.get(id).into_iter().flatten();
            let downs = self.children.get(id).into_iter().flatten();
            for &next in ups.chain(downs) {
                if !dist.contains_key(next) {
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }
}
