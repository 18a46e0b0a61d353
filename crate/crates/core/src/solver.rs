//! Reference solvers, written as programs in a small pipeline language.
//!
//! A program is a header line followed by one step per line; `#` starts a
//! comment. For every target alarm the steps turn the input's cause nodes
//! into a ranked list of root causes:
//!
//! ```text
//! rca-solver 1
//! candidates all          # or `linked`: only causes reachable via causedBy
//! keep alarmed            # equipment raised at least one target alarm
//! keep most-specific      # smallest dependOn subtree (or least-specific)
//! sort ldn                # by equipment ldn, then cause id
//! limit 1
//! ```
//!
//! A `keep` step never empties a nonempty list: if no candidate passes, the
//! list is left as it was.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use crate::kg::{
    parse_input, serialize_causes, CauseNode, DocumentError, EdgeKind, KnowledgeGraph, Node,
    NodeId, RootCause,
};

pub const HEADER: &str = "rca-solver 1";

/// Reference card for the language, shown to the repair agent.
pub const LANGUAGE_NOTES: &str = "## Solver language
A program starts with the line `rca-solver 1`, then one step per line; `#` starts a comment.
- `candidates all|linked`: first step, exactly once. `all` takes every cause node (those linked
  from the alarm by causedBy first), `linked` only causes reachable via causedBy.
- `keep alarmed`: causes whose equipment raised a target alarm.
- `keep most-specific` / `keep least-specific`: causes on equipment with the smallest / largest
  dependOn subtree.
- `sort ldn`: order by equipment ldn, then cause id.
- `limit N`: keep the first N (N >= 1).
A `keep` step never empties a nonempty list.";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    All,
    Linked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Alarmed,
    MostSpecific,
    LeastSpecific,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Candidates(Scope),
    Keep(Filter),
    SortLdn,
    Limit(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ProgramError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("input: {0}")]
    Input(#[from] DocumentError),
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

impl Program {
    pub fn parse(text: &str) -> Result<Program, ProgramError> {
        let err = |line: usize, message: String| ProgramError { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, strip_comment(l)))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, l)) if l == HEADER => {}
            Some((n, l)) => return Err(err(n, format!("expected `{HEADER}`, found `{l}`"))),
            None => return Err(err(1, format!("empty program; expected `{HEADER}`"))),
        }
        let mut steps = Vec::new();
        let mut last_line = 1;
        for (n, l) in lines {
            last_line = n;
            let words: Vec<&str> = l.split_whitespace().collect();
            let step = match words.as_slice() {
                ["candidates", "all"] => Step::Candidates(Scope::All),
                ["candidates", "linked"] => Step::Candidates(Scope::Linked),
                ["keep", "alarmed"] => Step::Keep(Filter::Alarmed),
                ["keep", "most-specific"] => Step::Keep(Filter::MostSpecific),
                ["keep", "least-specific"] => Step::Keep(Filter::LeastSpecific),
                ["sort", "ldn"] => Step::SortLdn,
                ["limit", k] => match k.parse::<usize>() {
                    Ok(k) if k >= 1 => Step::Limit(k),
                    _ => {
                        return Err(err(
                            n,
                            format!("limit needs a positive integer, found `{k}`"),
                        ))
                    }
                },
                _ => return Err(err(n, format!("unknown step `{l}`"))),
            };
            let first = steps.is_empty();
            match (first, step) {
                (true, Step::Candidates(_))
                | (false, Step::Keep(_) | Step::SortLdn | Step::Limit(_)) => {}
                (true, _) => return Err(err(n, "the first step must be `candidates`".into())),
                (false, _) => return Err(err(n, "`candidates` may appear only once".into())),
            }
            steps.push(step);
        }
        if steps.is_empty() {
            return Err(err(last_line, "program has no steps".into()));
        }
        Ok(Program { steps })
    }

    /// Ranked root causes for every target alarm of `graph`.
    pub fn run(&self, graph: &KnowledgeGraph) -> BTreeMap<NodeId, Vec<RootCause>> {
        let ctx = Context::new(graph);
        let mut out = BTreeMap::new();
        for alarm in graph.target_alarms() {
            let mut list: Vec<&CauseNode> = Vec::new();
            for step in &self.steps {
                match *step {
                    Step::Candidates(scope) => list = ctx.candidates(alarm, scope),
                    Step::Keep(filter) => {
                        let kept = ctx.keep(&list, filter);
                        if !kept.is_empty() {
                            list = kept;
                        }
                    }
                    Step::SortLdn => {
                        list.sort_by(|a, b| (&a.equipment_id, &a.id).cmp(&(&b.equipment_id, &b.id)))
                    }
                    Step::Limit(k) => list.truncate(k),
                }
            }
            let causes = list
                .into_iter()
                .map(|c| RootCause {
                    cause_description: c.cause_description.clone(),
                    equipment_id: c.equipment_id.clone(),
                    solution: c.solution.clone(),
                })
                .collect();
            out.insert(alarm.clone(), causes);
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER}")?;
        for step in &self.steps {
            match step {
                Step::Candidates(Scope::All) => writeln!(f, "candidates all")?,
                Step::Candidates(Scope::Linked) => writeln!(f, "candidates linked")?,
                Step::Keep(Filter::Alarmed) => writeln!(f, "keep alarmed")?,
                Step::Keep(Filter::MostSpecific) => writeln!(f, "keep most-specific")?,
                Step::Keep(Filter::LeastSpecific) => writeln!(f, "keep least-specific")?,
                Step::SortLdn => writeln!(f, "sort ldn")?,
                Step::Limit(k) => writeln!(f, "limit {k}")?,
            }
        }
        Ok(())
    }
}

struct Context<'g> {
    graph: &'g KnowledgeGraph,
    causes: Vec<&'g CauseNode>,
    /// Ldns of resources that generated a target alarm.
    alarmed: HashSet<&'g str>,
    /// Size of each resource's dependOn subtree (itself plus descendants).
    subtree: HashMap<&'g str, usize>,
}

impl<'g> Context<'g> {
    fn new(graph: &'g KnowledgeGraph) -> Self {
        let alarmed = graph
            .target_alarms()
            .iter()
            .filter_map(|a| graph.generating_resource(a))
            .map(|r| r.ldn.as_str())
            .collect();

        let mut children: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        for e in graph
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::DependOn)
        {
            children.entry(&e.dst).or_default().push(&e.src);
        }
        let mut subtree = HashMap::new();
        for r in graph.resources() {
            let mut seen = HashSet::from([&r.id]);
            let mut queue = VecDeque::from([&r.id]);
            while let Some(id) = queue.pop_front() {
                for &c in children.get(id).into_iter().flatten() {
                    if seen.insert(c) {
                        queue.push_back(c);
                    }
                }
            }
            subtree.insert(r.ldn.as_str(), seen.len());
        }
        Context {
            graph,
            causes: graph.causes().collect(),
            alarmed,
            subtree,
        }
    }

    /// Causes reachable from `alarm` over causedBy edges (through other
    /// alarms), in id order.
    fn linked(&self, alarm: &NodeId) -> Vec<&'g CauseNode> {
        let mut seen = HashSet::from([alarm.clone()]);
        let mut queue = VecDeque::from([alarm.clone()]);
        let mut out = Vec::new();
        while let Some(id) = queue.pop_front() {
            let next = self
                .graph
                .neighbors(&id, EdgeKind::CausedBy, crate::kg::Direction::Outgoing)
                .unwrap_or(&[]);
            for n in next {
                if !seen.insert(n.clone()) {
                    continue;
                }
                match self.graph.node(n) {
                    Some(Node::Cause(c)) => out.push(c),
                    Some(Node::Alarm(_)) => queue.push_back(n.clone()),
                    _ => {}
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    fn candidates(&self, alarm: &NodeId, scope: Scope) -> Vec<&'g CauseNode> {
        let mut list = self.linked(alarm);
        if scope == Scope::All {
            let linked: HashSet<&NodeId> = list.iter().map(|c| &c.id).collect();
            let rest: Vec<&CauseNode> = self
                .causes
                .iter()
                .copied()
                .filter(|c| !linked.contains(&c.id))
                .collect();
            list.extend(rest);
        }
        list
    }

    fn specificity(&self, c: &CauseNode) -> usize {
        self.subtree
            .get(c.equipment_id.as_str())
            .copied()
            .unwrap_or(usize::MAX)
    }

    fn keep(&self, list: &[&'g CauseNode], filter: Filter) -> Vec<&'g CauseNode> {
        match filter {
            Filter::Alarmed => list
                .iter()
                .copied()
                .filter(|c| self.alarmed.contains(c.equipment_id.as_str()))
                .collect(),
            Filter::MostSpecific | Filter::LeastSpecific => {
                let scores = list.iter().map(|c| self.specificity(c));
                let best = if filter == Filter::MostSpecific {
                    scores.min()
                } else {
                    scores.max()
                };
                list.iter()
                    .copied()
                    .filter(|c| Some(self.specificity(c)) == best)
                    .collect()
            }
        }
    }
}

/// Runs `program` on an input document and returns the prediction document.
pub fn solve(program: &Program, input: &str) -> Result<String, SolveError> {
    let graph = parse_input(input)?;
    let entries = program.run(&graph);
    Ok(serialize_causes(graph.scenario_id(), &entries))
}

/// The staged reference solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// Every candidate cause for every alarm.
    V0,
    /// Only the most specific candidates.
    V1,
    /// Alarmed, most specific, one answer per alarm chosen by ldn.
    V2,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::V0, Stage::V1, Stage::V2];

    pub fn name(self) -> &'static str {
        match self {
            Stage::V0 => "v0",
            Stage::V1 => "v1",
            Stage::V2 => "v2",
        }
    }

    pub fn parse(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn source(self) -> &'static str {
        match self {
            Stage::V0 => include_str!("../../../data/solvers/v0.src"),
            Stage::V1 => include_str!("../../../data/solvers/v1.src"),
            Stage::V2 => include_str!("../../../data/solvers/v2.src"),
        }
    }

    pub fn program(self) -> Program {
        Program::parse(self.source()).expect("shipped solver programs parse")
    }
}
