//! Independent oracles and random-instance builders shared by the
//! integration and acceptance tests. The oracles never call the propagation
//! or scoring code under test; generated scenarios come from the forge.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rca_forge_core::exec::Exec;
use rca_forge_core::forge::{
    assemble_dataset, generate_topology, AlarmTemplate, CausalRule, CountRange, GeneratorConfig,
    RuleCatalog, Selector, TopologySpec,
};
use rca_forge_core::kg::{
    EdgeKind, KnowledgeGraph, Label, NodeId, ResourceKind, RootCause, Scenario, Severity,
};
use rca_forge_core::reference;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A topology of at most 31 resources under one base station.
pub fn small_topology(seed: u64) -> KnowledgeGraph {
    let spec = TopologySpec {
        base_stations: 1,
        bbus_per_station: CountRange::new(1, 2),
        boards_per_bbu: CountRange::new(1, 2),
        rrus_per_board: CountRange::new(1, 2),
        ri_ports_per_rru: CountRange::new(0, 2),
        seed,
    };
    generate_topology(&spec)
}

fn random_selector(r: &mut ChaCha8Rng) -> Selector {
    let kind = *ResourceKind::ALL.choose(r).unwrap();
    let max_hops = r.random_range(1..=4);
    match r.random_range(0..3) {
        0 => Selector::Anchor,
        1 => Selector::Descendants { kind, max_hops },
        _ => Selector::Ancestors { kind, max_hops },
    }
}

/// A valid catalog of 1 to 10 rules over a small code pool, so that
/// signatures overlap and scenarios are often ambiguous.
pub fn random_catalog(seed: u64) -> RuleCatalog {
    let mut r = rng(seed);
    let n = r.random_range(1..=10);
    let rules = (0..n)
        .map(|i| {
            let anchor_kind = *ResourceKind::ALL.choose(&mut r).unwrap();
            let mut templates = vec![AlarmTemplate {
                code: r.random_range(1..=6),
                title: "t".into(),
                severity: Severity::Major,
                selector: Selector::Anchor,
            }];
            for _ in 0..r.random_range(0..3) {
                templates.push(AlarmTemplate {
                    code: r.random_range(1..=6),
                    title: "t".into(),
                    severity: Severity::Minor,
                    selector: random_selector(&mut r),
                });
            }
            templates.shuffle(&mut r);
            CausalRule {
                rule_id: format!("X{i:02}"),
                cause_description: format!("cause {i}"),
                anchor_kind,
                solution: "s".into(),
                alarm_templates: templates,
            }
        })
        .collect();
    RuleCatalog::new(rules).expect("generated catalog is valid")
}

/// Parent of a resource, by following its dependOn edge.
fn parent(graph: &KnowledgeGraph, id: &NodeId) -> Option<NodeId> {
    graph
        .edges()
        .iter()
        .find(|e| e.kind == EdgeKind::DependOn && &e.src == id)
        .map(|e| e.dst.clone())
}

/// Ancestors of `id` with their hop distance, nearest first.
fn ancestors(graph: &KnowledgeGraph, id: &NodeId) -> Vec<(NodeId, usize)> {
    let mut out = Vec::new();
    let mut cur = id.clone();
    let mut d = 0;
    while let Some(p) = parent(graph, &cur) {
        d += 1;
        out.push((p.clone(), d));
        cur = p;
    }
    out
}

fn kind_ldn(graph: &KnowledgeGraph, id: &NodeId) -> (ResourceKind, String) {
    let r = graph
        .node(id)
        .and_then(|n| n.as_resource())
        .expect("resource");
    (r.kind, r.ldn.clone())
}

/// Brute-force backward signature: (code, ldn) pairs.
pub fn oracle_signature(
    graph: &KnowledgeGraph,
    rule: &CausalRule,
    anchor: &NodeId,
) -> BTreeSet<(u32, String)> {
    let mut sig = BTreeSet::new();
    for t in &rule.alarm_templates {
        match t.selector {
            Selector::Anchor => {
                sig.insert((t.code, kind_ldn(graph, anchor).1));
            }
            Selector::Ancestors { kind, max_hops } => {
                for (a, d) in ancestors(graph, anchor) {
                    let (k, ldn) = kind_ldn(graph, &a);
                    if k == kind && d <= max_hops {
                        sig.insert((t.code, ldn));
                    }
                }
            }
            Selector::Descendants { kind, max_hops } => {
                for r in graph.resources() {
                    if r.kind != kind {
                        continue;
                    }
                    if ancestors(graph, &r.id)
                        .iter()
                        .any(|(a, d)| a == anchor && *d <= max_hops)
                    {
                        sig.insert((t.code, r.ldn.clone()));
                    }
                }
            }
        }
    }
    sig
}

/// Every (rule id, anchor) whose signature contains `observed`, found by
/// trying all pairs.
pub fn oracle_candidates(
    graph: &KnowledgeGraph,
    observed: &BTreeSet<(u32, String)>,
    catalog: &RuleCatalog,
) -> BTreeSet<(String, NodeId)> {
    let mut out = BTreeSet::new();
    for rule in &catalog.rules {
        for r in graph.resources().filter(|r| r.kind == rule.anchor_kind) {
            if observed.is_subset(&oracle_signature(graph, rule, &r.id)) {
                out.insert((rule.rule_id.clone(), r.id.clone()));
            }
        }
    }
    out
}

/// Textbook precision/recall/F1 from lists, deduplicating by linear scan.
pub fn naive_score(
    pred: &[(String, String, String)],
    truth: &[(String, String, String)],
) -> (f64, f64, f64) {
    let norm = |t: &(String, String, String)| {
        (
            t.0.clone(),
            t.1.split_whitespace().collect::<Vec<_>>().join(" "),
            t.2.clone(),
        )
    };
    let mut p: Vec<(String, String, String)> = Vec::new();
    for t in pred.iter().map(norm) {
        if !p.contains(&t) {
            p.push(t);
        }
    }
    let mut t: Vec<(String, String, String)> = Vec::new();
    for x in truth.iter().map(norm) {
        if !t.contains(&x) {
            t.push(x);
        }
    }
    if p.is_empty() && t.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let hits = p.iter().filter(|x| t.contains(x)).count() as f64;
    let precision = if p.is_empty() {
        0.0
    } else {
        hits / p.len() as f64
    };
    let recall = if t.is_empty() {
        0.0
    } else {
        hits / t.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Random alarm → causes map over small pools, with occasional whitespace
/// variants of the same description.
pub fn random_entries(
    r: &mut ChaCha8Rng,
    allow_empty_lists: bool,
) -> BTreeMap<NodeId, Vec<RootCause>> {
    let descs = [
        "power down",
        "fiber  broken",
        " board fault",
        "config error",
    ];
    let equips = ["BS1", "BS1/BBU1", "BS1/BBU1/Board1"];
    let mut out = BTreeMap::new();
    for a in 0..r.random_range(0..4) {
        let lo = usize::from(!allow_empty_lists);
        let causes = (0..r.random_range(lo..=4))
            .map(|_| RootCause {
                cause_description: descs.choose(r).unwrap().to_string(),
                equipment_id: equips.choose(r).unwrap().to_string(),
                solution: "s".into(),
            })
            .collect();
        out.insert(NodeId::new(format!("A{a:03}")), causes);
    }
    out
}

pub fn flatten(entries: &BTreeMap<NodeId, Vec<RootCause>>) -> Vec<(String, String, String)> {
    entries
        .iter()
        .flat_map(|(a, cs)| {
            cs.iter().map(move |c| {
                (
                    a.to_string(),
                    c.cause_description.clone(),
                    c.equipment_id.clone(),
                )
            })
        })
        .collect()
}

pub fn label_of(entries: BTreeMap<NodeId, Vec<RootCause>>) -> Label {
    Label {
        scenario_id: "s".into(),
        entries,
    }
}

/// Deterministic proptest settings: fixed seed, no persistence files.
pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x005e_ed0f_f0e5),
        ..Default::default()
    }
}

/// One generated scenario over the reference catalog, optionally with
/// unrelated noise alarms.
pub fn small_scenario(seed: u64, noise: bool) -> Scenario {
    let config = GeneratorConfig {
        num_scenarios: 1,
        zipf_exponent: 0.5,
        seed,
        target_simple_count: None,
        max_rejection_rounds: 8,
        noise_rate: if noise { 0.3 } else { 0.0 },
        topology: TopologySpec {
            base_stations: 1,
            bbus_per_station: CountRange::new(1, 2),
            boards_per_bbu: CountRange::new(1, 3),
            rrus_per_board: CountRange::new(1, 3),
            ri_ports_per_rru: CountRange::new(0, 2),
            seed: 0,
        },
        catalog: None,
    };
    let mut ds = assemble_dataset(&config, &reference::catalog(), Exec::Sequential).unwrap();
    ds.scenarios.remove(0)
}

/// Shuffles the node, edge and alarm arrays of a JSON document and writes
/// it compactly with sorted keys, which differs from the canonical layout.
pub fn permute_document(text: &str, seed: u64) -> String {
    let mut doc: serde_json::Value = serde_json::from_str(text).unwrap();
    let mut r = rng(seed);
    for key in ["nodes", "edges", "alarms"] {
        if let Some(serde_json::Value::Array(items)) = doc.get_mut(key) {
            items.shuffle(&mut r);
        }
    }
    serde_json::to_string(&doc).unwrap()
}

const CODE_LINES: &[&str] = &[
    "rca-solver 1",
    "candidates linked",
    "keep alarmed",
    "keep most-specific",
    "sort ldn",
    "limit 2",
    "  x = f(y)",
    "# comment",
];
const PROSE_LINES: &[&str] = &[
    "Here is the revised solver:",
    "Sure, this should fix the ambiguity",
    "The previous version kept too many candidates.",
    "Thanks for the report",
];

/// A code block with stray trailing spaces, and its cleaned form.
fn code_block(r: &mut ChaCha8Rng, lines: usize) -> (String, String) {
    let mut raw = Vec::new();
    let mut clean = Vec::new();
    for _ in 0..lines {
        let line = *CODE_LINES.choose(r).unwrap();
        clean.push(line.to_string());
        raw.push(format!("{line}{}", " ".repeat(r.random_range(0..3))));
    }
    (raw.join("\n"), clean.join("\n"))
}

fn prose(r: &mut ChaCha8Rng) -> String {
    (*PROSE_LINES.choose(r).unwrap()).to_string()
}

/// The shape of a synthesized model response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponseShape {
    Bare,
    Fenced,
    MultiBlock,
    Empty,
}

/// A synthesized model response and the source a correct sanitizer
/// extracts from it, or None where it must refuse.
pub fn synth_response(seed: u64) -> (ResponseShape, String, Option<String>) {
    let mut r = rng(seed);
    match r.random_range(0..4) {
        0 => {
            let n = r.random_range(1..6);
            let (raw, clean) = code_block(&mut r, n);
            (ResponseShape::Bare, format!("\n{raw}\n\n"), Some(clean))
        }
        1 => {
            let n = r.random_range(1..6);
            let (raw, clean) = code_block(&mut r, n);
            let lang = *["", "text", "rust"].choose(&mut r).unwrap();
            let text = format!(
                "{}\n```{lang}\n{raw}\n```\n{}",
                prose(&mut r),
                prose(&mut r)
            );
            (ResponseShape::Fenced, text, Some(clean))
        }
        2 => {
            let mut text = prose(&mut r);
            let mut best: Option<String> = None;
            for _ in 0..r.random_range(2..5) {
                let n = r.random_range(1..8);
                let (raw, clean) = code_block(&mut r, n);
                text.push_str(&format!("\n```\n{raw}\n```\n{}", prose(&mut r)));
                if best.as_ref().is_none_or(|b| clean.len() > b.len()) {
                    best = Some(clean);
                }
            }
            if r.random_bool(0.5) {
                text.push_str(&format!("\n```\n{}\nkeep alarmed\n```", prose(&mut r)));
            }
            (ResponseShape::MultiBlock, text, best)
        }
        _ => {
            let text = match r.random_range(0..3) {
                0 => String::new(),
                1 => " \n\t\n".to_string(),
                _ => format!("{}\n{}", prose(&mut r), CODE_LINES[1]),
            };
            (ResponseShape::Empty, text, None)
        }
    }
}
