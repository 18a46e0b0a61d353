mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::IndexedRandom;

use rca_forge_core::forge::{backward_propagate, forward_infer, grade, CandidateCause, ForgeError};
use support::{
    oracle_candidates, oracle_signature, proptest_config, random_catalog, rng, small_topology,
};

fn as_pairs(sig: &rca_forge_core::forge::AlarmSignature) -> BTreeSet<(u32, String)> {
    sig.iter().map(|e| (e.code, e.ldn.clone())).collect()
}

proptest! {
    #![proptest_config(proptest_config(200))]

    #[test]
    fn grade_matches_brute_force(seed in any::<u64>()) {
        let catalog = random_catalog(seed);
        let graph = small_topology(seed.rotate_left(17));
        prop_assert!(graph.node_count() <= 50);
        let mut r = rng(seed ^ 0xa5a5);
        let rule = catalog.rules.choose(&mut r).unwrap();
        let anchors: Vec<_> = graph.resources().filter(|n| n.kind == rule.anchor_kind).collect();
        prop_assume!(!anchors.is_empty());
        let anchor = anchors.choose(&mut r).unwrap();
        let truth = CandidateCause::new(rule.rule_id.clone(), anchor.id.clone());

        let expected_sig = oracle_signature(&graph, rule, &anchor.id);
        let sig = backward_propagate(&graph, rule, &anchor.id).unwrap();
        prop_assert_eq!(as_pairs(&sig), expected_sig.clone());

        match grade(&graph, &truth, &catalog) {
            Err(ForgeError::EmptySignature { .. }) => prop_assert!(expected_sig.is_empty()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(d) => {
                let brute = oracle_candidates(&graph, &expected_sig, &catalog);
                prop_assert!(brute.contains(&(truth.rule_id.clone(), truth.anchor.clone())));
                prop_assert_eq!(d.ambiguity(), brute.len());
                let inferred: BTreeSet<_> = forward_infer(&graph, &sig, &catalog)
                    .into_iter()
                    .map(|c| (c.rule_id, c.anchor))
                    .collect();
                prop_assert_eq!(inferred, brute);
            }
        }
    }

    #[test]
    fn forward_infer_matches_brute_force_on_partial_signatures(seed in any::<u64>()) {
        let catalog = random_catalog(seed);
        let graph = small_topology(seed.wrapping_mul(31));
        let mut r = rng(seed);
        let rule = catalog.rules.choose(&mut r).unwrap();
        let anchors: Vec<_> = graph.resources().filter(|n| n.kind == rule.anchor_kind).collect();
        prop_assume!(!anchors.is_empty());
        let anchor = anchors.choose(&mut r).unwrap();
        let sig = backward_propagate(&graph, rule, &anchor.id).unwrap();
        prop_assume!(!sig.is_empty());
        // Any nonempty subset of a signature is explained by at least its origin.
        let keep: Vec<_> = sig.iter().filter(|_| rand::Rng::random_bool(&mut r, 0.5)).cloned().collect();
        let observed = if keep.is_empty() { sig.iter().take(1).cloned().collect() } else { keep.into_iter().collect() };
        let inferred: BTreeSet<_> = forward_infer(&graph, &observed, &catalog)
            .into_iter()
            .map(|c| (c.rule_id, c.anchor))
            .collect();
        prop_assert_eq!(inferred, oracle_candidates(&graph, &as_pairs(&observed), &catalog));
    }
}

#[test]
fn unknown_rule_and_wrong_anchor_kind_are_errors() {
    let catalog = random_catalog(7);
    let graph = small_topology(7);
    let root = graph.resources().next().unwrap().id.clone();
    assert!(matches!(
        grade(&graph, &CandidateCause::new("nope", root.clone()), &catalog),
        Err(ForgeError::UnknownRule(_))
    ));
    let rule = catalog
        .rules
        .iter()
        .find(|r| r.anchor_kind != rca_forge_core::kg::ResourceKind::BaseStation);
    if let Some(rule) = rule {
        assert!(matches!(
            grade(
                &graph,
                &CandidateCause::new(rule.rule_id.clone(), root),
                &catalog
            ),
            Err(ForgeError::AnchorKindMismatch { .. })
        ));
    }
}

#[test]
fn random_instances_include_ambiguous_ones() {
    let mut by_m = std::collections::BTreeMap::new();
    for seed in 0..200u64 {
        let catalog = random_catalog(seed);
        let graph = small_topology(seed);
        for rule in &catalog.rules {
            for anchor in graph.resources().filter(|n| n.kind == rule.anchor_kind) {
                if let Ok(d) = grade(
                    &graph,
                    &CandidateCause::new(rule.rule_id.clone(), anchor.id.clone()),
                    &catalog,
                ) {
                    *by_m.entry(d.ambiguity()).or_insert(0usize) += 1;
                }
            }
        }
    }
    assert!(by_m.get(&1).copied().unwrap_or(0) > 0, "{by_m:?}");
    assert!(
        by_m.range(2..).map(|(_, n)| n).sum::<usize>() > 0,
        "{by_m:?}"
    );
}
