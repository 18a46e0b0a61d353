mod support;

use proptest::prelude::*;
use rand::Rng;

use rca_forge_core::eval::{
    aggregate, parse_prediction, score_scenario, Prediction, ScenarioMetrics, Score,
};
use rca_forge_core::kg::{serialize_label, Difficulty, NodeId, RootCause};
use support::{flatten, label_of, naive_score, proptest_config, random_entries, rng};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

proptest! {
    #![proptest_config(proptest_config(1000))]

    #[test]
    fn score_matches_naive_oracle(seed in any::<u64>(), k in prop::option::of(1usize..4)) {
        let mut r = rng(seed);
        let pred = random_entries(&mut r, true);
        let truth = random_entries(&mut r, false);
        let cut: std::collections::BTreeMap<NodeId, Vec<RootCause>> = pred
            .iter()
            .map(|(a, v)| (a.clone(), v.iter().take(k.unwrap_or(usize::MAX)).cloned().collect()))
            .collect();
        let (p, rc, f) = naive_score(&flatten(&cut), &flatten(&truth));
        let got = score_scenario(&Prediction { entries: pred, malformed: None }, &label_of(truth), k);
        prop_assert!(close(got.precision, p), "precision {} vs {}", got.precision, p);
        prop_assert!(close(got.recall, rc), "recall {} vs {}", got.recall, rc);
        prop_assert!(close(got.f1, f), "f1 {} vs {}", got.f1, f);
        prop_assert!((0.0..=1.0).contains(&got.f1));
    }

    #[test]
    fn document_round_trip_scores_like_entries(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pred = random_entries(&mut r, true);
        let truth = random_entries(&mut r, false);
        let parsed = parse_prediction(&serialize_label(&label_of(pred.clone())));
        prop_assert!(!parsed.is_malformed());
        let direct = score_scenario(&Prediction { entries: pred, malformed: None }, &label_of(truth.clone()), None);
        let via_doc = score_scenario(&parsed, &label_of(truth), None);
        prop_assert!(close(direct.f1, via_doc.f1));
    }

    #[test]
    fn aggregate_is_mean_per_stratum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..40);
        let rows: Vec<ScenarioMetrics> = (0..n)
            .map(|i| {
                let d = if r.random_bool(0.3) {
                    Difficulty::Simple
                } else {
                    Difficulty::Difficult { ambiguity: r.random_range(2..6) }
                };
                let f = r.random_range(0.0..=1.0);
                ScenarioMetrics::new(format!("s{i:03}"), d, Score { precision: f, recall: f, f1: f })
            })
            .collect();
        let agg = aggregate(&rows);
        let mean = |pick: &dyn Fn(&ScenarioMetrics) -> bool| {
            let xs: Vec<f64> = rows.iter().filter(|m| pick(m)).map(|m| m.f1).collect();
            if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 }
        };
        prop_assert!((agg.mixed.f1 - mean(&|_| true)).abs() < 1e-9);
        prop_assert!((agg.simple.f1 - mean(&|m| m.difficulty.is_simple())).abs() < 1e-9);
        prop_assert!((agg.difficult.f1 - mean(&|m| !m.difficulty.is_simple())).abs() < 1e-9);
        prop_assert_eq!(agg.mixed.count, agg.simple.count + agg.difficult.count);
    }
}

fn rc(desc: &str, eq: &str) -> RootCause {
    RootCause {
        cause_description: desc.into(),
        equipment_id: eq.into(),
        solution: "s".into(),
    }
}

fn entries(list: &[(&str, Vec<RootCause>)]) -> std::collections::BTreeMap<NodeId, Vec<RootCause>> {
    list.iter()
        .map(|(a, v)| (NodeId::from(*a), v.clone()))
        .collect()
}

#[test]
fn analytic_fixtures() {
    let truth = label_of(entries(&[
        ("A1", vec![rc("c", "e1")]),
        ("A2", vec![rc("c", "e1")]),
    ]));
    let exact = Prediction {
        entries: entries(&[("A1", vec![rc("c", "e1")]), ("A2", vec![rc("c", "e1")])]),
        malformed: None,
    };
    assert_eq!(score_scenario(&exact, &truth, Some(1)).f1, 1.0);

    let half = Prediction {
        entries: entries(&[("A1", vec![rc("c", "e1")])]),
        malformed: None,
    };
    let s = score_scenario(&half, &truth, Some(1));
    assert_eq!(s.recall, 0.5);
    assert_eq!(format!("{:.4}", s.f1), "0.6667");

    let wrong = Prediction {
        entries: entries(&[("A1", vec![rc("c", "e2")]), ("A2", vec![rc("c", "e2")])]),
        malformed: None,
    };
    assert_eq!(score_scenario(&wrong, &truth, Some(1)), Score::ZERO);

    let malformed = parse_prediction("not json");
    assert!(malformed.is_malformed());
    assert_eq!(score_scenario(&malformed, &truth, None), Score::ZERO);
}
