mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;

use rca_forge_core::analyze::{
    build_report, categorize, select_primary, AnalyzerConfig, FailureCategory, FailureHistogram,
};
use rca_forge_core::eval::{
    parse_prediction, score_scenario, CaseOutcome, Prediction, ScenarioMetrics,
};
use rca_forge_core::exec::Exec;
use rca_forge_core::forge::assemble_dataset;
use rca_forge_core::kg::serialize_input;
use rca_forge_core::reference;
use rca_forge_core::solver::{solve, Stage};
use support::{label_of, proptest_config, random_entries, rng};

use FailureCategory::*;

proptest! {
    #![proptest_config(proptest_config(500))]

    /// Categories appear exactly when the score is imperfect, and each one
    /// is backed by the precision or recall loss it describes.
    #[test]
    fn categories_agree_with_score(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pred = Prediction { entries: random_entries(&mut r, true), malformed: None };
        let label = label_of(random_entries(&mut r, false));
        let s = score_scenario(&pred, &label, None);
        let cats = categorize(&label, &pred, None);
        prop_assert_eq!(cats.is_empty(), s.f1 == 1.0, "{:?} {:?}", cats, s);
        if cats.contains(&MissingRootCause) || cats.contains(&WrongEquipment) || cats.contains(&WrongCauseDescription) {
            prop_assert!(s.recall < 1.0);
        }
        if cats.contains(&ExtraRootCause) || cats.contains(&WrongEquipment) || cats.contains(&WrongCauseDescription) {
            prop_assert!(s.precision < 1.0);
        }
        prop_assert!(!cats.contains(&MalformedOutput) && !cats.contains(&SolverError));
    }
}

#[test]
fn primary_tie_break_follows_priority() {
    let sets = [
        BTreeSet::from([MissingRootCause]),
        BTreeSet::from([ExtraRootCause]),
    ];
    let h = FailureHistogram::from_sets(&sets);
    assert_eq!(select_primary(&h).unwrap(), ExtraRootCause);
    let sets = [
        BTreeSet::from([WrongEquipment]),
        BTreeSet::from([WrongEquipment, MalformedOutput]),
    ];
    assert_eq!(
        select_primary(&FailureHistogram::from_sets(&sets)).unwrap(),
        WrongEquipment
    );
    assert!(select_primary(&FailureHistogram::default()).is_err());
}

#[test]
fn baseline_report_on_reference_dataset() {
    let ds = assemble_dataset(
        &reference::generator_config(),
        &reference::catalog(),
        Exec::Auto,
    )
    .unwrap();
    let program = Stage::V0.program();
    let outcomes: Vec<CaseOutcome> = ds
        .scenarios
        .iter()
        .map(|s| {
            let raw = solve(&program, &serialize_input(&s.graph)).unwrap();
            let predicted = parse_prediction(&raw);
            let score = score_scenario(&predicted, &s.label, None);
            CaseOutcome {
                metrics: ScenarioMetrics::new(&s.scenario_id, s.difficulty, score),
                scenario: s.clone(),
                input_path: "input.json".into(),
                predicted,
                raw_output: raw,
                error: None,
            }
        })
        .collect();
    let bad: Vec<&CaseOutcome> = outcomes.iter().filter(|c| c.is_bad()).collect();
    let passing: Vec<&CaseOutcome> = outcomes.iter().filter(|c| !c.is_bad()).collect();
    assert_eq!((bad.len(), passing.len()), (501, 29));

    let report = build_report(&bad, &passing, &AnalyzerConfig::default()).unwrap();
    assert_eq!(report.total_scenarios, 530);
    assert_eq!(report.primary_category, ExtraRootCause);
    assert_eq!(report.histogram.total_bad_cases, 501);
    assert_eq!(report.histogram.count(ExtraRootCause), 501);
    assert_eq!(report.histogram.count(MissingRootCause), 0);
    assert_eq!(report.representatives.len(), 3);
    let f1s: Vec<f64> = report.representatives.iter().map(|r| r.case.f1).collect();
    assert!(f1s.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(f1s[0], 2.0 / 9.0);
    for rep in &report.representatives {
        assert!(rep.case.raw_output.is_some());
        if let Some(c) = &rep.contrast {
            assert_eq!(c.f1, 1.0);
            assert!(c.categories.is_empty());
        }
    }
    assert!(report
        .narrative
        .contains("Primary failure mode: ExtraRootCause"));

    let one = build_report(&bad, &passing, &AnalyzerConfig { representatives: 1 }).unwrap();
    assert_eq!(one.representatives[0], report.representatives[0]);
    assert!(build_report(&[], &passing, &AnalyzerConfig::default()).is_err());
}
