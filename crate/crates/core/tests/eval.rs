mod support;

use std::path::{Path, PathBuf};

use rca_forge_core::eval::{
    aggregate, evaluate_dataset, parse_prediction, score_scenario, CaseError, EvalError,
    EvalReport, ScenarioMetrics, SolverFailure, SolverSpec,
};
use rca_forge_core::exec::Exec;
use rca_forge_core::forge::{assemble_dataset, write_dataset, GeneratorConfig};
use rca_forge_core::reference;
use rca_forge_core::solver::{solve, Stage};

fn small_dataset(dir: &Path) {
    let config = GeneratorConfig {
        num_scenarios: 12,
        target_simple_count: None,
        ..reference::generator_config()
    };
    let ds = assemble_dataset(&config, &reference::catalog(), Exec::Sequential).unwrap();
    write_dataset(dir, &ds).unwrap();
}

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn spec(path: &Path) -> SolverSpec {
    SolverSpec::new(vec![path.to_string_lossy().into_owned()]).with_timeout(2)
}

#[test]
fn shell_solvers_cover_every_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);

    let perfect = script(
        tmp.path(),
        "perfect.sh",
        r#"cat "$(dirname "$1")/label.json""#,
    );
    let ev = evaluate_dataset(&spec(&perfect), &data, Some(1), Exec::Auto).unwrap();
    assert_eq!(ev.report.mixed.f1, 1.0);
    assert_eq!(ev.bad_case_count(), 0);

    let crash = script(tmp.path(), "crash.sh", "echo boom >&2; exit 3");
    let ev = evaluate_dataset(&spec(&crash), &data, None, Exec::Auto).unwrap();
    assert_eq!(ev.report.mixed.f1, 0.0);
    assert_eq!(ev.bad_case_count(), 12);
    match &ev.cases[0].error {
        Some(CaseError::Solver(SolverFailure::Crash { exit_code, stderr })) => {
            assert_eq!(*exit_code, Some(3));
            assert!(stderr.contains("boom"));
        }
        other => panic!("{other:?}"),
    }

    let slow = script(tmp.path(), "slow.sh", "sleep 10");
    let ev = evaluate_dataset(
        &spec(&slow).with_timeout(1),
        &data,
        None,
        Exec::Parallel { jobs: 12 },
    )
    .unwrap();
    assert!(ev
        .cases
        .iter()
        .all(|c| c.error == Some(CaseError::Solver(SolverFailure::Timeout { seconds: 1 }))));

    let empty = script(tmp.path(), "empty.sh", "true");
    let ev = evaluate_dataset(&spec(&empty), &data, None, Exec::Auto).unwrap();
    assert!(ev
        .cases
        .iter()
        .all(|c| c.error == Some(CaseError::Solver(SolverFailure::Empty))));

    let chatty = script(
        tmp.path(),
        "chatty.sh",
        r#"echo "Answer:"; cat "$(dirname "$1")/label.json""#,
    );
    let ev = evaluate_dataset(&spec(&chatty), &data, None, Exec::Auto).unwrap();
    assert!(ev
        .cases
        .iter()
        .all(|c| matches!(c.error, Some(CaseError::Malformed { .. }))));
    assert_eq!(ev.report.mixed.f1, 0.0);

    let missing = SolverSpec::new(vec![tmp.path().join("nope").to_string_lossy().into_owned()]);
    assert!(matches!(
        evaluate_dataset(&missing, &data, None, Exec::Auto),
        Err(EvalError::SolverMissing(_))
    ));
    assert!(matches!(
        evaluate_dataset(
            &spec(&perfect),
            &tmp.path().join("absent"),
            None,
            Exec::Auto
        ),
        Err(EvalError::DatasetInvalid(_))
    ));
}

#[test]
fn report_rows_follow_scenario_order() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path());
    let perfect = script(
        tmp.path(),
        "perfect.sh",
        r#"cat "$(dirname "$1")/label.json""#,
    );
    let seq = evaluate_dataset(&spec(&perfect), tmp.path(), Some(1), Exec::Sequential).unwrap();
    let par = evaluate_dataset(
        &spec(&perfect),
        tmp.path(),
        Some(1),
        Exec::Parallel { jobs: 4 },
    )
    .unwrap();
    let (a, b) = (
        EvalReport::new(&seq, Some(1)),
        EvalReport::new(&par, Some(1)),
    );
    assert_eq!(a.to_json(), b.to_json());
    let ids: Vec<&str> = a.scenarios.iter().map(|r| r.scenario_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(ids.len(), 12);
}

fn stage_metrics(stage: Stage) -> Vec<ScenarioMetrics> {
    let ds = assemble_dataset(
        &reference::generator_config(),
        &reference::catalog(),
        Exec::Auto,
    )
    .unwrap();
    let program = stage.program();
    let inputs: Vec<_> = ds.scenarios.iter().collect();
    Exec::Auto.map(&inputs, |s| {
        let out = solve(&program, &rca_forge_core::kg::serialize_input(&s.graph)).unwrap();
        let score = score_scenario(&parse_prediction(&out), &s.label, None);
        ScenarioMetrics::new(&s.scenario_id, s.difficulty, score)
    })
}

/// The baseline reports all m candidates for each alarm, one of which is
/// true, so each scenario scores 2/(m+1).
#[test]
fn baseline_matches_ambiguity_oracle() {
    let rows = stage_metrics(Stage::V0);
    let oracle: f64 = rows
        .iter()
        .map(|m| 2.0 / (m.difficulty.ambiguity() as f64 + 1.0))
        .sum::<f64>()
        / rows.len() as f64;
    let agg = aggregate(&rows);
    assert!((agg.mixed.f1 - oracle).abs() < 1e-12);
    assert_eq!(agg.mixed.f1, 0.5888259958071284);
    assert_eq!(agg.mixed.precision, 0.43712264150943464);
    assert_eq!(agg.mixed.recall, 1.0);
    assert_eq!(agg.difficult.f1, 0.5650255045464625);
    assert_eq!(agg.difficult.precision, 0.4045409181636731);
    assert_eq!(agg.simple.f1, 1.0);
}

#[test]
fn staged_solvers_improve() {
    let v1 = aggregate(&stage_metrics(Stage::V1));
    let v2 = aggregate(&stage_metrics(Stage::V2));
    assert_eq!(v1.mixed.f1, 0.7955974842767323);
    assert_eq!(v2.mixed.f1, 0.9377358490566038);
    assert_eq!(v2.difficult.f1, 0.9341317365269461);
    assert_eq!((v1.simple.f1, v2.simple.f1), (1.0, 1.0));
}
