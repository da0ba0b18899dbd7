mod common;

use std::time::Duration;

use capplan::encoder::{build, Origin};
use capplan::oracle::simulate;
use capplan::planner::{explain, plan, BoundResult, PlanError, PlanOutcome, PlannerConfig};
use capplan::smt::{solve, SolveOutcome, SolverConfig, SolverError};
use capplan::{SynonymMode, SynonymyIndex, Value};
use common::{config, fixture};

fn real(n: i64) -> Value {
    Value::int(n)
}

fn found(model: &str, max_bound: usize, config: &PlannerConfig) -> capplan::planner::Plan {
    match plan(&fixture(model), max_bound, config).unwrap() {
        PlanOutcome::Found { plan, .. } => plan,
        PlanOutcome::NotFound(n) => panic!("no plan for {model}: {:?}", n.bounds),
    }
}

fn variants() -> Vec<(&'static str, PlannerConfig)> {
    let mut out = Vec::new();
    for incremental in [false, true] {
        for mode in [SynonymMode::Collapsed, SynonymMode::Expanded] {
            let name = match (incremental, mode) {
                (false, SynonymMode::Collapsed) => "fresh/collapsed",
                (false, SynonymMode::Expanded) => "fresh/expanded",
                (true, SynonymMode::Collapsed) => "incremental/collapsed",
                (true, SynonymMode::Expanded) => "incremental/expanded",
            };
            out.push((
                name,
                PlannerConfig {
                    incremental,
                    mode,
                    ..config()
                },
            ));
        }
    }
    out
}

#[test]
fn transport_needs_one_happening() {
    for (name, cfg) in variants() {
        let p = found("transport.json", 4, &cfg);
        assert_eq!(p.bound_happenings, 1, "{name}");
        assert_eq!(p.steps(), vec![vec!["Transport"]], "{name}");
        assert_eq!(p.parameter("Transport", 0, "TargetPosition"), Some(&real(10)), "{name}");
        let model = fixture("transport.json");
        assert!(simulate(&model, &SynonymyIndex::new(&model), &p).is_ok(), "{name}");
    }
}

#[test]
fn chained_transport_drives_first() {
    for (name, cfg) in variants() {
        let p = found("transport_chained.json", 4, &cfg);
        assert_eq!(p.steps(), vec![vec!["DriveTo"], vec!["Transport"]], "{name}");
        assert_eq!(p.parameter("DriveTo", 0, "DriveTarget"), Some(&real(3)), "{name}");
        assert_eq!(p.parameter("Transport", 1, "TargetPosition"), Some(&real(10)), "{name}");
    }
}

#[test]
fn bound_outcomes_are_reported_in_order() {
    let outcome = plan(&fixture("transport_chained.json"), 4, &config()).unwrap();
    let bounds: Vec<usize> = outcome.bounds().iter().map(|b| b.bound).collect();
    assert_eq!(bounds, vec![0, 1]);
    assert!(matches!(outcome.bounds()[0].result, BoundResult::Unsat { .. }));
    assert_eq!(outcome.bounds()[1].result, BoundResult::Sat);
}

#[test]
fn goal_already_met_gives_empty_plan() {
    let p = found("already_there.json", 4, &config());
    assert_eq!(p.bound_happenings, 1);
    assert_eq!(p.applied_count(), 0);
}

#[test]
fn unreachable_goal_is_explained() {
    let outcome = plan(&fixture("unreachable.json"), 4, &config()).unwrap();
    let PlanOutcome::NotFound(none) = outcome else {
        panic!("unexpected plan")
    };
    assert!(none.all_unsat());
    assert_eq!(none.bounds.len(), 5);
    let e = explain(&none, &fixture("unreachable.json")).unwrap();
    assert!(e.elements.iter().any(|el| el.family == "init" || el.family == "goal"));
    assert!(e.elements.iter().any(|el| el.family == "frame" || el.family == "pre"));
    assert!(e.to_string().contains("PalletPosition"));
}

#[test]
fn minimized_core_is_smaller_and_still_conflicting() {
    let full = plan(&fixture("unreachable.json"), 2, &config()).unwrap();
    let small = plan(
        &fixture("unreachable.json"),
        2,
        &PlannerConfig {
            minimize_core: true,
            ..config()
        },
    )
    .unwrap();
    let (PlanOutcome::NotFound(full), PlanOutcome::NotFound(small)) = (full, small) else {
        panic!("unexpected plan")
    };
    let full_core = full.core.unwrap();
    let small_core = small.core.unwrap();
    assert!(small_core.len() <= full_core.len());

    let model = fixture("unreachable.json");
    let enc = build(&model, &SynonymyIndex::new(&model), 2, SynonymMode::Collapsed).unwrap();
    let names = small_core.iter().map(|a| a.name.clone()).collect();
    let restricted = enc.restricted(&names);
    assert!(matches!(
        solve(&restricted, &SolverConfig::default()).unwrap(),
        SolveOutcome::Unsat(_)
    ));
    // every element is needed
    for drop in &small_core {
        let mut fewer: std::collections::BTreeSet<String> = names.clone();
        fewer.remove(&drop.name);
        let outcome = solve(&enc.restricted(&fewer), &SolverConfig::default()).unwrap();
        assert!(matches!(outcome, SolveOutcome::Sat(_)), "{} is redundant", drop.name);
    }
}

#[test]
fn contradictory_initial_state_points_at_both_values() {
    let outcome = plan(&fixture("contradiction.json"), 1, &config()).unwrap();
    let PlanOutcome::NotFound(none) = outcome else {
        panic!("unexpected plan")
    };
    let core = none.core.as_ref().unwrap();
    let names: Vec<&str> = core.iter().map(|a| a.name.as_str()).collect();
    assert!(names.contains(&"init.CurrentProductPosition"), "{names:?}");
    assert!(names.contains(&"init.StartPosition"), "{names:?}");
    assert!(core
        .iter()
        .all(|a| matches!(a.origin, Origin::Initial { .. } | Origin::InitialConstraint { .. })));
}

#[test]
fn without_cores_there_is_no_explanation() {
    let cfg = PlannerConfig {
        solver: SolverConfig {
            produce_cores: false,
            ..SolverConfig::default()
        },
        ..config()
    };
    let PlanOutcome::NotFound(none) = plan(&fixture("unreachable.json"), 1, &cfg).unwrap() else {
        panic!("unexpected plan")
    };
    assert!(none.core.is_none());
    assert!(explain(&none, &fixture("unreachable.json")).is_err());
}

#[test]
fn transcript_records_the_session() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.smt2");
    let cfg = PlannerConfig {
        solver: SolverConfig {
            transcript: Some(path.clone()),
            seed: Some(7),
            ..SolverConfig::default()
        },
        ..config()
    };
    found("transport.json", 2, &cfg);
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.contains("(check-sat)"));
    assert!(text.contains("(set-logic QF_LRA)"));
    assert!(text.contains("|Transport#t0|"));
    assert!(text.contains("; sat"));
}

#[test]
fn missing_solver_is_a_launch_error() {
    let cfg = PlannerConfig {
        solver: SolverConfig::default().with_command_line("no-such-solver-binary -in"),
        ..config()
    };
    let err = plan(&fixture("transport.json"), 1, &cfg).unwrap_err();
    assert!(matches!(err, PlanError::Solver(SolverError::Launch { .. })), "{err}");
}

#[test]
fn silent_solver_times_out_into_unknown() {
    for incremental in [false, true] {
        let cfg = PlannerConfig {
            solver: SolverConfig {
                timeout: Some(Duration::from_millis(200)),
                ..SolverConfig::default().with_command_line("sleep 30")
            },
            incremental,
            ..config()
        };
        let outcome = plan(&fixture("transport.json"), 1, &cfg).unwrap();
        let PlanOutcome::NotFound(none) = outcome else {
            panic!("unexpected plan")
        };
        assert!(!none.all_unsat());
        assert_eq!(none.bounds.len(), 2);
        for b in &none.bounds {
            assert_eq!(
                b.result,
                BoundResult::Unknown {
                    reason: "timeout".into()
                }
            );
        }
    }
}

#[test]
fn unknown_answers_do_not_stop_deepening() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("fake-solver.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nwhile read -r line; do\n  case \"$line\" in\n    *check-sat*) echo unknown ;;\n    *reason-unknown*) echo '(:reason-unknown \"incomplete\")' ;;\n  esac\ndone\n",
    )
    .unwrap();
    let cfg = PlannerConfig {
        solver: SolverConfig::default().with_command_line(&format!("sh {}", script.display())),
        ..config()
    };
    let outcome = plan(&fixture("transport.json"), 2, &cfg).unwrap();
    let PlanOutcome::NotFound(none) = outcome else {
        panic!("unexpected plan")
    };
    assert_eq!(none.bounds.len(), 3);
    assert!(none
        .bounds
        .iter()
        .all(|b| matches!(b.result, BoundResult::Unknown { .. })));
}

#[test]
fn invalid_model_is_rejected_before_solving() {
    let mut model = fixture("transport.json");
    let required = model
        .capabilities
        .iter()
        .find(|c| c.kind == capplan::model::CapabilityKind::Required)
        .unwrap()
        .clone();
    model.capabilities.push(capplan::model::Capability {
        id: "SecondRequest".into(),
        ..required
    });
    let err = plan(&model, 1, &config()).unwrap_err();
    assert!(matches!(err, PlanError::InvalidModel(_)), "{err}");
}

#[test]
fn domain_and_problem_documents_plan_like_the_merged_model() {
    let d = std::fs::read_to_string(common::fixture_path("transport_domain.json")).unwrap();
    let p = std::fs::read_to_string(common::fixture_path("transport_problem.json")).unwrap();
    let model = capplan::CapabilityModel::from_documents(&d, &p).unwrap();
    let outcome = plan(&model, 2, &config()).unwrap();
    assert_eq!(outcome.plan().unwrap().steps(), vec![vec!["Transport"]]);
}
