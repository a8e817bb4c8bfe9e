mod common;

use common::*;
use seqchart_core::chart::{Guard, Outcome, StateNode, Statechart, Transition, Trigger};
use seqchart_core::compiler::{compile, course_length};
use seqchart_core::sim::{
    explore, population_stats, run_session, ExploreError, ExploreOptions, LearnerPolicy, SessionStatus, SessionTrace,
};
use seqchart_core::strategy::{apply, AttemptLimitAction, Strategy};

#[test]
fn always_pass_takes_course_length_steps() {
    let tree = asset_then_quiz();
    let (chart, _) = compile(&tree).unwrap();
    let trace = run_session(&chart, &LearnerPolicy::always_pass(0), 100).unwrap();
    assert_eq!(trace.status(), SessionStatus::Completed);
    assert_eq!(trace.steps() as u64, course_length(&tree));
    assert_eq!(trace.steps(), 5);
    let ticks: Vec<u64> = trace.records.iter().map(|r| r.tick).collect();
    assert_eq!(ticks, [0, 1, 2, 3, 4]);
    assert_eq!(
        trace.records[0].path,
        chart_initial_path(&chart),
        "first record starts from the initial configuration"
    );
}

fn chart_initial_path(chart: &Statechart) -> Vec<seqchart_core::StateId> {
    seqchart_core::initial_configuration(chart).unwrap().path(chart)
}

#[test]
fn always_fail_livelocks_through_exit_and_entry() {
    let (chart, _) = compile(&asset_then_quiz()).unwrap();
    let trace = run_session(&chart, &LearnerPolicy::always_fail(0), 1000).unwrap();
    assert_eq!(trace.status(), SessionStatus::LivelockDetected);
    let mut leaves: Vec<&str> = trace.summary.cycle.iter().map(|p| p.last().unwrap().as_str()).collect();
    // the repeat is first noticed at A1 (attempt counts saturate), so the
    // cycle is a rotation of entry, A1, Q1, exit
    assert_eq!(leaves.first(), Some(&"A1"));
    leaves.sort_unstable();
    assert_eq!(leaves, ["A1", "I1#entry", "I1#exit", "Q1"]);
}

#[test]
fn certain_bernoulli_is_always_pass() {
    let (chart, _) = compile(&asset_then_quiz()).unwrap();
    for seed in [0, 7, 99] {
        let a = run_session(&chart, &LearnerPolicy::always_pass(seed), 100).unwrap();
        let b = run_session(&chart, &LearnerPolicy::parse("bernoulli:1.0", seed).unwrap(), 100).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }
}

#[test]
fn traces_round_trip_and_repeat() {
    let tree = curriculum(vec![
        item("I1", vec![asset("A1"), quiz("Q1", 0.7)]),
        item("I2", vec![quiz("Q2", 0.4), asset("A2")]),
    ]);
    let (chart, _) = compile(&tree).unwrap();
    let policy = LearnerPolicy::parse("bernoulli:0.5", 42).unwrap();
    let a = run_session(&chart, &policy, 500).unwrap().to_jsonl();
    let b = run_session(&chart, &policy, 500).unwrap().to_jsonl();
    assert_eq!(a, b);
    let parsed = SessionTrace::from_jsonl(&a).unwrap();
    assert_eq!(parsed.to_jsonl(), a);
}

#[test]
fn budget_is_reported() {
    let (chart, _) = compile(&asset_then_quiz()).unwrap();
    let trace = run_session(&chart, &LearnerPolicy::always_pass(0), 3).unwrap();
    assert_eq!(trace.status(), SessionStatus::StepBudgetExhausted);
    assert_eq!(trace.steps(), 3);
}

#[test]
fn improving_learner_eventually_passes() {
    let (chart, _) = compile(&asset_then_quiz()).unwrap();
    let policy = LearnerPolicy::parse("improving:0.2:0.2:1.0", 0).unwrap();
    let trace = run_session(&chart, &policy, 1000).unwrap();
    assert_eq!(trace.status(), SessionStatus::Completed);
    // 0.2, 0.4 fail; 0.6 meets the 0.6 threshold on the third attempt
    assert_eq!(trace.summary.attempts["I1"], 3);
}

#[test]
fn improving_learner_stuck_below_threshold_is_a_livelock() {
    let (chart, _) = compile(&asset_then_quiz()).unwrap();
    let policy = LearnerPolicy::parse("improving:0.1:0.1:0.5", 0).unwrap();
    let trace = run_session(&chart, &policy, 1000).unwrap();
    assert_eq!(trace.status(), SessionStatus::LivelockDetected);
}

#[test]
fn deadlines_preempt_a_waiting_learner() {
    // nothing for the learner to do in `wait`; only its deadline moves on
    let chart = Statechart::new(
        "r",
        vec![
            StateNode::or("r", vec!["wait".into(), "done".into()], "wait"),
            StateNode::atomic("wait").with_deadline(3),
            StateNode::final_state("done"),
        ],
        vec![Transition::new("late", "wait", Trigger::Timeout("wait".into()), "done")],
    );
    let trace = run_session(&chart, &LearnerPolicy::always_pass(0), 10).unwrap();
    assert_eq!(trace.status(), SessionStatus::Completed);
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].tick, 3);
}

#[test]
fn stuck_session_reports_a_dead_end() {
    let chart = Statechart::new(
        "r",
        vec![
            StateNode::or("r", vec!["a".into(), "b".into()], "a"),
            StateNode::atomic("a"),
            StateNode::final_state("b"),
        ],
        vec![Transition::new("never", "a", Trigger::Next, "b").guarded(Guard::not(Guard::Always))],
    );
    let trace = run_session(&chart, &LearnerPolicy::always_pass(0), 10).unwrap();
    assert_eq!(trace.status(), SessionStatus::LivelockDetected);
    assert_eq!(trace.summary.cycle.len(), 1);
}

#[test]
fn explore_compiled_chart_is_complete() {
    let tree = curriculum(vec![item("I1", vec![asset("A1"), quiz("Q1", 0.6)]), item("I2", vec![])]);
    let (chart, map) = compile(&tree).unwrap();
    let report = explore(&chart, &ExploreOptions::for_map(&map)).unwrap();
    assert!(report.completion_reachable);
    assert!(report.unreachable_items.is_empty());
    assert!(report.livelock_witness.is_none());
    assert!(!report.partial);
    for s in chart.states() {
        assert!(report.reachable_states.contains(&s.id), "{} unreachable", s.id);
    }
}

#[test]
fn explore_finds_orphaned_item() {
    let tree = curriculum(vec![item("I1", vec![asset("A1")]), item("I2", vec![asset("A2")])]);
    let (chart, map) = compile(&tree).unwrap();
    let cut: Vec<Transition> = chart
        .transitions()
        .iter()
        .filter(|t| t.id != "I1#done")
        .cloned()
        .collect();
    let chart = chart.with_transitions(cut);
    let report = explore(&chart, &ExploreOptions::for_map(&map)).unwrap();
    assert_eq!(
        report.unreachable_items.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        ["I2"]
    );
    assert!(!report.completion_reachable);
    let w = report.livelock_witness.unwrap();
    assert!(w.deadlock);
    assert_eq!(w.prefix.last().unwrap().path.last().unwrap().as_str(), "I1#final");
}

#[test]
fn unsatisfiable_pass_guard_blocks_completion() {
    let (chart, map) = compile(&asset_then_quiz()).unwrap();
    let rigged: Vec<Transition> = chart
        .transitions()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if t.id == "Q1#pass" {
                t.guard = Guard::not(Guard::Always);
            }
            t
        })
        .collect();
    let chart = chart.with_transitions(rigged);
    let report = explore(&chart, &ExploreOptions::for_map(&map)).unwrap();
    assert!(!report.completion_reachable);
    let w = report.livelock_witness.expect("witness");
    assert!(!w.deadlock);
    // the initial state is already doomed; its fresh attempt count never recurs
    assert_eq!(w.prefix.first().unwrap().path, chart_initial_path(&chart));
    let cycle: Vec<&str> = w.cycle.iter().map(|s| s.path.last().unwrap().as_str()).collect();
    assert!(cycle.contains(&"I1#exit") && cycle.contains(&"I1#entry"), "{cycle:?}");
}

#[test]
fn failing_alphabet_cannot_complete() {
    let (chart, map) = compile(&asset_then_quiz()).unwrap();
    let report = explore(&chart, &ExploreOptions::for_map(&map).with_outcomes([Outcome::Failed])).unwrap();
    assert!(!report.completion_reachable);
    assert!(report.livelock_witness.is_some());
    let passing = explore(&chart, &ExploreOptions::for_map(&map).with_outcomes([Outcome::Passed])).unwrap();
    assert!(passing.completion_reachable);
}

#[test]
fn attempt_limit_makes_failing_learners_finish() {
    let (chart, map) = compile(&asset_then_quiz()).unwrap();
    let skip = apply(
        &Strategy::MaxAttempts {
            limit: 2,
            action: AttemptLimitAction::Skip,
        },
        &chart,
        &map,
    )
    .unwrap();
    let trace = run_session(&skip, &LearnerPolicy::always_fail(0), 100).unwrap();
    assert_eq!(trace.status(), SessionStatus::Completed);
    assert_eq!(trace.summary.attempts["I1"], 2);
    let report = explore(&skip, &ExploreOptions::for_map(&map).with_outcomes([Outcome::Failed])).unwrap();
    assert!(report.completion_reachable);
    assert!(report.livelock_witness.is_none());
}

#[test]
fn budget_exceeded_returns_partial_report() {
    let (chart, map) = compile(&asset_then_quiz()).unwrap();
    match explore(&chart, &ExploreOptions::for_map(&map).with_budget(3)) {
        Err(ExploreError::BudgetExceeded { partial, .. }) => {
            assert!(partial.partial);
            assert_eq!(partial.explored_nodes, 3);
        }
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn population_examples() {
    let (chart, map) = compile(&asset_then_quiz()).unwrap();
    let seeds: Vec<u64> = (0..3).collect();
    let s = population_stats(&chart, &LearnerPolicy::always_pass(0), &seeds, 100).unwrap();
    assert_eq!(s.completion_rate, 1.0);
    assert_eq!(s.mean_steps, s.median_steps);
    assert_eq!(s.mean_steps, 5.0);

    let seeds: Vec<u64> = (0..100).collect();
    let never = population_stats(&chart, &LearnerPolicy::parse("bernoulli:0.0", 0).unwrap(), &seeds, 200).unwrap();
    assert_eq!(never.completion_rate, 0.0);

    let capped = apply(
        &Strategy::MaxAttempts {
            limit: 2,
            action: AttemptLimitAction::Skip,
        },
        &chart,
        &map,
    )
    .unwrap();
    let coin = population_stats(&capped, &LearnerPolicy::parse("bernoulli:0.5", 0).unwrap(), &seeds, 200).unwrap();
    assert_eq!(coin.completion_rate, 1.0);
    assert!(coin.mean_attempts["I1"] > 1.0 && coin.mean_attempts["I1"] <= 2.0);

    let again = population_stats(&capped, &LearnerPolicy::parse("bernoulli:0.5", 0).unwrap(), &seeds, 200).unwrap();
    assert_eq!(coin, again);
}
