use std::cmp::Reverse;
use std::collections::BTreeSet;

use super::{
    check_chart, Configuration, EngineError, EvalContext, Event, Guard, GuardEnv, StateId, StateKind, Statechart,
    Transition,
};

/// Result of one [`step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub config: Configuration,
    pub fired: Vec<Transition>,
    /// Exited states, innermost first.
    pub exited: Vec<StateId>,
    /// Entered states, outermost first.
    pub entered: Vec<StateId>,
    pub emitted: Vec<Event>,
}

/// Default entry from the root.
pub fn initial_configuration(chart: &Statechart) -> Result<Configuration, EngineError> {
    let violations = check_chart(chart);
    if !violations.is_empty() {
        return Err(EngineError::IllFormedChart(violations));
    }
    let mut entered = Vec::new();
    add_default_entry(chart, chart.root(), &mut entered);
    let mut config = Configuration::default();
    for s in entered {
        config.entered_at.insert(s.clone(), 0);
        config.active.insert(s);
    }
    Ok(config)
}

fn add_default_entry(chart: &Statechart, id: &StateId, out: &mut Vec<StateId>) {
    out.push(id.clone());
    let Some(node) = chart.state(id) else { return };
    match node.kind {
        StateKind::CompoundOr => {
            if let Some(init) = &node.initial {
                add_default_entry(chart, init, out);
            }
        }
        StateKind::CompoundAnd => {
            for r in &node.children {
                add_default_entry(chart, r, out);
            }
        }
        StateKind::Atomic | StateKind::Final => {}
    }
}

/// Deepest OR-state that properly contains both ends of the transition.
/// `None` means the transition rewrites the whole configuration.
fn transition_domain<'c>(chart: &'c Statechart, t: &Transition) -> Option<&'c StateId> {
    let mut cur = chart.parent(&t.source);
    while let Some(a) = cur {
        let is_or = matches!(chart.state(a), Some(n) if n.kind == StateKind::CompoundOr);
        if is_or && chart.is_descendant(&t.target, a) {
            return Some(a);
        }
        cur = chart.parent(a);
    }
    None
}

fn exit_set(chart: &Statechart, config: &Configuration, t: &Transition) -> BTreeSet<StateId> {
    match transition_domain(chart, t) {
        Some(d) => config
            .active
            .iter()
            .filter(|s| chart.is_descendant(s, d))
            .cloned()
            .collect(),
        None => config.active.clone(),
    }
}

fn entry_set(chart: &Statechart, domain: Option<&StateId>, target: &StateId) -> Vec<StateId> {
    let mut path = vec![target.clone()];
    let mut cur = chart.parent(target);
    while let Some(p) = cur {
        if Some(p) == domain {
            break;
        }
        path.push(p.clone());
        cur = chart.parent(p);
    }
    path.reverse();

    let mut out = Vec::new();
    for s in &path {
        out.push(s.clone());
        let Some(node) = chart.state(s) else { continue };
        match node.kind {
            StateKind::CompoundAnd => {
                for r in node.children.iter().filter(|r| !path.contains(r)) {
                    add_default_entry(chart, r, &mut out);
                }
            }
            StateKind::CompoundOr if s == target => {
                if let Some(init) = &node.initial {
                    add_default_entry(chart, init, &mut out);
                }
            }
            _ => {}
        }
    }
    out.sort_by_key(|s| chart.document_order(s));
    out.dedup();
    out
}

fn guard_holds(chart: &Statechart, t: &Transition, event: &Event, ctx: &EvalContext) -> bool {
    let env = GuardEnv {
        ctx,
        subject: chart.parent(&t.source),
        score: event.score(),
        outcome: event.outcome(),
    };
    t.guard.eval(&env)
}

/// Transitions that fire for `event`: innermost source first, then lower
/// priority value, then declaration order; candidates whose exit set
/// overlaps an earlier pick are dropped.
pub fn enabled_transitions<'c>(
    chart: &'c Statechart,
    config: &Configuration,
    event: &Event,
    ctx: &EvalContext,
) -> Vec<&'c Transition> {
    let mut candidates: Vec<(usize, i32, usize, &'c Transition)> = Vec::new();
    for s in &config.active {
        let depth = chart.depth(s).unwrap_or(0);
        for (k, t) in chart.transitions_from(s) {
            if t.event.matches(event) && guard_holds(chart, t, event, ctx) {
                candidates.push((depth, t.priority, k, t));
            }
        }
    }
    candidates.sort_by_key(|&(d, p, k, _)| (Reverse(d), p, k));

    let mut picked = Vec::new();
    let mut claimed: BTreeSet<StateId> = BTreeSet::new();
    for (_, _, _, t) in candidates {
        let exits = exit_set(chart, config, t);
        if exits.is_disjoint(&claimed) {
            claimed.extend(exits);
            picked.push(t);
        }
    }
    picked
}

/// Processes one event. With no enabled transition the configuration is
/// returned unchanged and `fired` is empty.
pub fn step(
    chart: &Statechart,
    config: &Configuration,
    event: &Event,
    ctx: &EvalContext,
) -> Result<StepResult, EngineError> {
    event.validate()?;
    config.validate(chart).map_err(EngineError::InvalidConfiguration)?;
    let fired: Vec<Transition> = enabled_transitions(chart, config, event, ctx)
        .into_iter()
        .cloned()
        .collect();

    let mut next = config.clone();
    let mut exited = Vec::new();
    let mut entered = Vec::new();
    let mut emitted = Vec::new();
    for t in &fired {
        let mut exits: Vec<StateId> = exit_set(chart, &next, t).into_iter().collect();
        exits.sort_by_key(|s| Reverse(chart.document_order(s)));
        for s in &exits {
            next.active.remove(s);
            next.entered_at.remove(s);
            next.timed_out.remove(s);
        }
        exited.extend(exits);

        let enters = entry_set(chart, transition_domain(chart, t), &t.target);
        for s in &enters {
            next.active.insert(s.clone());
            next.entered_at.insert(s.clone(), ctx.now);
            next.timed_out.remove(s);
            if matches!(chart.state(s), Some(n) if n.kind == StateKind::Final) {
                if let Some(p) = chart.parent(s) {
                    emitted.push(Event::exit_reached(p.clone()));
                }
            }
        }
        entered.extend(enters);
    }
    Ok(StepResult {
        config: next,
        fired,
        exited,
        entered,
        emitted,
    })
}

/// Timeouts that fall due by `new_now`. Each active state times out at most
/// once per entry; the configuration remembers which ones were emitted.
pub fn advance_clock(
    chart: &Statechart,
    config: &mut Configuration,
    ctx: &EvalContext,
    new_now: u64,
) -> Result<Vec<Event>, EngineError> {
    if new_now < ctx.now {
        return Err(EngineError::ClockRegression { now: ctx.now, new_now });
    }
    let mut due: Vec<(u64, StateId)> = Vec::new();
    for s in &config.active {
        let Some(deadline) = chart.state(s).and_then(|n| n.deadline) else {
            continue;
        };
        if config.timed_out.contains(s) {
            continue;
        }
        let expiry = config.entered_at.get(s).copied().unwrap_or(0) + deadline;
        if expiry <= new_now {
            due.push((expiry, s.clone()));
        }
    }
    due.sort();
    Ok(due
        .into_iter()
        .map(|(_, s)| {
            config.timed_out.insert(s.clone());
            Event::timeout(s)
        })
        .collect())
}

/// A finite set of scores covering every distinct outcome of the chart's
/// `LastScore` comparisons: 0, 1, each constant in range, and midpoints.
pub fn score_representatives(chart: &Statechart) -> Vec<f64> {
    let mut points = vec![0.0, 1.0];
    for t in chart.transitions() {
        for atom in t.guard.atoms() {
            if let Guard::LastScore(_, r) = atom {
                if (0.0..=1.0).contains(r) {
                    points.push(*r);
                }
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut out = Vec::with_capacity(points.len() * 2);
    for w in points.windows(2) {
        out.push(w[0]);
        out.push((w[0] + w[1]) / 2.0);
    }
    out.extend(points.last());
    out
}
