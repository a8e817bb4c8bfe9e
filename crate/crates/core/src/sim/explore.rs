use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Abstraction, ContextClass};
use crate::chart::{
    apply_effects, initial_configuration, step, Configuration, Effect, EngineError, EvalContext, Event, Outcome,
    StateId, Statechart, Trigger,
};
use crate::compiler::CompilationMap;

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    /// Outcomes the simulated learner may produce. Steps recording any
    /// other outcome are not taken.
    pub outcomes: BTreeSet<Outcome>,
    /// Abstract states to visit before giving up.
    pub node_budget: usize,
    /// States reported in `unreachable_items` when never active. Empty
    /// means every non-root compound state.
    pub items: Vec<StateId>,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            outcomes: [Outcome::Passed, Outcome::Failed].into(),
            node_budget: 1_000_000,
            items: Vec::new(),
        }
    }
}

impl ExploreOptions {
    pub fn for_map(map: &CompilationMap) -> Self {
        ExploreOptions {
            items: map.items.iter().map(|i| map.node_state[i].clone()).collect(),
            ..Default::default()
        }
    }

    pub fn with_outcomes(mut self, outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        self.outcomes = outcomes.into_iter().collect();
        self
    }

    pub fn with_budget(mut self, nodes: usize) -> Self {
        self.node_budget = nodes;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessStep {
    pub path: Vec<StateId>,
    pub context: ContextClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Event leading to the next step; absent at a dead end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<Event>,
}

/// A lasso: `prefix` from the initial state, then `cycle` repeating forever.
/// A dead end has an empty cycle and `deadlock` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub prefix: Vec<WitnessStep>,
    pub cycle: Vec<WitnessStep>,
    pub deadlock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub reachable_states: BTreeSet<StateId>,
    pub unreachable_items: BTreeSet<StateId>,
    pub completion_reachable: bool,
    pub livelock_witness: Option<Witness>,
    pub explored_nodes: usize,
    pub partial: bool,
}

impl ReachabilityReport {
    pub fn reachable_leaves(&self, chart: &Statechart) -> BTreeSet<StateId> {
        self.reachable_states
            .iter()
            .filter(|s| chart.is_leaf(s))
            .cloned()
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("state space exceeds {budget} nodes; partial report attached")]
    BudgetExceeded {
        budget: usize,
        partial: Box<ReachabilityReport>,
    },
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Node {
    config: Configuration,
    ctx: ContextClass,
    /// Exit notifications still to be processed, in order.
    pending: Vec<StateId>,
}

struct Graph {
    nodes: Vec<Node>,
    parent: Vec<Option<(usize, Event)>>,
    edges: Vec<Vec<(usize, Event)>>,
}

/// Breadth-first search over (configuration, context class, pending
/// notifications). Time is abstracted: a timeout may fire at any point
/// while its state is active.
pub fn explore(chart: &Statechart, opts: &ExploreOptions) -> Result<ReachabilityReport, ExploreError> {
    let abs = Abstraction::for_chart(chart);
    let base = EvalContext::for_chart(chart);
    let learner_events = learner_events(chart, &abs, opts);
    let back = chart.transitions().iter().any(|t| t.event == Trigger::Back);
    let timed: Vec<StateId> = chart
        .states()
        .iter()
        .filter(|s| s.deadline.is_some())
        .map(|s| s.id.clone())
        .collect();

    let root = Node {
        config: initial_configuration(chart)?,
        ctx: abs.classify(&base),
        pending: Vec::new(),
    };
    let mut g = Graph {
        nodes: vec![root.clone()],
        parent: vec![None],
        edges: vec![Vec::new()],
    };
    let mut index: HashMap<Node, usize> = HashMap::from([(root, 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut partial = false;

    while let Some(k) = queue.pop_front() {
        let node = g.nodes[k].clone();
        let ctx = abs.concretize(&node.ctx, &base);
        let events: Vec<Event> = match node.pending.first() {
            Some(s) => vec![Event::exit_reached(s.clone())],
            None => learner_events
                .iter()
                .cloned()
                .chain(
                    timed
                        .iter()
                        .filter(|s| node.config.is_active(*s) && !node.config.timed_out.contains(*s))
                        .map(|s| Event::timeout(s.clone())),
                )
                .chain(back.then_some(Event::Back))
                .collect(),
        };
        for event in events {
            let result = step(chart, &node.config, &event, &ctx)?;
            if result.fired.is_empty() && node.pending.is_empty() {
                continue;
            }
            let records_foreign = result
                .fired
                .iter()
                .flat_map(|t| &t.effects)
                .any(|e| matches!(e, Effect::RecordOutcome(o) if !opts.outcomes.contains(o)));
            if records_foreign {
                continue;
            }
            let mut next_ctx = ctx.clone();
            apply_effects(&mut next_ctx, &event, &result);
            let mut config = result.config.clone();
            if let Event::Timeout { state } = &event {
                if config.is_active(state) {
                    config.timed_out.insert(state.clone());
                }
            }
            let mut pending: Vec<StateId> = node.pending.iter().skip(1).cloned().collect();
            pending.extend(result.emitted.iter().filter_map(|e| match e {
                Event::ExitReached { state } => Some(state.clone()),
                _ => None,
            }));
            let succ = Node {
                config,
                ctx: abs.classify(&next_ctx),
                pending,
            };
            let j = match index.get(&succ) {
                Some(&j) => j,
                None => {
                    if g.nodes.len() >= opts.node_budget {
                        partial = true;
                        break;
                    }
                    let j = g.nodes.len();
                    index.insert(succ.clone(), j);
                    g.nodes.push(succ);
                    g.parent.push(Some((k, event.clone())));
                    g.edges.push(Vec::new());
                    queue.push_back(j);
                    j
                }
            };
            g.edges[k].push((j, event));
        }
        if partial {
            break;
        }
    }

    let report = summarize(chart, &abs, opts, &g, partial);
    if partial {
        return Err(ExploreError::BudgetExceeded {
            budget: opts.node_budget,
            partial: Box::new(report),
        });
    }
    Ok(report)
}

/// Forward learner events worth trying: only kinds some transition listens
/// to, submissions at every score representative. `Back` is tried last (see
/// [`explore`]) so witnesses prefer forward moves.
fn learner_events(chart: &Statechart, abs: &Abstraction, opts: &ExploreOptions) -> Vec<Event> {
    let listens = |trigger: &Trigger| chart.transitions().iter().any(|t| &t.event == trigger);
    let mut out = Vec::new();
    for (trigger, event) in [(Trigger::Enter, Event::Enter), (Trigger::Next, Event::Next)] {
        if listens(&trigger) {
            out.push(event);
        }
    }
    if listens(&Trigger::Submit) {
        out.extend(abs.representatives().iter().map(|&s| Event::submit(s)));
    }
    if listens(&Trigger::AssessmentResult) {
        for &outcome in &opts.outcomes {
            out.extend(
                abs.representatives()
                    .iter()
                    .map(|&score| Event::AssessmentResult { outcome, score }),
            );
        }
    }
    out
}

fn summarize(
    chart: &Statechart,
    abs: &Abstraction,
    opts: &ExploreOptions,
    g: &Graph,
    partial: bool,
) -> ReachabilityReport {
    let reachable_states: BTreeSet<StateId> = g.nodes.iter().flat_map(|n| n.config.active.iter().cloned()).collect();
    let items: Vec<StateId> = if opts.items.is_empty() {
        chart
            .states()
            .iter()
            .filter(|s| s.kind.is_compound() && s.id != *chart.root())
            .map(|s| s.id.clone())
            .collect()
    } else {
        opts.items.clone()
    };
    let unreachable_items = items.into_iter().filter(|i| !reachable_states.contains(i)).collect();
    let complete: Vec<bool> = g
        .nodes
        .iter()
        .map(|n| chart.completion_states().into_iter().any(|s| n.config.is_active(s)))
        .collect();

    let livelock_witness = if partial {
        None
    } else {
        witness(chart, abs, g, &complete)
    };
    ReachabilityReport {
        reachable_states,
        unreachable_items,
        completion_reachable: complete.iter().any(|&c| c),
        livelock_witness,
        explored_nodes: g.nodes.len(),
        partial,
    }
}

/// Shortest path into the region that cannot reach completion, then a walk
/// inside it until a node repeats or nothing fires.
fn witness(chart: &Statechart, abs: &Abstraction, g: &Graph, complete: &[bool]) -> Option<Witness> {
    let n = g.nodes.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, es) in g.edges.iter().enumerate() {
        for (j, _) in es {
            reverse[*j].push(k);
        }
    }
    let mut alive = complete.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&k| complete[k]).collect();
    while let Some(j) = queue.pop_front() {
        for &k in &reverse[j] {
            if !alive[k] {
                alive[k] = true;
                queue.push_back(k);
            }
        }
    }
    // node indices follow BFS discovery order, so the first doomed one is closest
    let doomed = (0..n).find(|&k| !alive[k])?;

    let describe = |k: usize, event: Option<Event>| WitnessStep {
        path: g.nodes[k].config.path(chart),
        context: g.nodes[k].ctx.clone(),
        score: abs.score_of(&g.nodes[k].ctx),
        event,
    };

    let mut prefix_rev = Vec::new();
    let mut cur = doomed;
    while let Some((p, ev)) = &g.parent[cur] {
        prefix_rev.push(describe(*p, Some(ev.clone())));
        cur = *p;
    }
    let mut prefix: Vec<WitnessStep> = prefix_rev.into_iter().rev().collect();

    let mut walk: Vec<(usize, Option<Event>)> = Vec::new();
    let mut at: HashMap<usize, usize> = HashMap::new();
    let mut cur = doomed;
    loop {
        if let Some(&start) = at.get(&cur) {
            let steps: Vec<WitnessStep> = walk.into_iter().map(|(k, e)| describe(k, e)).collect();
            let (lead, cycle) = steps.split_at(start);
            prefix.extend_from_slice(lead);
            return Some(Witness {
                prefix,
                cycle: cycle.to_vec(),
                deadlock: false,
            });
        }
        at.insert(cur, walk.len());
        match g.edges[cur].first() {
            Some((j, ev)) => {
                walk.push((cur, Some(ev.clone())));
                cur = *j;
            }
            None => {
                walk.push((cur, None));
                prefix.extend(walk.into_iter().map(|(k, e)| describe(k, e)));
                return Some(Witness {
                    prefix,
                    cycle: Vec::new(),
                    deadlock: true,
                });
            }
        }
    }
}
