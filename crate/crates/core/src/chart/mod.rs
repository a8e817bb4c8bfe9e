//! Hierarchical statechart model and interpreter.
//!
//! States form a tree: OR-states activate exactly one child, AND-states
//! activate all of their regions. Transitions are triggered by events,
//! filtered by declarative guards and resolved innermost-source first.
//! Time is logical: callers supply integer ticks.

mod check;
mod engine;
mod guard;
mod runner;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use check::{check_chart, ChartRule, ChartViolation};
pub use engine::{advance_clock, enabled_transitions, initial_configuration, score_representatives, step, StepResult};
pub use guard::{Cmp, Guard, GuardEnv};
pub use runner::{apply_effects, EventKind, Runner};

/// Opaque state identifier. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(Arc<str>);

impl StateId {
    pub fn new(s: impl AsRef<str>) -> Self {
        StateId(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        StateId::new(s)
    }
}

impl From<String> for StateId {
    fn from(s: String) -> Self {
        StateId(Arc::from(s))
    }
}

impl AsRef<str> for StateId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for StateId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl Serialize for StateId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for StateId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(StateId::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Atomic,
    #[serde(rename = "or")]
    CompoundOr,
    #[serde(rename = "and")]
    CompoundAnd,
    Final,
}

impl StateKind {
    pub fn is_compound(self) -> bool {
        matches!(self, StateKind::CompoundOr | StateKind::CompoundAnd)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateNode {
    pub id: StateId,
    pub kind: StateKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<StateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<StateId>,
    /// Ticks after entry at which a `Timeout` for this state becomes due.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<u64>,
}

impl StateNode {
    pub fn atomic(id: impl Into<StateId>) -> Self {
        StateNode {
            id: id.into(),
            kind: StateKind::Atomic,
            children: Vec::new(),
            initial: None,
            deadline: None,
        }
    }

    pub fn final_state(id: impl Into<StateId>) -> Self {
        StateNode {
            kind: StateKind::Final,
            ..StateNode::atomic(id)
        }
    }

    pub fn or(id: impl Into<StateId>, children: Vec<StateId>, initial: impl Into<StateId>) -> Self {
        StateNode {
            id: id.into(),
            kind: StateKind::CompoundOr,
            children,
            initial: Some(initial.into()),
            deadline: None,
        }
    }

    pub fn and(id: impl Into<StateId>, regions: Vec<StateId>) -> Self {
        StateNode {
            id: id.into(),
            kind: StateKind::CompoundAnd,
            children: regions,
            initial: None,
            deadline: None,
        }
    }

    pub fn with_deadline(mut self, ticks: u64) -> Self {
        self.deadline = Some(ticks);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Passed,
    Failed,
}

/// Runtime event delivered to [`step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Enter,
    Next,
    Back,
    Submit { score: f64 },
    AssessmentResult { outcome: Outcome, score: f64 },
    Timeout { state: StateId },
    ExitReached { state: StateId },
}

impl Event {
    pub fn submit(score: f64) -> Event {
        Event::Submit { score }
    }

    pub fn timeout(state: impl Into<StateId>) -> Event {
        Event::Timeout { state: state.into() }
    }

    pub fn exit_reached(state: impl Into<StateId>) -> Event {
        Event::ExitReached { state: state.into() }
    }

    pub fn trigger(&self) -> Trigger {
        match self {
            Event::Enter => Trigger::Enter,
            Event::Next => Trigger::Next,
            Event::Back => Trigger::Back,
            Event::Submit { .. } => Trigger::Submit,
            Event::AssessmentResult { .. } => Trigger::AssessmentResult,
            Event::Timeout { state } => Trigger::Timeout(state.clone()),
            Event::ExitReached { state } => Trigger::ExitReached(state.clone()),
        }
    }

    pub fn score(&self) -> Option<f64> {
        match self {
            Event::Submit { score } | Event::AssessmentResult { score, .. } => Some(*score),
            _ => None,
        }
    }

    pub fn outcome(&self) -> Option<Outcome> {
        match self {
            Event::AssessmentResult { outcome, .. } => Some(*outcome),
            _ => None,
        }
    }

    /// Checks payload ranges.
    pub fn validate(&self) -> Result<(), EngineError> {
        match self.score() {
            Some(s) if !(0.0..=1.0).contains(&s) => {
                Err(EngineError::InvalidEvent(format!("score {s} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Submit { score } => write!(f, "submit({score})"),
            Event::AssessmentResult { outcome, score } => {
                write!(f, "assessment_result({outcome:?}, {score})")
            }
            other => write!(f, "{}", other.trigger()),
        }
    }
}

/// Event pattern a transition listens for. Serialized as a short string:
/// `enter`, `next`, `back`, `submit`, `assessment_result`, `timeout:<state>`,
/// `exit_reached:<state>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Trigger {
    Enter,
    Next,
    Back,
    Submit,
    AssessmentResult,
    Timeout(StateId),
    ExitReached(StateId),
}

impl Trigger {
    pub fn matches(&self, event: &Event) -> bool {
        match (self, event) {
            (Trigger::Enter, Event::Enter)
            | (Trigger::Next, Event::Next)
            | (Trigger::Back, Event::Back)
            | (Trigger::Submit, Event::Submit { .. })
            | (Trigger::AssessmentResult, Event::AssessmentResult { .. }) => true,
            (Trigger::Timeout(a), Event::Timeout { state }) => a == state,
            (Trigger::ExitReached(a), Event::ExitReached { state }) => a == state,
            _ => false,
        }
    }

    /// The state named by a `timeout:` or `exit_reached:` pattern.
    pub fn state(&self) -> Option<&StateId> {
        match self {
            Trigger::Timeout(s) | Trigger::ExitReached(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Enter => f.write_str("enter"),
            Trigger::Next => f.write_str("next"),
            Trigger::Back => f.write_str("back"),
            Trigger::Submit => f.write_str("submit"),
            Trigger::AssessmentResult => f.write_str("assessment_result"),
            Trigger::Timeout(s) => write!(f, "timeout:{s}"),
            Trigger::ExitReached(s) => write!(f, "exit_reached:{s}"),
        }
    }
}

impl FromStr for Trigger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "enter" => Trigger::Enter,
            "next" => Trigger::Next,
            "back" => Trigger::Back,
            "submit" => Trigger::Submit,
            "assessment_result" => Trigger::AssessmentResult,
            _ => {
                if let Some(st) = s.strip_prefix("timeout:") {
                    Trigger::Timeout(StateId::new(st))
                } else if let Some(st) = s.strip_prefix("exit_reached:") {
                    Trigger::ExitReached(StateId::new(st))
                } else {
                    return Err(format!("unknown event pattern '{s}'"));
                }
            }
        })
    }
}

impl Serialize for Trigger {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Trigger {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Context update performed when a transition fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Store an assessment outcome.
    RecordOutcome(Outcome),
    /// Count a new attempt at `state` and clear the previous outcome and score.
    BeginAttempt(StateId),
    /// Zero the attempt counter of `state`.
    ResetAttempts(StateId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    pub source: StateId,
    pub event: Trigger,
    pub guard: Guard,
    pub target: StateId,
    /// Lower value wins among transitions from equally deep sources.
    pub priority: i32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
}

impl Transition {
    pub fn new(id: impl Into<String>, source: impl Into<StateId>, event: Trigger, target: impl Into<StateId>) -> Self {
        Transition {
            id: id.into(),
            source: source.into(),
            event,
            guard: Guard::Always,
            target: target.into(),
            priority: 0,
            effects: Vec::new(),
        }
    }

    pub fn guarded(mut self, guard: Guard) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_priority(mut self, priority: i32) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_effect(mut self, effect: Effect) -> Self {
        self.effects.push(effect);
        self
    }
}

/// Derived lookup tables; rebuilt whenever a chart is constructed.
#[derive(Debug, Clone, Default)]
struct ChartIndex {
    by_id: HashMap<StateId, usize>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    /// Pre-order rank from the root; unreachable states rank last.
    order: Vec<usize>,
    by_source: HashMap<StateId, Vec<usize>>,
}

impl ChartIndex {
    fn build(root: &StateId, states: &[StateNode], transitions: &[Transition]) -> Self {
        let mut by_id = HashMap::with_capacity(states.len());
        for (k, s) in states.iter().enumerate() {
            by_id.entry(s.id.clone()).or_insert(k);
        }
        let mut parent = vec![None; states.len()];
        let mut depth = vec![0; states.len()];
        let mut order = vec![usize::MAX; states.len()];
        if let Some(&r) = by_id.get(root) {
            // iterative pre-order; guards against cycles via `order`
            let mut next = 0;
            let mut stack = vec![(r, None, 0usize)];
            while let Some((k, p, d)) = stack.pop() {
                if order[k] != usize::MAX {
                    continue;
                }
                order[k] = next;
                next += 1;
                parent[k] = p;
                depth[k] = d;
                for c in states[k].children.iter().rev() {
                    if let Some(&ck) = by_id.get(c) {
                        if order[ck] == usize::MAX {
                            stack.push((ck, Some(k), d + 1));
                        }
                    }
                }
            }
        }
        let mut by_source: HashMap<StateId, Vec<usize>> = HashMap::new();
        for (k, t) in transitions.iter().enumerate() {
            by_source.entry(t.source.clone()).or_default().push(k);
        }
        ChartIndex {
            by_id,
            parent,
            depth,
            order,
            by_source,
        }
    }
}

/// An immutable statechart.
#[derive(Debug, Clone)]
pub struct Statechart {
    states: Vec<StateNode>,
    transitions: Vec<Transition>,
    root: StateId,
    index: ChartIndex,
}

impl PartialEq for Statechart {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.states == other.states && self.transitions == other.transitions
    }
}

impl Statechart {
    /// Builds a chart. Never fails; use [`check_chart`] for well-formedness.
    pub fn new(root: impl Into<StateId>, states: Vec<StateNode>, transitions: Vec<Transition>) -> Self {
        let root = root.into();
        let index = ChartIndex::build(&root, &states, &transitions);
        Statechart {
            states,
            transitions,
            root,
            index,
        }
    }

    pub fn root(&self) -> &StateId {
        &self.root
    }

    pub fn states(&self) -> &[StateNode] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Same states, different transitions.
    pub fn with_transitions(&self, transitions: Vec<Transition>) -> Statechart {
        Statechart::new(self.root.clone(), self.states.clone(), transitions)
    }

    pub fn state<S: AsRef<str> + ?Sized>(&self, id: &S) -> Option<&StateNode> {
        self.index.by_id.get(id.as_ref()).map(|&k| &self.states[k])
    }

    pub fn contains<S: AsRef<str> + ?Sized>(&self, id: &S) -> bool {
        self.index.by_id.contains_key(id.as_ref())
    }

    pub fn parent<S: AsRef<str> + ?Sized>(&self, id: &S) -> Option<&StateId> {
        let k = *self.index.by_id.get(id.as_ref())?;
        self.index.parent[k].map(|p| &self.states[p].id)
    }

    pub fn depth<S: AsRef<str> + ?Sized>(&self, id: &S) -> Option<usize> {
        self.index.by_id.get(id.as_ref()).map(|&k| self.index.depth[k])
    }

    /// Pre-order position, used to order entry and exit sequences.
    pub fn document_order<S: AsRef<str> + ?Sized>(&self, id: &S) -> usize {
        self.index
            .by_id
            .get(id.as_ref())
            .map(|&k| self.index.order[k])
            .unwrap_or(usize::MAX)
    }

    /// Proper ancestors, nearest first.
    pub fn ancestors<S: AsRef<str> + ?Sized>(&self, id: &S) -> Vec<StateId> {
        let mut out = Vec::new();
        let mut cur = self.parent(id).cloned();
        while let Some(p) = cur {
            cur = self.parent(&p).cloned();
            out.push(p);
        }
        out
    }

    pub fn is_descendant<S: AsRef<str> + ?Sized, A: AsRef<str> + ?Sized>(&self, id: &S, ancestor: &A) -> bool {
        let ancestor = ancestor.as_ref();
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            if p.as_str() == ancestor {
                return true;
            }
            cur = self.parent(p);
        }
        false
    }

    pub fn transitions_from<S: AsRef<str> + ?Sized>(&self, source: &S) -> impl Iterator<Item = (usize, &Transition)> {
        self.index
            .by_source
            .get(source.as_ref())
            .into_iter()
            .flatten()
            .map(|&k| (k, &self.transitions[k]))
    }

    pub fn is_leaf<S: AsRef<str> + ?Sized>(&self, id: &S) -> bool {
        self.state(id)
            .map(|s| matches!(s.kind, StateKind::Atomic | StateKind::Final))
            .unwrap_or(false)
    }

    pub fn has_and_states(&self) -> bool {
        self.states.iter().any(|s| s.kind == StateKind::CompoundAnd)
    }

    /// The Final children of the root; entering one completes the chart.
    pub fn completion_states(&self) -> Vec<&StateId> {
        self.state(self.root.as_str())
            .map(|r| {
                r.children
                    .iter()
                    .filter(|c| matches!(self.state(c), Some(s) if s.kind == StateKind::Final))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("charts serialize")
    }

    pub fn from_json(text: &str) -> Result<Statechart, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Serialize)]
struct ChartDocRef<'a> {
    states: &'a [StateNode],
    transitions: &'a [Transition],
    root: &'a StateId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartDoc {
    states: Vec<StateNode>,
    transitions: Vec<Transition>,
    root: StateId,
}

impl Serialize for Statechart {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ChartDocRef {
            states: &self.states,
            transitions: &self.transitions,
            root: &self.root,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Statechart {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = ChartDoc::deserialize(d)?;
        Ok(Statechart::new(doc.root, doc.states, doc.transitions))
    }
}

/// The set of active states plus per-state entry bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub active: BTreeSet<StateId>,
    pub entered_at: BTreeMap<StateId, u64>,
    /// States whose timeout has already been emitted since their last entry.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub timed_out: BTreeSet<StateId>,
}

impl Configuration {
    pub fn is_active<S: AsRef<str> + ?Sized>(&self, id: &S) -> bool {
        self.active.contains(id.as_ref())
    }

    /// Active atomic/final states in document order.
    pub fn leaves(&self, chart: &Statechart) -> Vec<StateId> {
        let mut out: Vec<StateId> = self.active.iter().filter(|s| chart.is_leaf(s)).cloned().collect();
        out.sort_by_key(|s| chart.document_order(s));
        out
    }

    /// Active states ordered root first. For an AND-free chart this is the
    /// single root-to-leaf path.
    pub fn path(&self, chart: &Statechart) -> Vec<StateId> {
        let mut out: Vec<StateId> = self.active.iter().cloned().collect();
        out.sort_by_key(|s| chart.document_order(s));
        out
    }

    /// Structural consistency against `chart`.
    pub fn validate(&self, chart: &Statechart) -> Result<(), String> {
        if !self.active.contains(chart.root()) {
            return Err(format!("root '{}' is not active", chart.root()));
        }
        for id in &self.active {
            let node = chart
                .state(id)
                .ok_or_else(|| format!("active state '{id}' is not in the chart"))?;
            if let Some(p) = chart.parent(id) {
                if !self.active.contains(p) {
                    return Err(format!("'{id}' is active but its parent '{p}' is not"));
                }
            } else if id != chart.root() {
                return Err(format!("'{id}' is not attached to the hierarchy"));
            }
            match node.kind {
                StateKind::CompoundOr => {
                    let n = node.children.iter().filter(|c| self.active.contains(*c)).count();
                    if n != 1 {
                        return Err(format!("OR-state '{id}' has {n} active children"));
                    }
                }
                StateKind::CompoundAnd => {
                    if let Some(r) = node.children.iter().find(|c| !self.active.contains(*c)) {
                        return Err(format!("region '{r}' of AND-state '{id}' is inactive"));
                    }
                }
                StateKind::Atomic | StateKind::Final => {}
            }
        }
        Ok(())
    }
}

/// Everything guards can read.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalContext {
    pub attempt_count: BTreeMap<StateId, u32>,
    pub last_score: Option<f64>,
    pub last_outcome: Option<Outcome>,
    pub has_next: BTreeMap<StateId, bool>,
    pub now: u64,
}

impl EvalContext {
    /// Fresh context with `has_next` filled from the chart: a state has a
    /// next sibling when a later non-final sibling exists under its parent.
    pub fn for_chart(chart: &Statechart) -> Self {
        let mut has_next = BTreeMap::new();
        for node in chart.states() {
            if !node.kind.is_compound() {
                continue;
            }
            for (k, child) in node.children.iter().enumerate() {
                let later = node.children[k + 1..]
                    .iter()
                    .any(|c| matches!(chart.state(c), Some(s) if s.kind != StateKind::Final));
                if chart.state(child).map(|s| s.kind.is_compound()).unwrap_or(false) {
                    has_next.insert(child.clone(), later);
                }
            }
        }
        EvalContext {
            has_next,
            ..EvalContext::default()
        }
    }

    pub fn attempts<S: AsRef<str> + ?Sized>(&self, state: &S) -> u32 {
        self.attempt_count.get(state.as_ref()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("ill-formed chart: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    IllFormedChart(Vec<ChartViolation>),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("clock regression: {new_now} < {now}")]
    ClockRegression { now: u64, new_now: u64 },
}
