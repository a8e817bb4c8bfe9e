use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{StateKind, Statechart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartRule {
    DuplicateState,
    UnknownRoot,
    RootNotOr,
    UnknownChild,
    MultipleParents,
    Detached,
    EmptyOr,
    MissingInitial,
    BadInitial,
    InitialOnNonOr,
    TooFewRegions,
    RegionNotOr,
    LeafWithChildren,
    ZeroDeadline,
    DuplicateTransition,
    UnknownSource,
    UnknownTarget,
    UnknownEventState,
    RegionTarget,
}

impl ChartRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartRule::DuplicateState => "duplicate-state",
            ChartRule::UnknownRoot => "unknown-root",
            ChartRule::RootNotOr => "root-not-or",
            ChartRule::UnknownChild => "unknown-child",
            ChartRule::MultipleParents => "multiple-parents",
            ChartRule::Detached => "detached",
            ChartRule::EmptyOr => "empty-or",
            ChartRule::MissingInitial => "missing-initial",
            ChartRule::BadInitial => "bad-initial",
            ChartRule::InitialOnNonOr => "initial-on-non-or",
            ChartRule::TooFewRegions => "too-few-regions",
            ChartRule::RegionNotOr => "region-not-or",
            ChartRule::LeafWithChildren => "leaf-with-children",
            ChartRule::ZeroDeadline => "zero-deadline",
            ChartRule::DuplicateTransition => "duplicate-transition",
            ChartRule::UnknownSource => "unknown-source",
            ChartRule::UnknownTarget => "unknown-target",
            ChartRule::UnknownEventState => "unknown-event-state",
            ChartRule::RegionTarget => "region-target",
        }
    }
}

impl fmt::Display for ChartRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartViolation {
    /// State id or transition id the violation is about.
    pub subject: String,
    pub rule: ChartRule,
    pub message: String,
}

impl fmt::Display for ChartViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.subject, self.rule, self.message)
    }
}

/// Structural well-formedness. Empty result means the engine may run the chart.
pub fn check_chart(chart: &Statechart) -> Vec<ChartViolation> {
    let mut out = Vec::new();
    let mut push = |subject: &str, rule: ChartRule, message: String| {
        out.push(ChartViolation {
            subject: subject.to_string(),
            rule,
            message,
        })
    };

    let mut seen = HashSet::new();
    for s in chart.states() {
        if !seen.insert(s.id.as_str()) {
            push(
                s.id.as_str(),
                ChartRule::DuplicateState,
                format!("state '{}' is declared twice", s.id),
            );
        }
    }

    match chart.state(chart.root().as_str()) {
        None => push(
            chart.root().as_str(),
            ChartRule::UnknownRoot,
            format!("root '{}' is not a declared state", chart.root()),
        ),
        Some(r) if r.kind != StateKind::CompoundOr => push(
            r.id.as_str(),
            ChartRule::RootNotOr,
            "the root must be an OR-state".into(),
        ),
        Some(_) => {}
    }

    let mut parents: HashMap<&str, &str> = HashMap::new();
    for s in chart.states() {
        for c in &s.children {
            if !chart.contains(c) {
                push(
                    s.id.as_str(),
                    ChartRule::UnknownChild,
                    format!("child '{c}' is not declared"),
                );
                continue;
            }
            if c == chart.root() {
                push(
                    c.as_str(),
                    ChartRule::MultipleParents,
                    "the root cannot be a child".into(),
                );
            } else if let Some(prev) = parents.insert(c.as_str(), s.id.as_str()) {
                push(
                    c.as_str(),
                    ChartRule::MultipleParents,
                    format!("'{c}' is a child of both '{prev}' and '{}'", s.id),
                );
            }
        }
    }

    for s in chart.states() {
        if s.id != *chart.root() && chart.parent(s.id.as_str()).is_none() {
            push(
                s.id.as_str(),
                ChartRule::Detached,
                format!("'{}' is not reachable from the root", s.id),
            );
        }
        match s.kind {
            StateKind::CompoundOr => {
                if s.children.is_empty() {
                    push(s.id.as_str(), ChartRule::EmptyOr, "OR-state without children".into());
                }
                match &s.initial {
                    None => push(
                        s.id.as_str(),
                        ChartRule::MissingInitial,
                        "OR-state needs an initial child".into(),
                    ),
                    Some(i) if !s.children.contains(i) => push(
                        s.id.as_str(),
                        ChartRule::BadInitial,
                        format!("initial '{i}' is not a child of '{}'", s.id),
                    ),
                    Some(_) => {}
                }
            }
            StateKind::CompoundAnd => {
                if s.children.len() < 2 {
                    push(
                        s.id.as_str(),
                        ChartRule::TooFewRegions,
                        "AND-state needs at least two regions".into(),
                    );
                }
                for r in &s.children {
                    if matches!(chart.state(r), Some(n) if n.kind != StateKind::CompoundOr) {
                        push(
                            r.as_str(),
                            ChartRule::RegionNotOr,
                            format!("region '{r}' must be an OR-state"),
                        );
                    }
                }
            }
            StateKind::Atomic | StateKind::Final => {
                if !s.children.is_empty() {
                    push(
                        s.id.as_str(),
                        ChartRule::LeafWithChildren,
                        "leaf state with children".into(),
                    );
                }
            }
        }
        if s.initial.is_some() && s.kind != StateKind::CompoundOr {
            push(
                s.id.as_str(),
                ChartRule::InitialOnNonOr,
                "only OR-states have an initial child".into(),
            );
        }
        if s.deadline == Some(0) {
            push(
                s.id.as_str(),
                ChartRule::ZeroDeadline,
                "deadline must be positive".into(),
            );
        }
    }

    let mut tids = HashSet::new();
    for t in chart.transitions() {
        if !tids.insert(t.id.as_str()) {
            push(
                &t.id,
                ChartRule::DuplicateTransition,
                format!("transition id '{}' is used twice", t.id),
            );
        }
        if !chart.contains(&t.source) {
            push(
                &t.id,
                ChartRule::UnknownSource,
                format!("source '{}' is not declared", t.source),
            );
        }
        if !chart.contains(&t.target) {
            push(
                &t.id,
                ChartRule::UnknownTarget,
                format!("target '{}' is not declared", t.target),
            );
        } else if let Some(p) = chart.parent(&t.target) {
            if matches!(chart.state(p), Some(n) if n.kind == StateKind::CompoundAnd) {
                push(
                    &t.id,
                    ChartRule::RegionTarget,
                    format!("target '{}' is a region of AND-state '{p}'", t.target),
                );
            }
        }
        if let Some(s) = t.event.state() {
            if !chart.contains(s) {
                push(
                    &t.id,
                    ChartRule::UnknownEventState,
                    format!("event names unknown state '{s}'"),
                );
            }
        }
    }
    out
}
