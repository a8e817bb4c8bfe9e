//! Activity tree to statechart compilation.
//!
//! Every item becomes an OR-state holding an entry choice, one state per
//! content unit, an exit point and a final state:
//!
//! ```text
//! entry --enter--> u1 --next/submit--> u2 ... --> exit --enter--> final
//!   ^                                               |
//!   +--------------- enter [failed] ----------------+
//! ```
//!
//! A failed or timed-out assessment jumps straight to the exit point. The
//! exit point resolves three guarded rules by priority: retry on failure,
//! leave when passed with a next sibling, leave when there is no next
//! sibling. Entering an item's final state emits `ExitReached(item)`, which
//! its parent cluster turns into a move to the next sibling or into the
//! cluster's own final state, propagating completion up to the curriculum.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{Cmp, Effect, Guard, Outcome, StateId, StateNode, Statechart, Transition, Trigger};
use crate::content::{validate_tree, ActivityTree, Cluster, Item, Node, UnitKind, Violation};

/// Priorities of the three exit-point rules.
pub const RETRY_PRIORITY: i32 = 1;
pub const ADVANCE_PRIORITY: i32 = 2;
pub const LEAVE_PRIORITY: i32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("invalid tree: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTree(Vec<Violation>),
    #[error("generated state id '{0}' collides with another state")]
    IdCollision(String),
}

/// Links tree ids to the chart states generated for them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompilationMap {
    /// Compound state of every cluster and item.
    pub node_state: BTreeMap<String, StateId>,
    pub unit_state: BTreeMap<String, StateId>,
    /// Entry choice of every item.
    pub entry_of: BTreeMap<String, StateId>,
    /// Exit point of every item.
    pub exit_of: BTreeMap<String, StateId>,
    /// Final state of every cluster and item.
    pub final_of: BTreeMap<String, StateId>,
    /// Items in document order.
    pub items: Vec<String>,
    /// Units that are assessments.
    pub assessments: Vec<String>,
}

impl CompilationMap {
    pub fn is_item(&self, tree_id: &str) -> bool {
        self.entry_of.contains_key(tree_id)
    }

    /// Tree id whose compound state is `state`.
    pub fn node_of_state(&self, state: &str) -> Option<&str> {
        self.node_state
            .iter()
            .find(|(_, s)| s.as_str() == state)
            .map(|(k, _)| k.as_str())
    }

    pub fn unit_of_state(&self, state: &str) -> Option<&str> {
        self.unit_state
            .iter()
            .find(|(_, s)| s.as_str() == state)
            .map(|(k, _)| k.as_str())
    }

    /// Item whose entry choice is `state`.
    pub fn item_of_entry(&self, state: &str) -> Option<&str> {
        self.entry_of
            .iter()
            .find(|(_, s)| s.as_str() == state)
            .map(|(k, _)| k.as_str())
    }

    /// Item whose exit point is `state`.
    pub fn item_of_exit(&self, state: &str) -> Option<&str> {
        self.exit_of
            .iter()
            .find(|(_, s)| s.as_str() == state)
            .map(|(k, _)| k.as_str())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("maps serialize")
    }
}

/// Transition ids generated for an item, so strategies can find them.
pub fn retry_rule_id(item: &str) -> String {
    format!("{item}#retry")
}

pub fn advance_rule_id(item: &str) -> String {
    format!("{item}#advance")
}

pub fn leave_rule_id(item: &str) -> String {
    format!("{item}#leave")
}

pub fn pass_rule_id(unit: &str) -> String {
    format!("{unit}#pass")
}

pub fn fail_rule_id(unit: &str) -> String {
    format!("{unit}#fail")
}

/// The three default exit-point rules of `item`.
pub fn default_exit_rules(item: &str, entry: &StateId, exit: &StateId, fin: &StateId) -> [Transition; 3] {
    [
        Transition::new(retry_rule_id(item), exit.clone(), Trigger::Enter, entry.clone())
            .guarded(Guard::Failed)
            .with_priority(RETRY_PRIORITY),
        Transition::new(advance_rule_id(item), exit.clone(), Trigger::Enter, fin.clone())
            .guarded(Guard::and([Guard::not(Guard::Failed), Guard::HasNextSibling]))
            .with_priority(ADVANCE_PRIORITY),
        Transition::new(leave_rule_id(item), exit.clone(), Trigger::Enter, fin.clone())
            .guarded(Guard::not(Guard::HasNextSibling))
            .with_priority(LEAVE_PRIORITY),
    ]
}

struct Builder {
    states: Vec<StateNode>,
    transitions: Vec<Transition>,
    map: CompilationMap,
}

/// Compiles a valid tree. Deterministic: equal trees give equal charts.
pub fn compile(tree: &ActivityTree) -> Result<(Statechart, CompilationMap), CompileError> {
    let violations = validate_tree(tree);
    if !violations.is_empty() {
        return Err(CompileError::InvalidTree(violations));
    }
    let mut b = Builder {
        states: Vec::new(),
        transitions: Vec::new(),
        map: CompilationMap::default(),
    };
    let root = b.cluster(tree.root());
    let mut seen = HashSet::new();
    for s in &b.states {
        if !seen.insert(s.id.clone()) {
            return Err(CompileError::IdCollision(s.id.to_string()));
        }
    }
    Ok((Statechart::new(root, b.states, b.transitions), b.map))
}

impl Builder {
    fn cluster(&mut self, c: &Cluster) -> StateId {
        let id = StateId::new(&c.id);
        let fin = StateId::new(format!("{}#final", c.id));
        let child_ids: Vec<StateId> = c.children.iter().map(|n| StateId::new(n.id())).collect();
        let mut children = child_ids.clone();
        children.push(fin.clone());
        // unreachable for valid trees: childless clusters fail validation
        let initial = child_ids.first().cloned().unwrap_or_else(|| fin.clone());
        self.states.push(StateNode::or(id.clone(), children, initial));
        self.map.node_state.insert(c.id.clone(), id.clone());
        self.map.final_of.insert(c.id.clone(), fin.clone());

        for (k, child) in c.children.iter().enumerate() {
            match child {
                Node::Cluster(sub) => {
                    self.cluster(sub);
                }
                Node::Item(item) => self.item(item),
            }
            let next = child_ids.get(k + 1).unwrap_or(&fin);
            self.transitions.push(Transition::new(
                format!("{}#done", child.id()),
                child_ids[k].clone(),
                Trigger::ExitReached(child_ids[k].clone()),
                next.clone(),
            ));
        }
        self.states.push(StateNode::final_state(fin));
        id
    }

    fn item(&mut self, item: &Item) {
        let id = StateId::new(&item.id);
        let entry = StateId::new(format!("{}#entry", item.id));
        let exit = StateId::new(format!("{}#exit", item.id));
        let fin = StateId::new(format!("{}#final", item.id));
        let unit_ids: Vec<StateId> = item.units.iter().map(|u| StateId::new(&u.id)).collect();

        let mut children = vec![entry.clone()];
        children.extend(unit_ids.iter().cloned());
        children.push(exit.clone());
        children.push(fin.clone());
        self.states.push(StateNode::or(id.clone(), children, entry.clone()));
        self.states.push(StateNode::atomic(entry.clone()));

        self.map.node_state.insert(item.id.clone(), id.clone());
        self.map.entry_of.insert(item.id.clone(), entry.clone());
        self.map.exit_of.insert(item.id.clone(), exit.clone());
        self.map.final_of.insert(item.id.clone(), fin.clone());
        self.map.items.push(item.id.clone());

        // empty item: the entry choice routes straight to the exit point
        let first = unit_ids.first().unwrap_or(&exit);
        self.transitions.push(
            Transition::new(
                format!("{}#enter", item.id),
                entry.clone(),
                Trigger::Enter,
                first.clone(),
            )
            .with_effect(Effect::BeginAttempt(id.clone())),
        );

        for (k, unit) in item.units.iter().enumerate() {
            let here = &unit_ids[k];
            let next = unit_ids.get(k + 1).unwrap_or(&exit);
            self.map.unit_state.insert(unit.id.clone(), here.clone());
            match unit.kind {
                UnitKind::Asset => {
                    self.states.push(StateNode::atomic(here.clone()));
                    self.transitions.push(Transition::new(
                        format!("{}#next", unit.id),
                        here.clone(),
                        Trigger::Next,
                        next.clone(),
                    ));
                }
                UnitKind::AssessmentAsset => {
                    self.map.assessments.push(unit.id.clone());
                    let mut node = StateNode::atomic(here.clone());
                    node.deadline = unit.time_limit;
                    self.states.push(node);
                    let mastery = unit.effective_mastery();
                    self.transitions.push(
                        Transition::new(pass_rule_id(&unit.id), here.clone(), Trigger::Submit, next.clone())
                            .guarded(Guard::LastScore(Cmp::Ge, mastery))
                            .with_effect(Effect::RecordOutcome(Outcome::Passed)),
                    );
                    self.transitions.push(
                        Transition::new(fail_rule_id(&unit.id), here.clone(), Trigger::Submit, exit.clone())
                            .guarded(Guard::LastScore(Cmp::Lt, mastery))
                            .with_effect(Effect::RecordOutcome(Outcome::Failed)),
                    );
                    if unit.time_limit.is_some() {
                        self.transitions.push(
                            Transition::new(
                                format!("{}#timeout", unit.id),
                                here.clone(),
                                Trigger::Timeout(here.clone()),
                                exit.clone(),
                            )
                            .with_effect(Effect::RecordOutcome(Outcome::Failed)),
                        );
                    }
                }
            }
            if k > 0 {
                self.transitions.push(Transition::new(
                    format!("{}#back", unit.id),
                    here.clone(),
                    Trigger::Back,
                    unit_ids[k - 1].clone(),
                ));
            }
        }

        self.states.push(StateNode::atomic(exit.clone()));
        self.states.push(StateNode::final_state(fin.clone()));
        self.transitions
            .extend(default_exit_rules(&item.id, &entry, &exit, &fin));
    }
}

/// Steps an always-pass learner needs from the initial configuration to
/// global completion: per item one entry step, one step per unit and one
/// exit-rule step, plus one propagation step for every non-root node.
pub fn course_length(tree: &ActivityTree) -> u64 {
    fn cluster(c: &Cluster) -> u64 {
        c.children
            .iter()
            .map(|n| {
                let own = match n {
                    Node::Cluster(sub) => cluster(sub),
                    Node::Item(item) => 2 + item.units.len() as u64,
                };
                own + 1
            })
            .sum()
    }
    cluster(tree.root())
}
