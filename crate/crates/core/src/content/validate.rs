use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActivityTree, Cluster, ContentUnit, Level, Node, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationRule {
    EmptyId,
    DuplicateId,
    RootNotCurriculum,
    ChildlessCluster,
    LevelInversion,
    MasteryOnAsset,
    TimeLimitOnAsset,
    MasteryOutOfRange,
    TimeLimitZero,
}

impl ViolationRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationRule::EmptyId => "empty-id",
            ViolationRule::DuplicateId => "duplicate-id",
            ViolationRule::RootNotCurriculum => "root-not-curriculum",
            ViolationRule::ChildlessCluster => "childless-cluster",
            ViolationRule::LevelInversion => "level-inversion",
            ViolationRule::MasteryOnAsset => "mastery-on-asset",
            ViolationRule::TimeLimitOnAsset => "time-limit-on-asset",
            ViolationRule::MasteryOutOfRange => "mastery-out-of-range",
            ViolationRule::TimeLimitZero => "time-limit-zero",
        }
    }
}

impl fmt::Display for ViolationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node_id: String,
    pub rule: ViolationRule,
    pub message: String,
}

impl Violation {
    fn new(node_id: &str, rule: ViolationRule, message: impl Into<String>) -> Self {
        Violation {
            node_id: node_id.to_string(),
            rule,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.node_id, self.rule, self.message)
    }
}

/// Checks every activity-tree invariant. Violations come out in pre-order.
pub fn validate_tree(tree: &ActivityTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let root = tree.root();
    if root.level != Level::Curriculum {
        out.push(Violation::new(
            &root.id,
            ViolationRule::RootNotCurriculum,
            format!("root cluster has level {}, expected curriculum", root.level),
        ));
    }
    walk_cluster(root, &mut seen, &mut out);
    out
}

fn check_id(id: &str, seen: &mut BTreeSet<String>, out: &mut Vec<Violation>) {
    if id.is_empty() {
        out.push(Violation::new(id, ViolationRule::EmptyId, "id must be nonempty"));
    } else if !seen.insert(id.to_string()) {
        out.push(Violation::new(
            id,
            ViolationRule::DuplicateId,
            format!("id '{id}' is used more than once"),
        ));
    }
}

fn walk_cluster(c: &Cluster, seen: &mut BTreeSet<String>, out: &mut Vec<Violation>) {
    check_id(&c.id, seen, out);
    if c.children.is_empty() {
        out.push(Violation::new(
            &c.id,
            ViolationRule::ChildlessCluster,
            format!("{} '{}' has no children", c.level, c.id),
        ));
    }
    for child in &c.children {
        match child {
            Node::Cluster(sub) => {
                if sub.level <= c.level {
                    out.push(Violation::new(
                        &sub.id,
                        ViolationRule::LevelInversion,
                        format!("{} '{}' cannot be nested in {} '{}'", sub.level, sub.id, c.level, c.id),
                    ));
                }
                walk_cluster(sub, seen, out);
            }
            Node::Item(item) => {
                check_id(&item.id, seen, out);
                for unit in &item.units {
                    check_id(&unit.id, seen, out);
                    check_unit(unit, out);
                }
            }
        }
    }
}

fn check_unit(unit: &ContentUnit, out: &mut Vec<Violation>) {
    match unit.kind {
        UnitKind::Asset => {
            if unit.mastery_score.is_some() {
                out.push(Violation::new(
                    &unit.id,
                    ViolationRule::MasteryOnAsset,
                    "mastery_score is only allowed on assessment units",
                ));
            }
            if unit.time_limit.is_some() {
                out.push(Violation::new(
                    &unit.id,
                    ViolationRule::TimeLimitOnAsset,
                    "time_limit is only allowed on assessment units",
                ));
            }
        }
        UnitKind::AssessmentAsset => {
            if let Some(m) = unit.mastery_score {
                if !(0.0..=1.0).contains(&m) {
                    out.push(Violation::new(
                        &unit.id,
                        ViolationRule::MasteryOutOfRange,
                        format!("mastery_score {m} is outside [0, 1]"),
                    ));
                }
            }
            if unit.time_limit == Some(0) {
                out.push(Violation::new(
                    &unit.id,
                    ViolationRule::TimeLimitZero,
                    "time_limit must be a positive number of ticks",
                ));
            }
        }
    }
}
