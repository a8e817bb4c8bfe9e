//! Activity-tree data model for content packages.
//!
//! A package is a curriculum tree: clusters (curriculum, course, section,
//! lesson, topic) contain child clusters or items, and items hold an ordered
//! list of content units. An item's unit list is read recursively as a head
//! unit followed by the rest; an empty list is a legal item with no content.

mod manifest;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use manifest::{parse_manifest, to_manifest_string, ManifestError};
pub use validate::{validate_tree, Violation, ViolationRule};

/// Mastery score used for assessment units that do not declare one.
pub const DEFAULT_MASTERY_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    #[serde(rename = "asset")]
    Asset,
    #[serde(rename = "assessment")]
    AssessmentAsset,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Asset => "asset",
            UnitKind::AssessmentAsset => "assessment",
        }
    }
}

/// One piece of deliverable content inside an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentUnit {
    pub id: String,
    pub kind: UnitKind,
    pub payload_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mastery_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<u64>,
}

impl ContentUnit {
    pub fn asset(id: impl Into<String>, payload_ref: impl Into<String>) -> Self {
        ContentUnit {
            id: id.into(),
            kind: UnitKind::Asset,
            payload_ref: payload_ref.into(),
            mastery_score: None,
            time_limit: None,
        }
    }

    pub fn assessment(
        id: impl Into<String>,
        payload_ref: impl Into<String>,
        mastery_score: Option<f64>,
        time_limit: Option<u64>,
    ) -> Self {
        ContentUnit {
            id: id.into(),
            kind: UnitKind::AssessmentAsset,
            payload_ref: payload_ref.into(),
            mastery_score,
            time_limit,
        }
    }

    pub fn is_assessment(&self) -> bool {
        self.kind == UnitKind::AssessmentAsset
    }

    /// The pass threshold for an assessment, falling back to the default.
    pub fn effective_mastery(&self) -> f64 {
        self.mastery_score.unwrap_or(DEFAULT_MASTERY_SCORE)
    }
}

/// A leaf activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub units: Vec<ContentUnit>,
}

impl Item {
    pub fn new(id: impl Into<String>, units: Vec<ContentUnit>) -> Self {
        Item { id: id.into(), units }
    }

    /// Head/rest view of the unit list.
    pub fn split_head(&self) -> Option<(&ContentUnit, &[ContentUnit])> {
        self.units.split_first()
    }
}

/// Cluster levels, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Curriculum,
    Course,
    Section,
    Lesson,
    Topic,
}

impl Level {
    pub const ALL: [Level; 5] = [
        Level::Curriculum,
        Level::Course,
        Level::Section,
        Level::Lesson,
        Level::Topic,
    ];

    /// Depth rank; items rank below every cluster level.
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Curriculum => "curriculum",
            Level::Course => "course",
            Level::Section => "section",
            Level::Lesson => "lesson",
            Level::Topic => "topic",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub level: Level,
    pub children: Vec<Node>,
}

impl Cluster {
    pub fn new(id: impl Into<String>, level: Level, children: Vec<Node>) -> Self {
        Cluster {
            id: id.into(),
            level,
            children,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Cluster(Cluster),
    Item(Item),
}

impl Node {
    pub fn id(&self) -> &str {
        match self {
            Node::Cluster(c) => &c.id,
            Node::Item(i) => &i.id,
        }
    }

    pub fn as_cluster(&self) -> Option<&Cluster> {
        match self {
            Node::Cluster(c) => Some(c),
            Node::Item(_) => None,
        }
    }

    pub fn as_item(&self) -> Option<&Item> {
        match self {
            Node::Item(i) => Some(i),
            Node::Cluster(_) => None,
        }
    }
}

impl From<Cluster> for Node {
    fn from(c: Cluster) -> Self {
        Node::Cluster(c)
    }
}

impl From<Item> for Node {
    fn from(i: Item) -> Self {
        Node::Item(i)
    }
}

/// Position of an id inside the tree: child indices from the root, plus the
/// unit index when the id names a content unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreePath {
    Node(Vec<usize>),
    Unit(Vec<usize>, usize),
}

/// Borrowed view of whatever an id resolves to.
#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Cluster(&'a Cluster),
    Item(&'a Item),
    Unit(&'a Item, &'a ContentUnit),
}

/// A content package rooted at a curriculum cluster.
///
/// Built with [`ActivityTree::new`], which never fails: a hand-built tree may
/// violate invariants and [`validate_tree`] reports them. Duplicate ids keep
/// their first occurrence in the index.
#[derive(Debug, Clone)]
pub struct ActivityTree {
    root: Cluster,
    index: BTreeMap<String, TreePath>,
}

impl PartialEq for ActivityTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl ActivityTree {
    pub fn new(root: Cluster) -> Self {
        let mut index = BTreeMap::new();
        let mut path = Vec::new();
        index_cluster(&root, &mut path, &mut index);
        ActivityTree { root, index }
    }

    pub fn root(&self) -> &Cluster {
        &self.root
    }

    pub fn into_root(self) -> Cluster {
        self.root
    }

    pub fn path_of(&self, id: &str) -> Option<&TreePath> {
        self.index.get(id)
    }

    pub fn get(&self, id: &str) -> Option<NodeRef<'_>> {
        match self.index.get(id)? {
            TreePath::Node(path) => Some(match self.node_at(path)? {
                NodeLike::Cluster(c) => NodeRef::Cluster(c),
                NodeLike::Item(i) => NodeRef::Item(i),
            }),
            TreePath::Unit(path, k) => match self.node_at(path)? {
                NodeLike::Item(i) => Some(NodeRef::Unit(i, i.units.get(*k)?)),
                NodeLike::Cluster(_) => None,
            },
        }
    }

    fn node_at(&self, path: &[usize]) -> Option<NodeLike<'_>> {
        let mut cur = NodeLike::Cluster(&self.root);
        for &k in path {
            cur = match cur {
                NodeLike::Cluster(c) => match c.children.get(k)? {
                    Node::Cluster(c) => NodeLike::Cluster(c),
                    Node::Item(i) => NodeLike::Item(i),
                },
                NodeLike::Item(_) => return None,
            };
        }
        Some(cur)
    }

    /// All items in document order.
    pub fn items(&self) -> Vec<&Item> {
        let mut out = Vec::new();
        collect_items(&self.root, &mut out);
        out
    }

    /// Every cluster in pre-order, root first.
    pub fn clusters(&self) -> Vec<&Cluster> {
        let mut out = Vec::new();
        collect_clusters(&self.root, &mut out);
        out
    }

    /// Total number of tree nodes (clusters and items, not units).
    pub fn node_count(&self) -> usize {
        self.clusters().len() + self.items().len()
    }

    pub fn unit_count(&self) -> usize {
        self.items().iter().map(|i| i.units.len()).sum()
    }

    pub fn has_assessment(&self) -> bool {
        self.items()
            .iter()
            .any(|i| i.units.iter().any(ContentUnit::is_assessment))
    }

    /// Returns a copy of the tree with `f` applied to every unit.
    pub fn map_units(&self, mut f: impl FnMut(&ContentUnit) -> ContentUnit) -> ActivityTree {
        fn go(c: &Cluster, f: &mut dyn FnMut(&ContentUnit) -> ContentUnit) -> Cluster {
            Cluster {
                id: c.id.clone(),
                level: c.level,
                children: c
                    .children
                    .iter()
                    .map(|n| match n {
                        Node::Cluster(c) => Node::Cluster(go(c, f)),
                        Node::Item(i) => Node::Item(Item {
                            id: i.id.clone(),
                            units: i.units.iter().map(&mut *f).collect(),
                        }),
                    })
                    .collect(),
            }
        }
        ActivityTree::new(go(&self.root, &mut f))
    }
}

enum NodeLike<'a> {
    Cluster(&'a Cluster),
    Item(&'a Item),
}

fn index_cluster(c: &Cluster, path: &mut Vec<usize>, index: &mut BTreeMap<String, TreePath>) {
    index
        .entry(c.id.clone())
        .or_insert_with(|| TreePath::Node(path.clone()));
    for (k, child) in c.children.iter().enumerate() {
        path.push(k);
        match child {
            Node::Cluster(sub) => index_cluster(sub, path, index),
            Node::Item(item) => {
                index
                    .entry(item.id.clone())
                    .or_insert_with(|| TreePath::Node(path.clone()));
                for (u, unit) in item.units.iter().enumerate() {
                    index
                        .entry(unit.id.clone())
                        .or_insert_with(|| TreePath::Unit(path.clone(), u));
                }
            }
        }
        path.pop();
    }
}

fn collect_items<'a>(c: &'a Cluster, out: &mut Vec<&'a Item>) {
    for child in &c.children {
        match child {
            Node::Cluster(sub) => collect_items(sub, out),
            Node::Item(i) => out.push(i),
        }
    }
}

fn collect_clusters<'a>(c: &'a Cluster, out: &mut Vec<&'a Cluster>) {
    out.push(c);
    for child in &c.children {
        if let Node::Cluster(sub) = child {
            collect_clusters(sub, out);
        }
    }
}
