#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use seqchart_core::chart::Event;
use seqchart_core::content::{ActivityTree, Cluster, ContentUnit, Item, Level, Node};
use seqchart_core::strategy::{AttemptLimitAction, Strategy as Strat};

pub fn asset(id: &str) -> ContentUnit {
    ContentUnit::asset(id, format!("assets/{id}.html"))
}

pub fn quiz(id: &str, mastery: f64) -> ContentUnit {
    ContentUnit::assessment(id, format!("quiz/{id}.json"), Some(mastery), None)
}

pub fn item(id: &str, units: Vec<ContentUnit>) -> Node {
    Item::new(id, units).into()
}

pub fn curriculum(children: Vec<Node>) -> ActivityTree {
    ActivityTree::new(Cluster::new("C", Level::Curriculum, children))
}

/// {C: [I1: A1, Q1]}
pub fn asset_then_quiz() -> ActivityTree {
    curriculum(vec![item("I1", vec![asset("A1"), quiz("Q1", 0.6)])])
}

#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub depth: usize,
    pub items: usize,
    pub units: usize,
}

pub const SMALL: Bounds = Bounds {
    depth: 3,
    items: 6,
    units: 3,
};

pub const LARGE: Bounds = Bounds {
    depth: 4,
    items: 8,
    units: 4,
};

#[derive(Debug, Clone)]
enum Shape {
    Item(Vec<UnitShape>),
    Cluster(Vec<Shape>),
}

#[derive(Debug, Clone)]
struct UnitShape {
    assessment: bool,
    /// mastery in tenths, 1..=10
    mastery: u8,
    time_limit: Option<u64>,
}

fn unit_shape() -> impl Strategy<Value = UnitShape> {
    (any::<bool>(), 1u8..=10, prop::option::weighted(0.2, 2u64..6)).prop_map(|(assessment, mastery, time_limit)| {
        UnitShape {
            assessment,
            mastery,
            time_limit: time_limit.filter(|_| assessment),
        }
    })
}

fn shape(b: Bounds) -> impl Strategy<Value = Shape> {
    let leaf = prop::collection::vec(unit_shape(), 0..=b.units).prop_map(Shape::Item);
    leaf.prop_recursive(b.depth.saturating_sub(2) as u32, b.items as u32, 3, |inner| {
        prop::collection::vec(inner, 1..=3).prop_map(Shape::Cluster)
    })
}

fn count_items(s: &Shape) -> usize {
    match s {
        Shape::Item(_) => 1,
        Shape::Cluster(cs) => cs.iter().map(count_items).sum(),
    }
}

fn height(s: &Shape) -> usize {
    match s {
        Shape::Item(_) => 1,
        Shape::Cluster(cs) => 1 + cs.iter().map(height).max().unwrap_or(0),
    }
}

struct Namer {
    clusters: usize,
    items: usize,
    units: usize,
}

fn build(s: &Shape, level_rank: usize, names: &mut Namer) -> Node {
    match s {
        Shape::Item(units) => {
            names.items += 1;
            let id = format!("I{}", names.items);
            let units = units
                .iter()
                .map(|u| {
                    names.units += 1;
                    if u.assessment {
                        ContentUnit::assessment(
                            format!("Q{}", names.units),
                            format!("quiz/{}.json", names.units),
                            Some(f64::from(u.mastery) / 10.0),
                            u.time_limit,
                        )
                    } else {
                        ContentUnit::asset(format!("A{}", names.units), format!("assets/{}.html", names.units))
                    }
                })
                .collect();
            Item::new(id, units).into()
        }
        Shape::Cluster(children) => {
            names.clusters += 1;
            let id = format!("K{}", names.clusters);
            let level = Level::ALL[level_rank.min(Level::ALL.len() - 1)];
            let children = children.iter().map(|c| build(c, level_rank + 1, names)).collect();
            Cluster::new(id, level, children).into()
        }
    }
}

/// Valid trees within `b`: at most `b.depth` levels counting the curriculum
/// root, at most `b.items` items and `b.units` units per item.
pub fn tree(b: Bounds) -> impl Strategy<Value = ActivityTree> {
    prop::collection::vec(shape(b), 1..=3)
        .prop_filter("within bounds", move |top| {
            top.iter().map(count_items).sum::<usize>() <= b.items && top.iter().map(height).max().unwrap_or(0) < b.depth
        })
        .prop_map(|top| {
            let mut names = Namer {
                clusters: 0,
                items: 0,
                units: 0,
            };
            let children = top.iter().map(|s| build(s, 1, &mut names)).collect();
            ActivityTree::new(Cluster::new("C", Level::Curriculum, children))
        })
}
pub fn random_event(rng: &mut ChaCha8Rng) -> Option<Event> {
    Some(match rng.gen_range(0..6) {
        0 => Event::Enter,
        1 => Event::Next,
        2 => Event::Back,
        3 | 4 => Event::submit(rng.gen_range(0..=10) as f64 / 10.0),
        _ => return None, // idle tick
    })
}

pub fn strat() -> impl Strategy<Value = Strat> {
    prop_oneof![
        Just(Strat::Identity),
        Just(Strat::LinearLock),
        Just(Strat::SkipAhead),
        (0u8..=10).prop_map(|t| Strat::MasteryThreshold(f64::from(t) / 10.0)),
        (1u32..4, any::<bool>()).prop_map(|(limit, skip)| Strat::MaxAttempts {
            limit,
            action: if skip {
                AttemptLimitAction::Skip
            } else {
                AttemptLimitAction::Remediate
            },
        }),
    ]
}

pub fn pipeline() -> impl Strategy<Value = Vec<Strat>> {
    prop::collection::vec(strat(), 0..4)
}

pub mod oracle;
