//! Synthetic courses for benchmarks.

use seqchart_core::content::{ActivityTree, Cluster, ContentUnit, Item, Level, Node};

/// A curriculum of `lessons` lessons, each holding `items` items of
/// `units` units. Every item ends with an assessment.
pub fn course(lessons: usize, items: usize, units: usize) -> ActivityTree {
    let mut n = 0;
    let lessons = (1..=lessons)
        .map(|l| {
            let children = (1..=items)
                .map(|i| {
                    let units = (1..=units)
                        .map(|u| {
                            n += 1;
                            if u == units {
                                ContentUnit::assessment(format!("Q{n}"), format!("q{n}.json"), Some(0.7), None)
                            } else {
                                ContentUnit::asset(format!("A{n}"), format!("a{n}.html"))
                            }
                        })
                        .collect();
                    Node::from(Item::new(format!("I{l}_{i}"), units))
                })
                .collect();
            Node::from(Cluster::new(format!("L{l}"), Level::Lesson, children))
        })
        .collect();
    ActivityTree::new(Cluster::new("C", Level::Curriculum, lessons))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let t = course(3, 4, 2);
        assert_eq!(t.items().len(), 12);
        assert_eq!(t.unit_count(), 24);
        assert!(seqchart_core::compiler::compile(&t).is_ok());
    }
}
