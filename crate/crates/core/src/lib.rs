//! Statechart-based sequencing and navigation for e-learning content.
//!
//! * [`content`]: activity trees and the manifest format.
//! * [`chart`]: the hierarchical statechart interpreter.
//! * [`compiler`]: activity tree to statechart compilation.
//! * [`strategy`]: composable chart transformations encoding learning strategies.
//! * [`sim`]: scripted learners, traces, reachability and population statistics.

pub mod chart;
pub mod compiler;
pub mod content;
pub mod sim;
pub mod strategy;

pub use chart::{
    check_chart, initial_configuration, step, Configuration, EngineError, EvalContext, Event, Outcome, StateId,
    Statechart,
};
pub use content::{parse_manifest, validate_tree, ActivityTree};
